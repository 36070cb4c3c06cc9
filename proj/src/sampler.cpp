#include "chm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "chm/error.hpp"

namespace chm {

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

void SplitRatios::validate() const {
    if (!(train >= 0.0 && val >= 0.0 && test >= 0.0)) throw InputError("split ratios must be non-negative");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw InputError("split ratios must sum to 1");
}

std::uint64_t tile_hash(std::string_view tile_id, std::uint64_t seed) {
    // FNV-1a over the little-endian seed bytes and the id, then a splitmix64 finalizer.
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint8_t byte) {
        h ^= byte;
        h *= 0x100000001b3ull;
    };
    for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(seed >> (8 * i)));
    for (char c : tile_id) mix(static_cast<std::uint8_t>(c));
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

Split assign_split(std::string_view tile_id, const SplitRatios& ratios, std::uint64_t seed) {
    ratios.validate();
    const double u = static_cast<double>(tile_hash(tile_id, seed) >> 11) * 0x1.0p-53;
    if (u < ratios.train) return Split::train;
    if (u < ratios.train + ratios.val) return Split::val;
    if (ratios.test == 0.0) return ratios.val > 0.0 ? Split::val : Split::train;
    return Split::test;
}

std::vector<PatchWeight> compute_weights(std::span<const PatchHeight> stats, const WeightPolicy& policy) {
    if (stats.empty()) throw InputError("compute_weights needs at least one patch");
    if (!(policy.bin_width > 0.0) || !(policy.min_weight > 0.0) || !(policy.max_weight >= policy.min_weight)) {
        throw InputError("invalid weight policy");
    }
    std::map<long long, std::size_t> freq;
    std::vector<long long> bins;
    bins.reserve(stats.size());
    for (const auto& s : stats) {
        if (!std::isfinite(s.mean_height)) throw InputError("patch mean height must be finite: " + s.patch_id);
        const auto b = static_cast<long long>(std::floor(s.mean_height / policy.bin_width));
        bins.push_back(b);
        ++freq[b];
    }
    const double total = static_cast<double>(stats.size());
    std::vector<PatchWeight> out;
    out.reserve(stats.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const double w = std::clamp(total / static_cast<double>(freq[bins[i]]), policy.min_weight, policy.max_weight);
        out.push_back({stats[i].patch_id, w});
        sum += w;
    }
    const double mean = sum / total;
    for (auto& w : out) w.weight /= mean;
    return out;
}

WeightedSampler::WeightedSampler(std::span<const PatchWeight> weights, std::uint64_t seed) : rng_(seed) {
    if (weights.empty()) throw InputError("sampler needs at least one weight");
    std::vector<double> w;
    w.reserve(weights.size());
    for (const auto& pw : weights) {
        if (!(pw.weight > 0.0) || !std::isfinite(pw.weight)) throw InputError("sample weights must be positive");
        w.push_back(pw.weight);
    }
    dist_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
}

std::size_t WeightedSampler::next() { return dist_(rng_); }

}  // namespace chm
