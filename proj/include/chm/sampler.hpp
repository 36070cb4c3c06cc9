#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chm {

enum class Split { train, val, test };

std::string_view to_string(Split s);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;

    /// InputError unless all ratios are non-negative and sum to 1 (within 1e-9).
    void validate() const;
};

/// Stable 64-bit hash of (seed, tile_id); identical on every platform.
std::uint64_t tile_hash(std::string_view tile_id, std::uint64_t seed);

/// Split of a tile: its hash mapped to [0, 1) against the cumulative ratios.
/// Every patch cut from the tile inherits this label.
Split assign_split(std::string_view tile_id, const SplitRatios& ratios, std::uint64_t seed);

struct PatchHeight {
    std::string patch_id;
    double mean_height = 0.0;
};

struct PatchWeight {
    std::string patch_id;
    double weight = 1.0;
};

struct WeightPolicy {
    double bin_width = 10.0;
    double min_weight = 0.1;
    double max_weight = 10.0;
};

/// Inverse frequency of each patch's mean-height bin (total / bin count),
/// clipped to [min_weight, max_weight], then scaled to mean 1.
std::vector<PatchWeight> compute_weights(std::span<const PatchHeight> stats, const WeightPolicy& policy = {});

/// Draws patch indices with probability proportional to their weights.
class WeightedSampler {
public:
    WeightedSampler(std::span<const PatchWeight> weights, std::uint64_t seed);
    std::size_t next();

private:
    std::mt19937_64 rng_;
    std::discrete_distribution<std::size_t> dist_;
};

}  // namespace chm
