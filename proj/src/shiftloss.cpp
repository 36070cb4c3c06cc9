#include "chm/shiftloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <unordered_map>

namespace chm {

void PixelLossKind::validate() const {
    if (type == Type::huber && !(delta > 0.0 && std::isfinite(delta))) {
        throw InputError("Huber delta must be positive and finite");
    }
}

std::vector<Shift> shift_candidates(double radius) {
    if (!(radius >= 0.0) || !std::isfinite(radius)) throw InputError("shift radius must be a finite non-negative number");
    if (radius > 256.0) throw InputError("shift radius larger than 256 pixels");
    const double limit = radius * radius * (1.0 + 1e-9);
    const int reach = static_cast<int>(std::floor(radius + 1e-9));
    std::vector<Shift> out;
    for (int dx = -reach; dx <= reach; ++dx) {
        for (int dy = -reach; dy <= reach; ++dy) {
            if (dx * dx + dy * dy <= limit) out.push_back({dx, dy});
        }
    }
    std::ranges::sort(out, [](const Shift& a, const Shift& b) {
        if (a.norm2() != b.norm2()) return a.norm2() < b.norm2();
        if (a.dx != b.dx) return a.dx < b.dx;
        return a.dy < b.dy;
    });
    return out;
}

void ShiftLossConfig::validate() const {
    pixel_loss.validate();
    shift_candidates(radius);
}

PredictionView::PredictionView(std::span<const double> v, int w, int h) : values(v), width(w), height(h) {
    if (w < 1 || h < 1) throw InputError("prediction grid must be at least 1x1");
    if (v.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
        throw StructuralError("prediction buffer size does not match width x height");
    }
}

ShiftLoss::ShiftLoss(ShiftLossConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.pixel_loss.validate();
    candidates_ = shift_candidates(cfg_.radius);
}

namespace {

std::vector<Measurement> canonical(const LabelTrack& t) {
    std::vector<Measurement> ms = t.measurements;
    std::ranges::sort(ms, [](const Measurement& a, const Measurement& b) {
        if (a.py != b.py) return a.py < b.py;
        if (a.px != b.px) return a.px < b.px;
        return a.h < b.h;
    });
    return ms;
}

struct Score {
    double sum = 0.0;
    std::size_t n = 0;
};

Score score_at(PredictionView pred, std::span<const Measurement> ms, Shift s, const PixelLossKind& kind) {
    Score sc;
    for (const auto& m : ms) {
        const int x = m.px + s.dx, y = m.py + s.dy;
        if (x < 0 || y < 0 || x >= pred.width || y >= pred.height) continue;
        sc.sum += pixel_loss(pred(x, y), m.h, kind).value;
        ++sc.n;
    }
    return sc;
}

void check_labels(PredictionView pred, const SparseLabels& labels) {
    if (labels.width != pred.width || labels.height != pred.height) {
        throw StructuralError("labels patch size differs from prediction grid");
    }
    for (const auto& t : labels.tracks) {
        for (const auto& m : t.measurements) {
            if (m.px < 0 || m.py < 0 || m.px >= pred.width || m.py >= pred.height) {
                throw InputError("label measurement outside the prediction grid (track " + t.track_key + ")");
            }
            if (!std::isfinite(m.h)) throw InputError("non-finite label height (track " + t.track_key + ")");
        }
    }
}

}  // namespace

std::vector<double> ShiftLoss::candidate_scores(PredictionView pred, const LabelTrack& track, int width,
                                                int height) const {
    if (width != pred.width || height != pred.height) throw StructuralError("track grid differs from prediction grid");
    const auto ms = canonical(track);
    std::vector<double> out;
    out.reserve(candidates_.size());
    for (const Shift& s : candidates_) {
        const Score sc = score_at(pred, ms, s, cfg_.pixel_loss);
        out.push_back(sc.n ? sc.sum / static_cast<double>(sc.n) : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

LossReport ShiftLoss::evaluate(PredictionView pred, const SparseLabels& labels, bool with_gradient) const {
    check_labels(pred, labels);
    LossReport rep;
    rep.per_track.reserve(labels.tracks.size());
    std::vector<std::vector<Measurement>> sorted;
    sorted.reserve(labels.tracks.size());
    const std::span<const Shift> fixed(candidates_.data(), 1);  // (0,0) leads the candidate list

    for (const auto& t : labels.tracks) {
        auto ms = canonical(t);
        TrackLoss tl{t.track_key, {0, 0}, 0.0, 0, ms.size()};
        const auto cands = ms.size() < cfg_.min_track_size_for_shift ? fixed : std::span<const Shift>(candidates_);
        double best = std::numeric_limits<double>::infinity();
        for (const Shift& s : cands) {
            const Score sc = score_at(pred, ms, s, cfg_.pixel_loss);
            if (sc.n == 0) continue;
            const double mean = sc.sum / static_cast<double>(sc.n);
            if (std::isnan(mean)) throw NumericalError("non-finite pixel loss in track " + t.track_key);
            if (mean < best) {
                best = mean;
                tl.shift = s;
                tl.loss_sum = sc.sum;
                tl.in_bounds = sc.n;
            }
        }
        rep.n_effective += tl.in_bounds;
        rep.per_track.push_back(std::move(tl));
        sorted.push_back(std::move(ms));
    }

    // Tracks are summed in an order fixed by their content alone, so the total
    // is independent of input order and monotone in every per-track sum.
    std::vector<std::size_t> order(rep.per_track.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::ranges::sort(order, [&](std::size_t a, std::size_t b) {
        if (rep.per_track[a].track_key != rep.per_track[b].track_key) {
            return rep.per_track[a].track_key < rep.per_track[b].track_key;
        }
        return std::ranges::lexicographical_compare(sorted[a], sorted[b], [](const Measurement& p, const Measurement& q) {
            return std::tie(p.py, p.px, p.h) < std::tie(q.py, q.px, q.h);
        });
    });
    double total = 0.0;
    for (std::size_t i : order) total += rep.per_track[i].loss_sum;

    rep.empty = rep.n_effective == 0;
    rep.value = rep.empty ? 0.0 : total / static_cast<double>(rep.n_effective);
    if (!std::isfinite(rep.value)) throw NumericalError("shift-resilient loss is not finite");

    if (with_gradient) {
        Grid<double> grad(pred.width, pred.height, 0.0);
        if (!rep.empty) {
            std::vector<std::pair<std::size_t, double>> parts;
            parts.reserve(rep.n_effective);
            for (std::size_t i = 0; i < sorted.size(); ++i) {
                const Shift s = rep.per_track[i].shift;
                for (const auto& m : sorted[i]) {
                    const int x = m.px + s.dx, y = m.py + s.dy;
                    if (x < 0 || y < 0 || x >= pred.width || y >= pred.height) continue;
                    parts.emplace_back(grad.index(x, y), pixel_loss(pred(x, y), m.h, cfg_.pixel_loss).derivative);
                }
            }
            std::ranges::sort(parts);
            const double scale = 1.0 / static_cast<double>(rep.n_effective);
            auto g = grad.values();
            for (std::size_t i = 0; i < parts.size();) {
                const std::size_t idx = parts[i].first;
                double acc = 0.0;
                for (; i < parts.size() && parts[i].first == idx; ++i) acc += parts[i].second;
                g[idx] = acc * scale;
            }
        }
        rep.gradient = std::move(grad);
    }
    return rep;
}

LossReport loss_ns(PredictionView pred, const SparseLabels& labels, const PixelLossKind& kind) {
    return ShiftLoss({0.0, kind, 10}).evaluate(pred, labels, false);
}

LossReport loss_s(PredictionView pred, const SparseLabels& labels, const ShiftLossConfig& cfg) {
    return ShiftLoss(cfg).evaluate(pred, labels, false);
}

LossReport loss_s_grad(PredictionView pred, const SparseLabels& labels, const ShiftLossConfig& cfg) {
    return ShiftLoss(cfg).evaluate(pred, labels, true);
}

ArrayLossResult loss_forward_backward(std::span<const double> pred, int height, int width,
                                      std::span<const std::int32_t> px, std::span<const std::int32_t> py,
                                      std::span<const double> h, std::span<const std::int64_t> track_key,
                                      const ShiftLossConfig& cfg) {
    const PredictionView view(pred, width, height);
    if (px.size() != py.size() || px.size() != h.size() || px.size() != track_key.size()) {
        throw StructuralError("measurement arrays differ in length");
    }
    for (double v : pred) {
        if (!std::isfinite(v)) throw InputError("prediction contains non-finite values");
    }
    SparseLabels labels{width, height, {}};
    std::vector<std::int64_t> keys;
    std::unordered_map<std::int64_t, std::size_t> slot;
    for (std::size_t i = 0; i < px.size(); ++i) {
        auto [it, fresh] = slot.try_emplace(track_key[i], labels.tracks.size());
        if (fresh) {
            labels.tracks.push_back({std::to_string(track_key[i]), {}});
            keys.push_back(track_key[i]);
        }
        labels.tracks[it->second].measurements.push_back({px[i], py[i], h[i]});
    }
    LossReport rep = ShiftLoss(cfg).evaluate(view, labels, true);
    ArrayLossResult out;
    out.value = rep.value;
    out.n_effective = rep.n_effective;
    auto g = rep.gradient->values();
    out.gradient.assign(g.begin(), g.end());
    out.track_keys = std::move(keys);
    for (const auto& t : rep.per_track) out.shifts.push_back(t.shift);
    return out;
}

}  // namespace chm
