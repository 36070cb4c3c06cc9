#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chm/gedi.hpp"
#include "chm/raster.hpp"

namespace chm {

/// Pointwise regression loss applied to residual a = pred - target.
struct PixelLossKind {
    enum class Type { l1, l2, huber };

    Type type = Type::huber;
    /// Huber cutoff in meters; ignored for L1/L2.
    double delta = 3.0;

    static PixelLossKind l1() { return {Type::l1, 0.0}; }
    static PixelLossKind l2() { return {Type::l2, 0.0}; }
    static PixelLossKind huber(double delta = 3.0) { return {Type::huber, delta}; }

    void validate() const;
    bool operator==(const PixelLossKind&) const = default;
};

struct PixelLossValue {
    double value = 0.0;
    double derivative = 0.0;  // d value / d pred
};

/// L1: |a|, sign(a) (0 at a = 0). L2: a^2, 2a.
/// Huber: a^2/2 for |a| <= delta, else delta (|a| - delta/2); derivative a or delta sign(a).
inline PixelLossValue pixel_loss(double pred, double target, const PixelLossKind& kind) {
    const double a = pred - target;
    switch (kind.type) {
        case PixelLossKind::Type::l1:
            return {a < 0.0 ? -a : a, a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0)};
        case PixelLossKind::Type::l2:
            return {a * a, 2.0 * a};
        case PixelLossKind::Type::huber:
        default: {
            const double abs_a = a < 0.0 ? -a : a;
            if (abs_a <= kind.delta) return {0.5 * a * a, a};
            return {kind.delta * (abs_a - 0.5 * kind.delta), a > 0.0 ? kind.delta : -kind.delta};
        }
    }
}

/// Integer displacement of a whole track, in pixels.
struct Shift {
    int dx = 0;
    int dy = 0;

    int norm2() const { return dx * dx + dy * dy; }
    bool operator==(const Shift&) const = default;
};

/// Lattice shifts with Euclidean norm <= r, ordered by norm, then dx, then dy.
/// A relative slack of 1e-9 on r^2 keeps sqrt(2)-style radii inclusive.
std::vector<Shift> shift_candidates(double radius);

struct ShiftLossConfig {
    double radius = std::numbers::sqrt2;
    PixelLossKind pixel_loss = PixelLossKind::huber(3.0);
    /// Tracks with fewer measurements are never shifted.
    std::size_t min_track_size_for_shift = 10;

    void validate() const;
};

struct TrackLoss {
    std::string track_key;
    Shift shift;
    /// Sum of pixel losses over the in-bounds measurements at `shift`.
    double loss_sum = 0.0;
    std::size_t in_bounds = 0;
    std::size_t size = 0;
};

struct LossReport {
    double value = 0.0;
    std::size_t n_effective = 0;
    /// No measurement entered the loss; value is 0.
    bool empty = true;
    std::vector<TrackLoss> per_track;
    /// d value / d pred, present when requested.
    std::optional<Grid<double>> gradient;
};

/// Read-only W x H prediction in row-major order.
struct PredictionView {
    std::span<const double> values;
    int width = 0;
    int height = 0;

    PredictionView() = default;
    PredictionView(std::span<const double> v, int w, int h);
    PredictionView(const Grid<double>& g) : PredictionView(g.values(), g.width(), g.height()) {}  // NOLINT

    double operator()(int x, int y) const {
        return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
};

/// Shift-resilient loss with a fixed configuration.
///
/// Each track is scored at every candidate shift by the mean pixel loss over
/// its measurements that stay on the grid; candidates leaving no measurement on
/// the grid are discarded. The lowest score wins, ties going to the earlier
/// candidate (smaller norm, then lexicographic). The reported value is the sum
/// of the chosen per-track loss sums over the total in-bounds count.
///
/// Measurements are visited in a canonical pixel order and per-track sums are
/// added in sorted order, so results do not depend on track or measurement
/// order. Immutable; safe to call concurrently.
class ShiftLoss {
public:
    explicit ShiftLoss(ShiftLossConfig cfg);

    LossReport evaluate(PredictionView pred, const SparseLabels& labels, bool with_gradient) const;

    /// Mean pixel loss of one track at every candidate (NaN where the candidate
    /// leaves no measurement on the grid), in candidate order.
    std::vector<double> candidate_scores(PredictionView pred, const LabelTrack& track, int width, int height) const;

    const ShiftLossConfig& config() const { return cfg_; }
    std::span<const Shift> candidates() const { return candidates_; }

private:
    ShiftLossConfig cfg_;
    std::vector<Shift> candidates_;
};

/// Unshifted loss: mean pixel loss over all measurements.
LossReport loss_ns(PredictionView pred, const SparseLabels& labels, const PixelLossKind& kind);
LossReport loss_s(PredictionView pred, const SparseLabels& labels, const ShiftLossConfig& cfg);
/// As loss_s, with the gradient taken at the chosen shifts.
LossReport loss_s_grad(PredictionView pred, const SparseLabels& labels, const ShiftLossConfig& cfg);

// ---------------------------------------------------------------- flat arrays

/// Result of the array-level entry point used by language bindings.
struct ArrayLossResult {
    double value = 0.0;
    std::size_t n_effective = 0;
    /// Row-major, same shape as the prediction.
    std::vector<double> gradient;
    /// Distinct track keys in order of first appearance, with their shifts.
    std::vector<std::int64_t> track_keys;
    std::vector<Shift> shifts;
};

/// Forward and backward pass over an H x W row-major prediction and flat
/// measurement arrays (one entry per measurement). StructuralError on length or
/// shape mismatch, InputError on non-finite inputs or out-of-bounds pixels.
ArrayLossResult loss_forward_backward(std::span<const double> pred, int height, int width,
                                      std::span<const std::int32_t> px, std::span<const std::int32_t> py,
                                      std::span<const double> h, std::span<const std::int64_t> track_key,
                                      const ShiftLossConfig& cfg);

}  // namespace chm
