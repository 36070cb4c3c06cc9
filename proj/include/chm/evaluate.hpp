#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chm/gedi.hpp"
#include "chm/raster.hpp"

namespace chm {

struct PredLabelPair {
    double prediction = 0.0;
    double label = 0.0;
};

struct LabelFilter {
    /// Keep pairs whose label is strictly greater.
    std::optional<double> label_gt;

    bool keeps(double label) const { return !label_gt || label > *label_gt; }
    /// "none" or "label_gt:<m>".
    std::string describe() const;
};

/// Labels at or below this are left out of MAPE.
inline constexpr double mape_min_label = 0.5;

struct MetricsReport {
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;
    /// rmse / mean(label)
    double rrmse = 0.0;
    /// Mean |p - y| / y over labels > 0.5 m; absent when no label qualifies.
    std::optional<double> mape;
    /// 1 - SS_res / SS_tot; absent when labels have zero variance. Not clamped.
    std::optional<double> r2;
    std::size_t n_pairs = 0;
    std::size_t n_mape = 0;
    std::string filter = "none";
};

/// EmptyReportError when no pair survives the filter.
MetricsReport compute_metrics(std::span<const PredLabelPair> pairs, const LabelFilter& filter = {});

/// Coefficient of determination; nullopt for constant labels or no pairs.
std::optional<double> r_squared(std::span<const PredLabelPair> pairs);

struct BoxStats {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    /// Most extreme errors within 1.5 IQR of the quartiles.
    double whisker_low = 0.0;
    double whisker_high = 0.0;
    double mean = 0.0;
};

struct BinStats {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    std::optional<BoxStats> stats;
};

/// Signed error (prediction - label) grouped by label into [lo, lo + width)
/// bins over [0, max_label). Quartiles use linear interpolation between order
/// statistics.
std::vector<BinStats> bin_errors(std::span<const PredLabelPair> pairs, double bin_width = 10.0,
                                 double max_label = 60.0);

struct ScatterSummary {
    double cell = 1.0;
    double max_value = 60.0;
    /// density(i, j): pairs with label in cell i and prediction in cell j.
    Grid<std::uint64_t> density;
    std::size_t outside = 0;
    std::optional<double> r2;
};

/// 2-D histogram over [0, max_value]^2; values equal to max_value fall in the last cell.
ScatterSummary scatter_summary(std::span<const PredLabelPair> pairs, double cell = 1.0, double max_value = 60.0);

/// Unshifted pairs at every labelled pixel whose prediction is valid (band 0).
std::vector<PredLabelPair> pairs_from_raster(const MultiBandRaster& prediction, const SparseLabels& labels);

/// Columns: prediction,label
std::vector<PredLabelPair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, std::span<const PredLabelPair> pairs);

}  // namespace chm
