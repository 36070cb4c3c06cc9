#include "chm/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "chm/csv.hpp"

namespace chm {
namespace {

// Neumaier-compensated running sum; keeps aggregates reproducible to well below 1e-9.
class Sum {
public:
    void add(double v) {
        const double t = sum_ + v;
        comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double quantile(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

std::string LabelFilter::describe() const {
    if (!label_gt) return "none";
    std::ostringstream ss;
    ss << "label_gt:" << *label_gt;
    return ss.str();
}

std::optional<double> r_squared(std::span<const PredLabelPair> pairs) {
    if (pairs.empty()) return std::nullopt;
    Sum ys;
    for (const auto& p : pairs) ys.add(p.label);
    const double ybar = ys.value() / static_cast<double>(pairs.size());
    Sum res, tot;
    for (const auto& p : pairs) {
        res.add((p.prediction - p.label) * (p.prediction - p.label));
        tot.add((p.label - ybar) * (p.label - ybar));
    }
    if (tot.value() == 0.0) return std::nullopt;
    return 1.0 - res.value() / tot.value();
}

MetricsReport compute_metrics(std::span<const PredLabelPair> pairs, const LabelFilter& filter) {
    std::vector<PredLabelPair> kept;
    kept.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (!std::isfinite(p.prediction) || !std::isfinite(p.label)) throw InputError("pairs must be finite");
        if (filter.keeps(p.label)) kept.push_back(p);
    }
    if (kept.empty()) throw EmptyReportError("no pairs remain after filter " + filter.describe());
    MetricsReport r;
    r.filter = filter.describe();
    r.n_pairs = kept.size();
    Sum abs_err, sq_err, labels, ape;
    for (const auto& p : kept) {
        const double e = p.prediction - p.label;
        abs_err.add(std::abs(e));
        sq_err.add(e * e);
        labels.add(p.label);
        if (p.label > mape_min_label) {
            ape.add(std::abs(e) / p.label);
            ++r.n_mape;
        }
    }
    const double n = static_cast<double>(kept.size());
    r.mae = abs_err.value() / n;
    r.mse = sq_err.value() / n;
    r.rmse = std::sqrt(r.mse);
    r.rrmse = r.rmse / (labels.value() / n);
    if (r.n_mape) r.mape = ape.value() / static_cast<double>(r.n_mape);
    r.r2 = r_squared(kept);
    return r;
}

std::vector<BinStats> bin_errors(std::span<const PredLabelPair> pairs, double bin_width, double max_label) {
    if (!(bin_width > 0.0) || !(max_label > 0.0)) throw InputError("bin width and range must be positive");
    const auto nbins = static_cast<std::size_t>(std::ceil(max_label / bin_width - 1e-12));
    std::vector<std::vector<double>> errs(nbins);
    for (const auto& p : pairs) {
        if (!(p.label >= 0.0) || !(p.label < max_label)) continue;
        const auto b = std::min(static_cast<std::size_t>(std::floor(p.label / bin_width)), nbins - 1);
        errs[b].push_back(p.prediction - p.label);
    }
    std::vector<BinStats> out;
    for (std::size_t b = 0; b < nbins; ++b) {
        BinStats bs;
        bs.lo = static_cast<double>(b) * bin_width;
        bs.hi = std::min(max_label, bs.lo + bin_width);
        bs.count = errs[b].size();
        if (bs.count) {
            auto& e = errs[b];
            std::ranges::sort(e);
            BoxStats st;
            st.median = quantile(e, 0.5);
            st.q1 = quantile(e, 0.25);
            st.q3 = quantile(e, 0.75);
            const double iqr = st.q3 - st.q1;
            const double lo_fence = st.q1 - 1.5 * iqr, hi_fence = st.q3 + 1.5 * iqr;
            st.whisker_low = *std::ranges::find_if(e, [&](double v) { return v >= lo_fence; });
            st.whisker_high = *std::find_if(e.rbegin(), e.rend(), [&](double v) { return v <= hi_fence; });
            Sum s;
            for (double v : e) s.add(v);
            st.mean = s.value() / static_cast<double>(e.size());
            bs.stats = st;
        }
        out.push_back(bs);
    }
    return out;
}

ScatterSummary scatter_summary(std::span<const PredLabelPair> pairs, double cell, double max_value) {
    if (!(cell > 0.0) || !(max_value > 0.0)) throw InputError("scatter cell and range must be positive");
    const int n = static_cast<int>(std::ceil(max_value / cell - 1e-12));
    ScatterSummary s;
    s.cell = cell;
    s.max_value = max_value;
    s.density = Grid<std::uint64_t>(n, n, 0);
    auto index = [&](double v) { return std::min(static_cast<int>(std::floor(v / cell)), n - 1); };
    for (const auto& p : pairs) {
        if (!(p.label >= 0.0 && p.label <= max_value && p.prediction >= 0.0 && p.prediction <= max_value)) {
            ++s.outside;
            continue;
        }
        ++s.density(index(p.label), index(p.prediction));
    }
    s.r2 = r_squared(pairs);
    return s;
}

std::vector<PredLabelPair> pairs_from_raster(const MultiBandRaster& prediction, const SparseLabels& labels) {
    if (labels.width != prediction.width() || labels.height != prediction.height()) {
        throw StructuralError("labels patch size differs from prediction raster");
    }
    std::vector<PredLabelPair> out;
    for (const auto& t : labels.tracks) {
        for (const auto& m : t.measurements) {
            if (!prediction.valid(0, m.px, m.py)) continue;
            out.push_back({static_cast<double>(prediction.value(0, m.px, m.py)), m.h});
        }
    }
    return out;
}

std::vector<PredLabelPair> read_pairs(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const auto cp = t.column("prediction"), cl = t.column("label");
    std::vector<PredLabelPair> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) out.push_back({parse_double(row[cp], "prediction"), parse_double(row[cl], "label")});
    return out;
}

void write_pairs(const std::filesystem::path& path, std::span<const PredLabelPair> pairs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write pairs file " + path.string());
    out << "prediction,label\n";
    out.precision(17);
    for (const auto& p : pairs) out << p.prediction << ',' << p.label << '\n';
}

}  // namespace chm
