#include <doctest.h>

#include <cmath>

#include "chm/evaluate.hpp"
#include "support.hpp"

using namespace chm;

namespace {

// Straightforward two-pass recomputation, no compensation.
struct Naive {
    double mae, mse, rmse, rrmse, mape, r2;
};

Naive naive(const std::vector<PredLabelPair>& p) {
    double ae = 0, se = 0, ys = 0, ape = 0;
    int nm = 0;
    for (const auto& x : p) {
        ae += std::abs(x.prediction - x.label);
        se += (x.prediction - x.label) * (x.prediction - x.label);
        ys += x.label;
        if (x.label > 0.5) {
            ape += std::abs(x.prediction - x.label) / x.label;
            ++nm;
        }
    }
    const double n = static_cast<double>(p.size());
    const double ybar = ys / n;
    double tot = 0;
    for (const auto& x : p) tot += (x.label - ybar) * (x.label - ybar);
    return {ae / n, se / n, std::sqrt(se / n), std::sqrt(se / n) / ybar, nm ? ape / nm : NAN, 1.0 - se / tot};
}

}  // namespace

TEST_CASE("two-pair worked example") {
    const std::vector<PredLabelPair> p{{4, 5}, {6, 5}};
    const MetricsReport m = compute_metrics(p);
    CHECK(m.mae == 1.0);
    CHECK(m.mse == 1.0);
    CHECK(m.rmse == 1.0);
    CHECK(m.rrmse == 0.2);
    REQUIRE(m.mape.has_value());
    CHECK(*m.mape == 0.2);
    CHECK_FALSE(m.r2.has_value());
    CHECK(m.n_pairs == 2);
    CHECK(m.filter == "none");
}

TEST_CASE("perfect predictions") {
    const std::vector<PredLabelPair> p{{1, 1}, {5, 5}, {30, 30}};
    const MetricsReport m = compute_metrics(p);
    CHECK(m.mae == 0.0);
    CHECK(m.rmse == 0.0);
    CHECK(*m.mape == 0.0);
    CHECK(*m.r2 == 1.0);
}

TEST_CASE("label filter") {
    const std::vector<PredLabelPair> p{{2, 3}, {9, 7}};
    const MetricsReport m = compute_metrics(p, LabelFilter{5.0});
    CHECK(m.n_pairs == 1);
    CHECK(m.mae == 2.0);
    CHECK(m.filter == "label_gt:5");
    CHECK_THROWS_AS(compute_metrics(p, LabelFilter{10.0}), EmptyReportError);
    CHECK_THROWS_AS(compute_metrics(std::vector<PredLabelPair>{}), EmptyReportError);
}

TEST_CASE("MAPE skips near-zero labels") {
    const std::vector<PredLabelPair> p{{1, 0.0}, {1, 0.5}, {3, 2}};
    const MetricsReport m = compute_metrics(p);
    CHECK(m.n_mape == 1);
    CHECK(*m.mape == 0.5);
}

TEST_CASE("r2 is not clamped") {
    const std::vector<PredLabelPair> p{{30, 0}, {20, 10}, {10, 20}, {0, 30}};
    const auto r2 = r_squared(p);
    REQUIRE(r2.has_value());
    CHECK(*r2 < 0.0);
    CHECK(*r2 == doctest::Approx(-3.0));
}

TEST_CASE("metrics agree with a naive recomputation") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> y(0.0, 50.0), noise(-8.0, 8.0);
    std::uniform_int_distribution<int> size(2, 500);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<PredLabelPair> p;
        const int n = size(rng);
        for (int i = 0; i < n; ++i) {
            const double l = y(rng);
            p.push_back({l + noise(rng), l});
        }
        const MetricsReport m = compute_metrics(p);
        const Naive o = naive(p);
        CHECK(m.mae == doctest::Approx(o.mae).epsilon(1e-9));
        CHECK(m.mse == doctest::Approx(o.mse).epsilon(1e-9));
        CHECK(m.rmse == doctest::Approx(o.rmse).epsilon(1e-9));
        CHECK(m.rrmse == doctest::Approx(o.rrmse).epsilon(1e-9));
        CHECK(*m.mape == doctest::Approx(o.mape).epsilon(1e-9));
        CHECK(*m.r2 == doctest::Approx(o.r2).epsilon(1e-9));
    }
}

TEST_CASE("binned errors") {
    SUBCASE("constant residual") {
        std::vector<PredLabelPair> p(7, PredLabelPair{10, 15});
        const auto bins = bin_errors(p);
        REQUIRE(bins.size() == 6);
        CHECK(bins[1].lo == 10.0);
        CHECK(bins[1].hi == 20.0);
        CHECK(bins[1].count == 7);
        CHECK(bins[1].stats->median == -5.0);
        CHECK(bins[0].count == 0);
        CHECK_FALSE(bins[0].stats.has_value());
    }
    SUBCASE("label at the range end is excluded") {
        const auto bins = bin_errors(std::vector<PredLabelPair>{{60, 60}, {59, 59.99}});
        CHECK(bins[5].count == 1);
    }
    SUBCASE("quartiles and Tukey whiskers") {
        std::vector<PredLabelPair> p;
        for (double e : {-1.0, 0.0, 1.0, 2.0, 3.0, 20.0}) p.push_back({25.0 + e, 25.0});
        const auto st = *bin_errors(p)[2].stats;
        CHECK(st.median == 1.5);
        CHECK(st.q1 == 0.25);
        CHECK(st.q3 == 2.75);
        CHECK(st.whisker_low == -1.0);
        CHECK(st.whisker_high == 3.0);
        CHECK(st.mean == doctest::Approx(25.0 / 6.0));
    }
}

TEST_CASE("scatter density") {
    SUBCASE("a single point fills a single cell") {
        const std::vector<PredLabelPair> p(5, PredLabelPair{12.5, 30.2});
        const ScatterSummary s = scatter_summary(p);
        std::uint64_t nonzero = 0;
        for (auto v : s.density.values()) nonzero += v ? 1 : 0;
        CHECK(nonzero == 1);
        CHECK(s.density(30, 12) == 5);
    }
    SUBCASE("identical pairs lie on the diagonal") {
        std::vector<PredLabelPair> p;
        for (int i = 0; i < 60; ++i) p.push_back({i + 0.5, i + 0.5});
        p.push_back({60.0, 60.0});
        const ScatterSummary s = scatter_summary(p);
        for (int i = 0; i < 60; ++i) {
            for (int k = 0; k < 60; ++k) {
                if (i != k) CHECK(s.density(i, k) == 0);
            }
        }
        CHECK(s.density(59, 59) == 2);
        CHECK(*s.r2 == 1.0);
        CHECK(s.outside == 0);
    }
    SUBCASE("out-of-range pairs are counted") {
        const ScatterSummary s = scatter_summary(std::vector<PredLabelPair>{{70, 10}, {-1, 10}});
        CHECK(s.outside == 2);
    }
}

TEST_CASE("pairs from a prediction raster and sparse labels") {
    MultiBandRaster pred(1, 4, 4);
    pred.set_value(0, 1, 1, 9.0f);
    pred.set_value(0, 2, 2, 3.0f);
    pred.set_valid(0, 3, 3, false);
    const SparseLabels l{4, 4, {{"A", {{1, 1, 10.0}, {2, 2, 4.0}, {3, 3, 5.0}}}}};
    const auto p = pairs_from_raster(pred, l);
    REQUIRE(p.size() == 2);
    CHECK(p[0].prediction == 9.0);
    CHECK(p[0].label == 10.0);
    CHECK_THROWS_AS(pairs_from_raster(MultiBandRaster(1, 3, 4), l), StructuralError);
}

TEST_CASE("pair files round-trip") {
    test::TempDir dir("pairs");
    const std::vector<PredLabelPair> p{{0.1, 0.2}, {1.0 / 3.0, 17.25}};
    write_pairs(dir / "p.csv", p);
    const auto back = read_pairs(dir / "p.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[1].prediction == p[1].prediction);
    CHECK(back[1].label == p[1].label);
}
