#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "chm/composite.hpp"
#include "support.hpp"

using namespace chm;

namespace {

Scene optical_scene(int w, int h, float nir = 0.3f, float cloud = 0.0f, std::uint8_t scl = 4) {
    Scene s;
    s.raster = MultiBandRaster(2, w, h, GeoRef{0.0, 0.0, 10.0, ""});
    s.band_roles = {"B4", "B8"};
    std::ranges::fill(s.raster.band(0), 0.05f);
    std::ranges::fill(s.raster.band(1), nir);
    s.cloud_prob = Grid<float>(w, h, cloud);
    s.scl = Grid<std::uint8_t>(w, h, scl);
    s.sun_azimuth = 180.0;
    s.sun_elevation = 40.0;
    return s;
}

Scene radar_scene(int w, int h, Orbit orbit, float vv, float vh) {
    Scene s;
    s.raster = MultiBandRaster(2, w, h);
    s.band_roles = {"VV", "VH"};
    s.orbit = orbit;
    std::ranges::fill(s.raster.band(0), vv);
    std::ranges::fill(s.raster.band(1), vh);
    return s;
}

// Collect, sort, take the middle; even counts average the central pair in
// double and round once to float, matching storage precision.
std::optional<float> oracle_median(std::vector<float> v) {
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return static_cast<float>((static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0);
}

std::size_t count_valid(const Grid<std::uint8_t>& m) {
    return static_cast<std::size_t>(std::ranges::count(m.values(), std::uint8_t{1}));
}

}  // namespace

TEST_CASE("scene admissibility") {
    const MaskParams p;
    CHECK(scene_admissible(optical_scene(10, 10, 0.3f, 0.0f), p));
    CHECK_FALSE(scene_admissible(optical_scene(10, 10, 0.3f, 100.0f), p));

    SUBCASE("exactly ten percent clear is admissible") {
        Scene s = optical_scene(10, 10, 0.3f, 100.0f);
        for (int x = 0; x < 10; ++x) (*s.cloud_prob)(x, 3) = 5.0f;
        CHECK(scene_admissible(s, p));
        (*s.cloud_prob)(9, 3) = 100.0f;
        CHECK_FALSE(scene_admissible(s, p));
    }
    SUBCASE("fraction is over valid pixels only") {
        Scene s = optical_scene(10, 10, 0.3f, 100.0f);
        for (int y = 0; y < 10; ++y) {
            for (int x = 0; x < 10; ++x) s.raster.set_pixel_valid(x, y, y < 5);
        }
        for (int x = 0; x < 5; ++x) (*s.cloud_prob)(x, 0) = 0.0f;
        CHECK(scene_admissible(s, p));
    }
    SUBCASE("missing cloud probability is an error") {
        Scene s = optical_scene(4, 4);
        s.cloud_prob.reset();
        CHECK_THROWS_AS(scene_admissible(s, p), InputError);
    }
}

TEST_CASE("cloud-free scene keeps every pixel") {
    const Scene s = optical_scene(20, 20, 0.05f, 10.0f, 3);
    CHECK(count_valid(mask_scene(s, MaskParams{})) == 400);
}

TEST_CASE("shadow search follows the anti-solar ray") {
    // Sun due south: shadows fall to the north, where pixel rows grow.
    Scene s = optical_scene(121, 201);
    (*s.cloud_prob)(60, 100) = 90.0f;
    auto make_dark = [&](int x, int y) {
        s.raster.set_value(1, x, y, 0.05f);
        (*s.scl)(x, y) = 3;
    };
    make_dark(60, 150);  // 500 m north
    make_dark(60, 50);   // 500 m south
    const MaskParams p;
    const auto m = mask_scene(s, p);
    CHECK(m(60, 150) == 0);
    CHECK(m(60, 50) == 1);

    // The northern shadow carries its own 300 m buffer.
    CHECK(m(60, 180) == 0);
    CHECK(m(60, 181) == 1);
    CHECK(m(60, 69) == 1);
    CHECK(m(60, 70) == 0);

    SUBCASE("bright pixels and other classes are not shadow") {
        Scene t = s;
        t.raster.set_value(1, 60, 150, 0.5f);
        CHECK(mask_scene(t, p)(60, 180) == 1);
        Scene u = s;
        (*u.scl)(60, 150) = 8;
        CHECK(mask_scene(u, p)(60, 180) == 1);
    }
    SUBCASE("search stops at the configured distance") {
        Scene t = optical_scene(21, 201);
        (*t.cloud_prob)(10, 0) = 90.0f;
        t.raster.set_value(1, 10, 100, 0.05f);
        (*t.scl)(10, 100) = 2;
        t.raster.set_value(1, 10, 101, 0.05f);
        (*t.scl)(10, 101) = 2;
        MaskParams q;
        q.dilation_radius = 1.0;
        const auto mt = mask_scene(t, q);
        CHECK(mt(10, 100) == 0);
        CHECK(mt(10, 101) == 1);
    }
    SUBCASE("sun from the west casts shadows to the east") {
        Scene t = optical_scene(101, 21);
        t.sun_azimuth = 270.0;
        (*t.cloud_prob)(10, 10) = 90.0f;
        t.raster.set_value(1, 60, 10, 0.05f);
        (*t.scl)(60, 10) = 3;
        MaskParams q;
        q.dilation_radius = 1.0;
        CHECK(mask_scene(t, q)(60, 10) == 0);
    }
}

TEST_CASE("dilation removes exactly a Euclidean disk") {
    Scene s = optical_scene(100, 100);
    (*s.cloud_prob)(50, 50) = 99.0f;
    const auto m = mask_scene(s, MaskParams{});
    for (int y = 0; y < 100; ++y) {
        for (int x = 0; x < 100; ++x) {
            const int d2 = (x - 50) * (x - 50) + (y - 50) * (y - 50);
            CHECK_MESSAGE((m(x, y) == 0) == (d2 <= 900), "pixel ", x, ",", y);
        }
    }
}

TEST_CASE("disk dilation matches brute force on random seeds") {
    std::mt19937_64 rng(7);
    std::bernoulli_distribution seed(0.01);
    for (double radius : {0.0, 1.0, 1.5, 2.9, 4.0, 7.3}) {
        Grid<std::uint8_t> seeds(37, 29, 0);
        for (auto& v : seeds.values()) v = seed(rng) ? 1 : 0;
        const auto got = dilate_disk(seeds, radius);
        for (int y = 0; y < 29; ++y) {
            for (int x = 0; x < 37; ++x) {
                bool hit = false;
                for (int sy = 0; sy < 29 && !hit; ++sy) {
                    for (int sx = 0; sx < 37 && !hit; ++sx) {
                        const double d2 = double(x - sx) * (x - sx) + double(y - sy) * (y - sy);
                        hit = seeds(sx, sy) && d2 <= radius * radius;
                    }
                }
                CHECK(got(x, y) == (hit ? 1 : 0));
            }
        }
    }
}

TEST_CASE("mask is monotone in the cloud threshold") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> cp(0.0f, 100.0f);
    Scene s = optical_scene(40, 40);
    for (auto& v : s.cloud_prob->values()) v = cp(rng) < 97.0f ? 0.0f : cp(rng);
    MaskParams p;
    p.dilation_radius = 20.0;
    std::size_t previous = 0;
    for (double t = 100.0; t >= 0.0; t -= 10.0) {
        p.cloud_prob_threshold = t;
        const auto m = mask_scene(s, p);
        if (t < 100.0) {
            p.cloud_prob_threshold = t + 10.0;
            const auto looser = mask_scene(s, p);
            for (std::size_t i = 0; i < m.size(); ++i) {
                if (!looser.values()[i]) CHECK(m.values()[i] == 0);
            }
            CHECK(count_valid(m) <= previous);
        }
        previous = count_valid(m);
    }
}

TEST_CASE("mask_scene requires geometry and bands") {
    Scene s = optical_scene(4, 4);
    s.sun_azimuth.reset();
    CHECK_THROWS_AS(mask_scene(s, MaskParams{}), InputError);
    Scene t = optical_scene(4, 4);
    t.band_roles = {"B4", "B3"};
    CHECK_THROWS_AS(mask_scene(t, MaskParams{}), InputError);
}

TEST_CASE("median composite small cases") {
    auto stack = [](std::vector<float> values) {
        std::vector<Scene> scenes;
        std::vector<Grid<std::uint8_t>> masks;
        for (float v : values) {
            Scene s;
            s.raster = MultiBandRaster(1, 1, 1);
            s.raster.set_value(0, 0, 0, v);
            scenes.push_back(s);
            masks.emplace_back(1, 1, 1);
        }
        return std::pair{scenes, masks};
    };
    {
        auto [s, m] = stack({7, 3, 5});
        CHECK(median_composite(s, m).value(0, 0, 0) == 5.0f);
    }
    {
        auto [s, m] = stack({9, 3, 7, 5});
        CHECK(median_composite(s, m).value(0, 0, 0) == 6.0f);
    }
    {
        auto [s, m] = stack({1, 2});
        for (auto& g : m) g(0, 0) = 0;
        CHECK_FALSE(median_composite(s, m).valid(0, 0, 0));
    }
    {
        auto [s, m] = stack({1, 2});
        m.pop_back();
        CHECK_THROWS_AS(median_composite(s, m), StructuralError);
    }
}

TEST_CASE("median composite equals the sort oracle on random stacks") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> n_scenes(1, 7), dim(1, 16), bands(1, 3);
    std::bernoulli_distribution masked(0.3);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = n_scenes(rng), w = dim(rng), h = dim(rng), c = bands(rng);
        std::vector<Scene> scenes(static_cast<std::size_t>(n));
        std::vector<Grid<std::uint8_t>> masks;
        for (auto& s : scenes) {
            s.raster = test::random_raster(rng, c, w, h, 0.1);
            Grid<std::uint8_t> m(w, h, 1);
            for (auto& v : m.values()) v = masked(rng) ? 0 : 1;
            masks.push_back(m);
        }
        const MultiBandRaster got = median_composite(scenes, masks);
        for (int b = 0; b < c; ++b) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    std::vector<float> obs;
                    for (int i = 0; i < n; ++i) {
                        if (masks[i](x, y) && scenes[i].raster.valid(b, x, y)) obs.push_back(scenes[i].raster.value(b, x, y));
                    }
                    const auto want = oracle_median(obs);
                    REQUIRE(got.valid(b, x, y) == want.has_value());
                    if (want) CHECK(got.value(b, x, y) == *want);
                }
            }
        }
    }
}

TEST_CASE("composite of identical clear scenes is that scene") {
    std::mt19937_64 rng(9);
    Scene s;
    s.raster = test::random_raster(rng, 3, 8, 8, 0.0);
    const std::vector<Scene> scenes(4, s);
    const std::vector<Grid<std::uint8_t>> masks(4, Grid<std::uint8_t>(8, 8, 1));
    CHECK(median_composite(scenes, masks) == s.raster);
}

TEST_CASE("radar four-channel composite") {
    SUBCASE("single ascending scene") {
        const std::vector<Scene> scenes{radar_scene(3, 3, Orbit::ascending, 2.0f, -1.0f)};
        const MultiBandRaster r = s1_four_channel(scenes);
        REQUIRE(r.bands() == 4);
        CHECK(r.value(s1_vv_asc, 1, 1) == 2.0f);
        CHECK(r.value(s1_vh_asc, 1, 1) == -1.0f);
        CHECK_FALSE(r.valid(s1_vv_desc, 1, 1));
        CHECK_FALSE(r.valid(s1_vh_desc, 1, 1));
    }
    SUBCASE("two ascending VV values average") {
        const std::vector<Scene> scenes{radar_scene(2, 2, Orbit::ascending, 2.0f, 0.0f),
                                        radar_scene(2, 2, Orbit::ascending, 4.0f, 0.0f)};
        CHECK(s1_four_channel(scenes).value(s1_vv_asc, 0, 0) == 3.0f);
    }
    SUBCASE("all groups present") {
        const std::vector<Scene> scenes{radar_scene(2, 2, Orbit::ascending, 1.0f, 2.0f),
                                        radar_scene(2, 2, Orbit::descending, 3.0f, 4.0f)};
        const MultiBandRaster r = s1_four_channel(scenes);
        CHECK(r.value(s1_vv_asc, 0, 0) == 1.0f);
        CHECK(r.value(s1_vv_desc, 0, 0) == 3.0f);
        CHECK(r.value(s1_vh_asc, 0, 0) == 2.0f);
        CHECK(r.value(s1_vh_desc, 0, 0) == 4.0f);
        CHECK(r.pixel_mask()(1, 1) == 1);
    }
    SUBCASE("unknown orbit is rejected") {
        const std::vector<Scene> scenes{radar_scene(2, 2, Orbit::unknown, 1.0f, 2.0f)};
        CHECK_THROWS_AS(s1_four_channel(scenes), InputError);
    }
}

TEST_CASE("date ranges compare calendar days") {
    const DateRange r{"2020-01-01", "2020-12-31"};
    CHECK(r.contains("2020-01-01T10:00:00Z"));
    CHECK(r.contains("2020-12-31T23:59:59Z"));
    CHECK_FALSE(r.contains("2021-01-01"));
    CHECK(DateRange{}.contains("1999-05-05"));
}

TEST_CASE("scene manifest round trip") {
    test::TempDir dir("manifest");
    std::vector<SceneRecord> recs(2);
    recs[0] = {"scenes/a.tif", "S2", "2020-06-01", Orbit::unknown, {"B4", "B8", "CLOUD_PROB", "SCL"}, 150.0, 55.0};
    recs[1] = {"scenes/b.tif", "S1", "2020-06-02", Orbit::descending, {"VV", "VH"}, std::nullopt, std::nullopt};
    write_scene_manifest(dir / "m.csv", recs);
    const auto back = read_scene_manifest(dir / "m.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].band_roles == recs[0].band_roles);
    CHECK(back[0].sun_azimuth == 150.0);
    CHECK(back[1].orbit == Orbit::descending);
    CHECK_FALSE(back[1].sun_azimuth.has_value());
}
