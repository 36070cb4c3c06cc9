#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "chm/gedi.hpp"
#include "support.hpp"

using namespace chm;

namespace {

GediShot shot(double x, double y, double h, std::string key = "T1", std::string time = "2020-01-01T00:00:00Z",
              int beam = 6, int quality = 1, double sun = -30.0) {
    return {x, y, h, beam, quality, sun, std::move(key), std::move(time)};
}

std::vector<GediShot> random_shots(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<int> beam(0, 11), q(0, 1), key(0, 4), sec(0, 59);
    std::uniform_real_distribution<double> sun(-60.0, 60.0), pos(0.0, 1000.0), h(0.0, 60.0);
    std::vector<GediShot> out;
    for (std::size_t i = 0; i < n; ++i) {
        const int s = sec(rng);
        const std::string time = "2020-01-01T00:00:" + std::string(s < 10 ? "0" : "") + std::to_string(s) + "Z";
        const double x = pos(rng), y = pos(rng), height = h(rng);
        const std::string k = "T" + std::to_string(key(rng));
        const int b = beam(rng), qf = q(rng);
        out.push_back(shot(x, y, height, k, time, b, qf, sun(rng)));
    }
    return out;
}

}  // namespace

TEST_CASE("quality filter predicates") {
    const GediFilterConfig cfg;
    CHECK(filter_shots(std::vector{shot(0, 0, 10, "T", "t", 6, 0, -30)}, cfg).empty());
    CHECK(filter_shots(std::vector{shot(0, 0, 10, "T", "t", 6, 1, 10)}, cfg).empty());
    CHECK(filter_shots(std::vector{shot(0, 0, 10, "T", "t", 5, 1, -30)}, cfg).empty());
    CHECK(filter_shots(std::vector{shot(0, 0, 10, "T", "t", 6, 1, 0.0)}, cfg).empty());
    CHECK(filter_shots(std::vector{shot(0, 0, 10, "T", "t", 6, 1, -30)}, cfg).size() == 1);
}

TEST_CASE("filtering is sound, order preserving, and idempotent") {
    std::mt19937_64 rng(17);
    const auto shots = random_shots(rng, 2000);
    const GediFilterConfig cfg;
    const auto once = filter_shots(shots, cfg);
    for (const auto& s : once) {
        CHECK(s.beam_id > 5);
        CHECK(s.quality_flag == 1);
        CHECK(s.solar_elevation < 0.0);
    }
    CHECK(filter_shots(once, cfg) == once);

    std::vector<GediShot> oracle;
    std::ranges::copy_if(shots, std::back_inserter(oracle),
                         [](const GediShot& s) { return s.beam_id > 5 && s.quality_flag == 1 && s.solar_elevation < 0; });
    CHECK(once == oracle);
}

TEST_CASE("track grouping") {
    CHECK(group_tracks(std::vector<GediShot>{}).empty());
    const std::vector<GediShot> shots{shot(0, 0, 1, "B", "2020-01-01T00:00:03Z"), shot(0, 0, 2, "A", "2020-01-01T00:00:09Z"),
                                      shot(0, 0, 3, "B", "2020-01-01T00:00:01Z"), shot(0, 0, 4, "A", "2020-01-01T00:00:02Z"),
                                      shot(0, 0, 5, "B", "2020-01-01T00:00:02Z")};
    const auto tracks = group_tracks(shots);
    REQUIRE(tracks.size() == 2);
    CHECK(tracks[0].track_key == "A");
    CHECK(tracks[1].track_key == "B");
    for (const auto& t : tracks) {
        CHECK(std::ranges::is_sorted(t.shots, {}, &GediShot::acquisition_time));
    }
    CHECK(tracks[1].shots[0].rh100 == 3.0);
    CHECK(tracks[1].shots[2].rh100 == 1.0);
}

TEST_CASE("rasterization onto the patch grid") {
    const GeoRef g{1000.0, 2000.0, 10.0, ""};
    SUBCASE("shot at a pixel center") {
        const std::vector<GediTrack> t{{"T", {shot(1035.0, 2025.0, 17.3)}}};
        const SparseLabels l = rasterize_tracks(t, g, 8, 8);
        REQUIRE(l.tracks.size() == 1);
        REQUIRE(l.tracks[0].measurements.size() == 1);
        CHECK(l.tracks[0].measurements[0] == Measurement{3, 2, 17.3});
    }
    SUBCASE("collisions keep the maximum") {
        const std::vector<GediTrack> t{{"T", {shot(1031.0, 2021.0, 10.0), shot(1038.0, 2029.0, 12.0)}}};
        const SparseLabels l = rasterize_tracks(t, g, 8, 8);
        REQUIRE(l.tracks[0].measurements.size() == 1);
        CHECK(l.tracks[0].measurements[0].h == 12.0);
        const SparseLabels first = rasterize_tracks(t, g, 8, 8, CollisionRule::keep_first);
        CHECK(first.tracks[0].measurements[0].h == 10.0);
    }
    SUBCASE("shots outside the patch are dropped") {
        const std::vector<GediTrack> t{{"T", {shot(995.0, 2025.0, 5.0), shot(1085.0, 2025.0, 5.0)}},
                                       {"U", {shot(1005.0, 2005.0, 5.0)}}};
        const SparseLabels l = rasterize_tracks(t, g, 8, 8);
        REQUIRE(l.tracks.size() == 1);
        CHECK(l.tracks[0].track_key == "U");
    }
    SUBCASE("translating shots by whole pixels translates measurements") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> pos(1000.0, 1200.0), h(0.0, 40.0);
        std::vector<GediShot> shots;
        for (int i = 0; i < 50; ++i) shots.push_back(shot(pos(rng), pos(rng) + 1000.0, h(rng)));
        std::vector<GediShot> moved = shots;
        for (auto& s : moved) {
            s.x += 30.0;
            s.y += 20.0;
        }
        const SparseLabels a = rasterize_tracks(group_tracks(shots), g, 64, 64);
        const SparseLabels b = rasterize_tracks(group_tracks(moved), g, 64, 64);
        REQUIRE(a.tracks[0].measurements.size() == b.tracks[0].measurements.size());
        for (std::size_t i = 0; i < a.tracks[0].measurements.size(); ++i) {
            const auto& ma = a.tracks[0].measurements[i];
            const auto& mb = b.tracks[0].measurements[i];
            CHECK(mb.px == ma.px + 3);
            CHECK(mb.py == ma.py + 2);
            CHECK(mb.h == ma.h);
        }
    }
}

TEST_CASE("label statistics") {
    SparseLabels l{10, 10, {{"A", {{0, 0, 3.0}, {1, 0, 3.0}}}, {"B", {{2, 2, 6.0}}}}};
    const LabelStats st = label_stats(l);
    CHECK(st.count == 3);
    CHECK(*st.mean == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(*st.stddev == doctest::Approx(std::sqrt(2.0)));
    REQUIRE(st.histogram.size() == 7);
    CHECK(st.histogram[3] == 2);
    CHECK(st.histogram[6] == 1);

    const LabelStats empty = label_stats(SparseLabels{4, 4, {}});
    CHECK(empty.count == 0);
    CHECK_FALSE(empty.mean.has_value());

    const LabelStats single = label_stats(SparseLabels{4, 4, {{"A", {{1, 1, 12.5}}}}});
    CHECK(*single.stddev == 0.0);
}

TEST_CASE("sparse label validation") {
    CHECK_NOTHROW(SparseLabels{4, 4, {{"A", {{0, 0, 1.0}, {3, 3, 2.0}}}}}.validate());
    CHECK_THROWS_AS((SparseLabels{4, 4, {{"A", {{4, 0, 1.0}}}}}.validate()), InputError);
    CHECK_THROWS_AS((SparseLabels{4, 4, {{"A", {{1, 1, 1.0}, {1, 1, 2.0}}}}}.validate()), InputError);
    CHECK_THROWS_AS((SparseLabels{4, 4, {{"A", {{1, 1, NAN}}}}}.validate()), InputError);
}

TEST_CASE("labels and shots round-trip through files") {
    test::TempDir dir("gedi_io");
    const SparseLabels l{12, 9, {{"A", {{0, 0, 3.25}, {11, 8, 0.1}}}, {"B", {{5, 5, 44.0}}}}};
    write_labels(dir / "l.json", l);
    CHECK(read_labels(dir / "l.json") == l);
    CHECK(labels_from_json(labels_to_json(l)) == l);
    CHECK_THROWS_AS(labels_from_json("{not json"), FormatError);
    CHECK_THROWS_AS(labels_from_json(R"({"width":2,"height":2,"tracks":[{"key":"A","px":[0],"py":[],"h":[1]}]})"),
                    StructuralError);

    std::mt19937_64 rng(1);
    const auto shots = random_shots(rng, 40);
    write_shots(dir / "s.csv", shots);
    const ShotReadReport back = read_shots(dir / "s.csv");
    CHECK(back.implausible == 0);
    CHECK(back.shots == shots);
}

TEST_CASE("implausible heights are dropped at ingestion") {
    test::TempDir dir("gedi_rh");
    {
        std::ofstream f(dir / "s.csv");
        f << "lon,lat,rh100_m,beam_id,quality_flag,solar_elevation_deg,track_key,time_iso8601\n"
          << "1,2,35.5,6,1,-10,T,2020-01-01\n"
          << "1,2,130,6,1,-10,T,2020-01-01\n"
          << "1,2,-3,6,1,-10,T,2020-01-01\n";
    }
    const ShotReadReport r = read_shots(dir / "s.csv");
    CHECK(r.shots.size() == 1);
    CHECK(r.implausible == 2);
}
