#include "chm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "chm/evaluate.hpp"
#include "chm/raster_io.hpp"

namespace chm {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double normal(Rng& rng, double sd) { return std::normal_distribution<double>(0.0, sd)(rng); }

std::string timestamp(int month, int day, int seconds) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "2020-%02d-%02dT%02d:%02d:%02d.000Z", month, day, (seconds / 3600) % 24,
                  (seconds / 60) % 60, seconds % 60);
    return buf;
}

GeoRef patch_georef(const SynthConfig& cfg) { return {300000.0, 5000000.0, cfg.pixel_size, "EPSG:32632"}; }

}  // namespace

MultiBandRaster synth_height_field(std::uint64_t seed, int width, int height, const GeoRef& georef) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    struct Blob {
        double cx, cy, sigma, amp;
    };
    const int n = std::max(4, width * height / 1500);
    std::vector<Blob> blobs;
    for (int i = 0; i < n; ++i) {
        blobs.push_back({uniform(rng, 0, width), uniform(rng, 0, height), uniform(rng, 6, 22), uniform(rng, 15, 45)});
    }
    MultiBandRaster out(1, width, height, georef);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double f = 0.0;
            for (const auto& b : blobs) {
                const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
                f += b.amp * std::exp(-d2 / (2 * b.sigma * b.sigma));
            }
            // Crown texture inside stands; bare ground elsewhere.
            double h = f > 8.0 ? std::min(f, 50.0) + normal(rng, 2.0) : 0.0;
            out.set_value(0, x, y, static_cast<float>(std::max(0.0, h)));
        }
    }
    return out;
}

SynthPatch synth_patch(const SynthConfig& cfg) {
    if (cfg.width < 16 || cfg.height < 16) throw InputError("synthetic patch must be at least 16x16");
    if (cfg.tracks < 1) throw InputError("synthetic patch needs at least one track");
    SynthPatch p;
    p.georef = patch_georef(cfg);
    p.truth = synth_height_field(cfg.seed, cfg.width, cfg.height, p.georef);

    Rng rng(cfg.seed);
    // Features: noisy affine responses to height.
    constexpr int feature_bands = 14;
    p.features = MultiBandRaster(feature_bands, cfg.width, cfg.height, p.georef);
    for (int b = 0; b < feature_bands; ++b) {
        const double gain = uniform(rng, 0.2, 1.0), offset = uniform(rng, -5, 5);
        for (int y = 0; y < cfg.height; ++y) {
            for (int x = 0; x < cfg.width; ++x) {
                const double v = gain * p.truth.value(0, x, y) + offset + normal(rng, 0.5);
                p.features.set_value(b, x, y, static_cast<float>(v));
            }
        }
    }

    const auto shifts = shift_candidates(cfg.shift_radius);
    const double step = cfg.shot_spacing / cfg.pixel_size;
    const int margin = static_cast<int>(std::ceil(cfg.shift_radius)) + 1;
    constexpr int power_beams[3] = {6, 8, 11};
    int clock = 0;
    for (int k = 0; k < cfg.tracks; ++k) {
        const int beam = power_beams[k % 3];
        char key[64];
        std::snprintf(key, sizeof key, "G%03d_BEAM%02d", k, beam);
        const Shift planted = shifts[std::uniform_int_distribution<std::size_t>(0, shifts.size() - 1)(rng)];
        p.track_keys.emplace_back(key);
        p.planted.push_back(planted);

        // Near-meridional pass crossing the central part of the patch.
        const double theta = uniform(rng, -0.6, 0.6);
        const double dx = std::sin(theta), dy = std::cos(theta);
        const double cx = uniform(rng, 0.25, 0.75) * cfg.width, cy = 0.5 * cfg.height;
        const double half = 2.0 * std::hypot(cfg.width, cfg.height);
        const double phase = uniform(rng, 0.0, step);
        for (double t = -half + phase; t <= half; t += step) {
            const int x = static_cast<int>(std::lround(cx + t * dx));
            const int y = static_cast<int>(std::lround(cy + t * dy));
            if (x < margin || y < margin || x >= cfg.width - margin || y >= cfg.height - margin) continue;
            const MapPoint at = pixel_to_geo(p.georef, x + planted.dx, y + planted.dy);
            GediShot s;
            s.x = at.x;
            s.y = at.y;
            s.rh100 = p.truth.value(0, x, y);
            s.beam_id = beam;
            s.quality_flag = 1;
            s.solar_elevation = -uniform(rng, 5, 60);
            s.track_key = key;
            s.acquisition_time = timestamp(6, 1 + k % 28, 3600 * 2 + clock++);
            p.shots.push_back(s);

            if (uniform(rng, 0, 1) < cfg.reject_fraction) {
                GediShot bad = s;
                bad.acquisition_time = timestamp(6, 1 + k % 28, 3600 * 2 + clock++);
                switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
                    case 0: bad.quality_flag = 0; break;
                    case 1: bad.solar_elevation = uniform(rng, 5, 60); break;
                    default:
                        bad.beam_id = 2;
                        bad.track_key = std::string(key).substr(0, 5) + "BEAM02";
                        break;
                }
                // Spoil the height too, so leaking rejects would be visible in the loss.
                bad.rh100 = std::min(max_plausible_rh100, s.rh100 + uniform(rng, 5, 20));
                p.shots.push_back(bad);
            }
        }
    }

    const auto kept = filter_shots(p.shots, GediFilterConfig{});
    const auto tracks = group_tracks(kept);
    p.labels = rasterize_tracks(tracks, p.georef, cfg.width, cfg.height);
    p.true_labels = p.labels;
    for (auto& t : p.true_labels.tracks) {
        const auto it = std::ranges::find(p.track_keys, t.track_key);
        const Shift s = p.planted[static_cast<std::size_t>(it - p.track_keys.begin())];
        for (auto& m : t.measurements) {
            m.px -= s.dx;
            m.py -= s.dy;
        }
    }

    // Elevation at 30 m with a two-pixel apron so the slope window covers the patch.
    const double dem_ps = 30.0;
    const int apron = 2;
    const int ew = static_cast<int>(std::ceil(cfg.width * cfg.pixel_size / dem_ps)) + 2 * apron;
    const int eh = static_cast<int>(std::ceil(cfg.height * cfg.pixel_size / dem_ps)) + 2 * apron;
    GeoRef dem_geo{p.georef.origin_x - apron * dem_ps, p.georef.origin_y - apron * dem_ps, dem_ps, p.georef.crs_id};
    p.elevation = MultiBandRaster(1, ew, eh, dem_geo);
    const double ridge_x = uniform(rng, 0.3, 0.7) * ew * dem_ps;
    for (int y = 0; y < eh; ++y) {
        for (int x = 0; x < ew; ++x) {
            const double mx = x * dem_ps, my = y * dem_ps;
            const double z = 250.0 + 0.03 * mx + 0.02 * my + 120.0 * std::tanh((mx - ridge_x) / 60.0);
            p.elevation.set_value(0, x, y, static_cast<float>(z));
        }
    }
    return p;
}

SynthScenes synth_scenes(const SynthConfig& cfg, const MultiBandRaster& truth) {
    Rng rng(cfg.seed * 7919 + 17);
    SynthScenes out;
    const int w = truth.width(), h = truth.height();
    static const std::vector<std::string> optical{"B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B11", "B12"};

    for (int i = 0; i < cfg.s2_scenes; ++i) {
        const bool overcast = i == cfg.s2_scenes - 1 && cfg.s2_scenes > 1;
        const double sun_az = uniform(rng, 140, 170), sun_el = uniform(rng, 35, 60);
        const double ccx = uniform(rng, 0.2, 0.8) * w, ccy = uniform(rng, 0.2, 0.8) * h, cr = uniform(rng, 5, 12);
        const double az = (sun_az + 180.0) * std::numbers::pi / 180.0;
        const double shadow_len = uniform(rng, 8, 20);
        const double scx = ccx + shadow_len * std::sin(az), scy = ccy + shadow_len * std::cos(az);

        MultiBandRaster r(static_cast<int>(optical.size()) + 2, w, h, truth.georef());
        const int b_cloud = static_cast<int>(optical.size()), b_scl = b_cloud + 1;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double ht = truth.value(0, x, y);
                const bool cloud = overcast || std::hypot(x - ccx, y - ccy) < cr;
                const bool shadow = !cloud && std::hypot(x - scx, y - scy) < cr;
                for (std::size_t b = 0; b < optical.size(); ++b) {
                    double v = optical[b] == "B8" || optical[b] == "B8A" ? 0.2 + 0.005 * ht : 0.04 + 0.001 * b + 0.0005 * ht;
                    v += normal(rng, 0.004);
                    if (cloud) v = 0.6 + normal(rng, 0.02);
                    if (shadow) v *= 0.2;
                    r.set_value(static_cast<int>(b), x, y, static_cast<float>(v));
                }
                r.set_value(b_cloud, x, y, cloud ? 95.0f : static_cast<float>(std::clamp(5.0 + normal(rng, 3.0), 0.0, 25.0)));
                r.set_value(b_scl, x, y, cloud ? 9.0f : shadow ? 3.0f : ht > 0.0 ? 4.0f : 5.0f);
            }
        }
        SceneRecord rec;
        char name[64];
        std::snprintf(name, sizeof name, "scenes/s2_%02d.tif", i);
        rec.path = name;
        rec.sensor = "S2";
        rec.timestamp = timestamp(5 + i % 5, 3 + 5 * i % 25, 10 * 3600 + 600 * i);
        rec.band_roles = optical;
        rec.band_roles.push_back("CLOUD_PROB");
        rec.band_roles.push_back("SCL");
        rec.sun_azimuth = sun_az;
        rec.sun_elevation = sun_el;
        out.rasters.push_back(std::move(r));
        out.records.push_back(std::move(rec));
    }

    int idx = 0;
    for (Orbit orbit : {Orbit::ascending, Orbit::descending}) {
        for (int i = 0; i < cfg.s1_scenes_per_orbit; ++i, ++idx) {
            MultiBandRaster r(2, w, h, truth.georef());
            const double bias = orbit == Orbit::ascending ? 0.0 : -1.0;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double ht = truth.value(0, x, y);
                    r.set_value(0, x, y, static_cast<float>(-12.0 + bias + 0.1 * ht + normal(rng, 1.0)));
                    r.set_value(1, x, y, static_cast<float>(-19.0 + bias + 0.12 * ht + normal(rng, 1.0)));
                }
            }
            SceneRecord rec;
            char name[64];
            std::snprintf(name, sizeof name, "scenes/s1_%02d.tif", idx);
            rec.path = name;
            rec.sensor = "S1";
            rec.timestamp = timestamp(4 + idx % 6, 2 + 3 * idx % 25, 5 * 3600 + 60 * idx);
            rec.orbit = orbit;
            rec.band_roles = {"VV", "VH"};
            out.rasters.push_back(std::move(r));
            out.records.push_back(std::move(rec));
        }
    }
    return out;
}

std::vector<std::string> write_synth_fixture(const SynthConfig& cfg, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "scenes");
    const SynthPatch p = synth_patch(cfg);
    std::vector<std::string> files;
    auto put = [&](const std::string& name) {
        files.push_back(name);
        return dir / name;
    };

    write_raster(p.truth, put("truth.tif"));
    write_raster(p.truth, put("pred_perfect.tif"));
    write_raster(p.features, put("features.tif"));
    write_raster(p.elevation, put("elevation.tif"));
    write_shots(put("shots.csv"), p.shots);
    write_labels(put("labels.json"), p.labels);
    write_labels(put("labels_true.json"), p.true_labels);

    nlohmann::ordered_json planted = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < p.track_keys.size(); ++i) {
        planted.push_back({{"key", p.track_keys[i]}, {"dx", p.planted[i].dx}, {"dy", p.planted[i].dy}});
    }
    std::ofstream(put("planted.json")) << planted.dump(2) << '\n';

    // Imperfect predictions against the true labels, for metric runs.
    Rng rng(cfg.seed + 101);
    std::vector<PredLabelPair> pairs;
    for (const auto& t : p.true_labels.tracks) {
        for (const auto& m : t.measurements) {
            pairs.push_back({std::max(0.0, 0.9 * m.h + 1.0 + normal(rng, 2.5)), m.h});
        }
    }
    write_pairs(put("pairs.csv"), pairs);

    {
        std::ofstream tiles(put("tiles.txt"));
        tiles << "tile_id\n";
        for (int r = 0; r < 20; ++r) {
            for (int c = 0; c < 20; ++c) tiles << "T32UQD_r" << r << "_c" << c << '\n';
        }
    }

    const SynthScenes scenes = synth_scenes(cfg, p.truth);
    for (std::size_t i = 0; i < scenes.records.size(); ++i) {
        write_raster(scenes.rasters[i], put(scenes.records[i].path.generic_string()));
    }
    write_scene_manifest(put("manifest.csv"), scenes.records);
    return files;
}

}  // namespace chm
