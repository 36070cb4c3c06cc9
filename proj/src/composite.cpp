#include "chm/composite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "chm/csv.hpp"
#include "chm/raster_io.hpp"

namespace chm {

int Scene::band_index(std::string_view role) const {
    auto it = std::ranges::find(band_roles, role);
    return it == band_roles.end() ? -1 : static_cast<int>(it - band_roles.begin());
}

void MaskParams::validate() const {
    if (!(min_cloud_free_fraction >= 0.0 && min_cloud_free_fraction <= 1.0)) {
        throw InputError("min_cloud_free_fraction must lie in [0, 1]");
    }
    if (!(cloud_prob_threshold >= 0.0 && cloud_prob_threshold <= 100.0)) {
        throw InputError("cloud_prob_threshold must lie in [0, 100]");
    }
    if (!(shadow_search_distance > 0.0) || !(dilation_radius > 0.0)) {
        throw InputError("shadow and dilation distances must be positive");
    }
    if (!std::isfinite(dark_pixel_nir_threshold)) throw InputError("dark_pixel_nir_threshold must be finite");
}

bool scene_admissible(const Scene& s, const MaskParams& p) {
    if (!s.cloud_prob) throw InputError("scene has no cloud probability band");
    const auto& cp = *s.cloud_prob;
    if (cp.width() != s.raster.width() || cp.height() != s.raster.height()) {
        throw StructuralError("cloud probability grid does not match the scene raster");
    }
    std::size_t valid = 0, clear = 0;
    for (int y = 0; y < cp.height(); ++y) {
        for (int x = 0; x < cp.width(); ++x) {
            if (!s.raster.pixel_valid(x, y)) continue;
            ++valid;
            if (cp(x, y) < p.cloud_prob_threshold) ++clear;
        }
    }
    if (valid == 0) return false;
    return static_cast<double>(clear) / static_cast<double>(valid) >= p.min_cloud_free_fraction;
}

namespace {

// Squared Euclidean distance transform along one line (Felzenszwalb & Huttenlocher).
void edt_1d(std::span<const double> f, std::span<double> d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    v.assign(static_cast<std::size_t>(n), 0);
    z.assign(static_cast<std::size_t>(n) + 1, 0.0);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == inf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            continue;
        }
        double s = 0.0;
        while (true) {
            const int p = v[k];
            s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
            if (s <= z[k] && k > 0) {
                --k;
            } else {
                break;
            }
        }
        if (s <= z[k]) {  // k == 0 and the new parabola dominates everywhere
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            continue;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    if (k < 0) {
        std::ranges::fill(d, inf);
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        const double dq = q - v[j];
        d[q] = dq * dq + f[v[j]];
    }
}

}  // namespace

Grid<std::uint8_t> dilate_disk(const Grid<std::uint8_t>& seeds, double radius) {
    const int w = seeds.width(), h = seeds.height();
    constexpr double inf = std::numeric_limits<double>::infinity();
    Grid<double> dist(w, h, inf);
    std::vector<int> v;
    std::vector<double> z;
    std::vector<double> f(static_cast<std::size_t>(std::max(w, h))), d(f.size());
    // Columns first: distance along y to the nearest seed in the same column.
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = seeds(x, y) ? 0.0 : inf;
        edt_1d(std::span(f).first(h), std::span(d).first(h), v, z);
        for (int y = 0; y < h; ++y) dist(x, y) = d[y];
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = dist(x, y);
        edt_1d(std::span(f).first(w), std::span(d).first(w), v, z);
        for (int x = 0; x < w; ++x) dist(x, y) = d[x];
    }
    const double r2 = radius * radius;
    Grid<std::uint8_t> out(w, h, 0);
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = dist.values()[i] <= r2 ? 1 : 0;
    return out;
}

Grid<std::uint8_t> mask_scene(const Scene& s, const MaskParams& p) {
    p.validate();
    if (!s.cloud_prob) throw InputError("mask_scene: scene has no cloud probability band");
    if (!s.scl) throw InputError("mask_scene: scene has no scene-classification band");
    if (!s.sun_azimuth || !s.sun_elevation) throw InputError("mask_scene: scene has no sun geometry");
    const int nir = s.band_index(p.nir_band);
    if (nir < 0) throw InputError("mask_scene: scene has no " + p.nir_band + " band");
    const int w = s.raster.width(), h = s.raster.height();
    if (s.cloud_prob->width() != w || s.cloud_prob->height() != h || s.scl->width() != w || s.scl->height() != h) {
        throw StructuralError("mask_scene: auxiliary grids do not match the scene raster");
    }

    const Grid<std::uint8_t> base = s.raster.pixel_mask();
    Grid<std::uint8_t> seeds(w, h, 0);
    std::vector<Pixel> clouds;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (base(x, y) && (*s.cloud_prob)(x, y) > p.cloud_prob_threshold) {
                seeds(x, y) = 1;
                clouds.push_back({x, y});
            }
        }
    }

    auto dark = [&](int x, int y) {
        return base(x, y) && s.raster.value(nir, x, y) < p.dark_pixel_nir_threshold &&
               p.dark_scl_classes.contains((*s.scl)(x, y));
    };

    // Anti-solar direction; pixel y grows northward, x eastward.
    const double az = (*s.sun_azimuth + 180.0) * std::numbers::pi / 180.0;
    const double dx = std::sin(az), dy = std::cos(az);
    const double ps = s.raster.georef().pixel_size;
    const int steps = static_cast<int>(std::floor(p.shadow_search_distance / ps + 1e-9));
    for (const Pixel& c : clouds) {
        for (int k = 1; k <= steps; ++k) {
            const int x = static_cast<int>(std::floor(c.x + k * dx + 0.5));
            const int y = static_cast<int>(std::floor(c.y + k * dy + 0.5));
            if (x < 0 || y < 0 || x >= w || y >= h) break;
            if (dark(x, y)) seeds(x, y) = 1;
        }
    }

    Grid<std::uint8_t> removed = dilate_disk(seeds, p.dilation_radius / ps);
    Grid<std::uint8_t> out(w, h, 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] = (base.values()[i] && !removed.values()[i]) ? 1 : 0;
    }
    return out;
}

namespace {

float median_of(std::vector<float>& obs) {
    const std::size_t n = obs.size();
    const auto mid = obs.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(obs.begin(), mid, obs.end());
    if (n % 2 == 1) return *mid;
    const float upper = *mid;
    const float lower = *std::max_element(obs.begin(), mid);
    return static_cast<float>((static_cast<double>(lower) + static_cast<double>(upper)) * 0.5);
}

}  // namespace

MultiBandRaster median_composite(std::span<const Scene> scenes, std::span<const Grid<std::uint8_t>> masks) {
    if (scenes.empty()) throw InputError("median_composite needs at least one scene");
    if (masks.size() != scenes.size()) throw StructuralError("median_composite: one mask per scene required");
    const auto& ref = scenes.front().raster;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& r = scenes[i].raster;
        if (r.width() != ref.width() || r.height() != ref.height() || r.bands() != ref.bands()) {
            throw StructuralError("median_composite: scenes do not share grid shape and band count");
        }
        if (masks[i].width() != ref.width() || masks[i].height() != ref.height()) {
            throw StructuralError("median_composite: mask shape differs from scene shape");
        }
    }
    MultiBandRaster out(ref.bands(), ref.width(), ref.height(), ref.georef());
    std::vector<float> obs;
    obs.reserve(scenes.size());
    for (int b = 0; b < ref.bands(); ++b) {
        for (int y = 0; y < ref.height(); ++y) {
            for (int x = 0; x < ref.width(); ++x) {
                obs.clear();
                for (std::size_t i = 0; i < scenes.size(); ++i) {
                    if (masks[i](x, y) && scenes[i].raster.valid(b, x, y)) obs.push_back(scenes[i].raster.value(b, x, y));
                }
                if (obs.empty()) {
                    out.set_valid(b, x, y, false);
                } else {
                    out.set_value(b, x, y, median_of(obs));
                }
            }
        }
    }
    return out;
}

MultiBandRaster s1_four_channel(std::span<const Scene> scenes) {
    if (scenes.empty()) throw InputError("s1_four_channel needs at least one scene");
    const auto& ref = scenes.front().raster;
    struct Group {
        const char* pol;
        Orbit orbit;
    };
    constexpr Group groups[4] = {{"VV", Orbit::ascending},
                                 {"VV", Orbit::descending},
                                 {"VH", Orbit::ascending},
                                 {"VH", Orbit::descending}};
    for (const auto& s : scenes) {
        if (s.raster.width() != ref.width() || s.raster.height() != ref.height()) {
            throw StructuralError("s1_four_channel: scenes do not share a grid shape");
        }
        if (s.orbit == Orbit::unknown) throw InputError("s1_four_channel: scene without orbit direction");
    }
    MultiBandRaster out(4, ref.width(), ref.height(), ref.georef());
    std::vector<float> obs;
    for (int g = 0; g < 4; ++g) {
        std::vector<std::pair<const Scene*, int>> members;
        for (const auto& s : scenes) {
            const int b = s.band_index(groups[g].pol);
            if (s.orbit == groups[g].orbit && b >= 0) members.emplace_back(&s, b);
        }
        for (int y = 0; y < ref.height(); ++y) {
            for (int x = 0; x < ref.width(); ++x) {
                obs.clear();
                for (auto [s, b] : members) {
                    if (s->raster.valid(b, x, y)) obs.push_back(s->raster.value(b, x, y));
                }
                if (obs.empty()) {
                    out.set_valid(g, x, y, false);
                } else {
                    out.set_value(g, x, y, median_of(obs));
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- manifests

std::string to_string(Orbit o) {
    switch (o) {
        case Orbit::ascending: return "ascending";
        case Orbit::descending: return "descending";
        default: return "";
    }
}

Orbit parse_orbit(std::string_view s) {
    if (s == "ascending" || s == "ASCENDING") return Orbit::ascending;
    if (s == "descending" || s == "DESCENDING") return Orbit::descending;
    if (s.empty()) return Orbit::unknown;
    throw FormatError("unknown orbit direction: " + std::string(s));
}

namespace {

std::optional<double> optional_number(const std::string& field, std::string_view what) {
    if (field.empty()) return std::nullopt;
    return parse_double(field, what);
}

}  // namespace

std::vector<SceneRecord> read_scene_manifest(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const auto c_path = t.column("path"), c_sensor = t.column("sensor"), c_time = t.column("timestamp"),
               c_orbit = t.column("orbit"), c_roles = t.column("band_roles"), c_az = t.column("sun_azimuth_deg"),
               c_el = t.column("sun_elevation_deg");
    std::vector<SceneRecord> out;
    for (const auto& row : t.rows) {
        SceneRecord r;
        r.path = row[c_path];
        r.sensor = row[c_sensor];
        if (r.sensor != "S1" && r.sensor != "S2") throw FormatError("manifest: sensor must be S1 or S2");
        r.timestamp = row[c_time];
        r.orbit = parse_orbit(row[c_orbit]);
        r.band_roles = split(row[c_roles], ';');
        r.sun_azimuth = optional_number(row[c_az], "sun_azimuth_deg");
        r.sun_elevation = optional_number(row[c_el], "sun_elevation_deg");
        if (r.sun_azimuth && !(*r.sun_azimuth >= 0.0 && *r.sun_azimuth < 360.0)) {
            throw FormatError("manifest: sun_azimuth_deg must lie in [0, 360)");
        }
        out.push_back(std::move(r));
    }
    return out;
}

void write_scene_manifest(const std::filesystem::path& path, std::span<const SceneRecord> records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write manifest " + path.string());
    out << "path,sensor,timestamp,orbit,band_roles,sun_azimuth_deg,sun_elevation_deg\n";
    out.precision(17);
    for (const auto& r : records) {
        std::string roles;
        for (std::size_t i = 0; i < r.band_roles.size(); ++i) roles += (i ? ";" : "") + r.band_roles[i];
        out << r.path.generic_string() << ',' << r.sensor << ',' << r.timestamp << ',' << to_string(r.orbit) << ','
            << roles << ',';
        if (r.sun_azimuth) out << *r.sun_azimuth;
        out << ',';
        if (r.sun_elevation) out << *r.sun_elevation;
        out << '\n';
    }
}

Scene load_scene(const SceneRecord& record, const std::filesystem::path& base_dir) {
    const auto path = record.path.is_absolute() ? record.path : base_dir / record.path;
    MultiBandRaster raw = read_raster(path);
    if (static_cast<int>(record.band_roles.size()) != raw.bands()) {
        throw StructuralError("scene " + path.string() + ": band_roles count differs from raster band count");
    }
    Scene s;
    s.timestamp = record.timestamp;
    s.orbit = record.orbit;
    s.sun_azimuth = record.sun_azimuth;
    s.sun_elevation = record.sun_elevation;
    std::vector<MultiBandRaster> kept;
    for (int b = 0; b < raw.bands(); ++b) {
        const auto& role = record.band_roles[static_cast<std::size_t>(b)];
        if (role == "CLOUD_PROB" || role == "SCL") {
            const auto vals = raw.band(b);
            if (role == "CLOUD_PROB") {
                Grid<float> g(raw.width(), raw.height());
                std::ranges::copy(vals, g.values().begin());
                s.cloud_prob = std::move(g);
            } else {
                Grid<std::uint8_t> g(raw.width(), raw.height());
                for (std::size_t i = 0; i < vals.size(); ++i) {
                    g.values()[i] = static_cast<std::uint8_t>(std::clamp(vals[i], 0.0f, 255.0f));
                }
                s.scl = std::move(g);
            }
        } else {
            kept.push_back(raw.extract_band(b));
            s.band_roles.push_back(role);
        }
    }
    if (kept.empty()) throw InputError("scene " + path.string() + " has no measurement bands");
    s.raster = stack_bands(kept);
    return s;
}

bool DateRange::contains(std::string_view timestamp) const {
    const auto day = timestamp.substr(0, 10);
    if (!from.empty() && day < std::string_view(from).substr(0, 10)) return false;
    if (!to.empty() && day > std::string_view(to).substr(0, 10)) return false;
    return true;
}

MultiBandRaster build_composite(std::span<const SceneRecord> records, const std::filesystem::path& base_dir,
                                const MaskParams& params, const DateRange& dates, CompositeSummary* summary) {
    params.validate();
    CompositeSummary sum;
    std::vector<Scene> s1, s2;
    std::vector<Grid<std::uint8_t>> s2_masks;
    int s2_bands = -1;
    for (const auto& rec : records) {
        if (!dates.contains(rec.timestamp)) {
            ++sum.out_of_date_range;
            continue;
        }
        Scene s = load_scene(rec, base_dir);
        if (rec.sensor == "S1") {
            ++sum.s1_scenes;
            s1.push_back(std::move(s));
            continue;
        }
        ++sum.s2_scenes;
        s2_bands = s.raster.bands();
        if (!scene_admissible(s, params)) {
            ++sum.s2_rejected;
            continue;
        }
        s2_masks.push_back(mask_scene(s, params));
        s2.push_back(std::move(s));
    }
    std::vector<MultiBandRaster> parts;
    if (!s1.empty()) parts.push_back(s1_four_channel(s1));
    if (!s2.empty()) {
        parts.push_back(median_composite(s2, s2_masks));
    } else if (s2_bands > 0) {
        if (parts.empty()) throw InputError("composite: every optical scene was rejected and no radar scenes remain");
        const auto& ref = parts.front();
        MultiBandRaster empty(s2_bands, ref.width(), ref.height(), ref.georef());
        for (int b = 0; b < s2_bands; ++b) std::ranges::fill(empty.band_mask(b), 0);
        parts.push_back(std::move(empty));
    }
    if (parts.empty()) throw InputError("composite: no scenes within the date range");
    MultiBandRaster out = stack_bands(parts);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            if (!out.pixel_valid(x, y)) ++sum.empty_pixels;
        }
    }
    if (summary) *summary = sum;
    return out;
}

}  // namespace chm
