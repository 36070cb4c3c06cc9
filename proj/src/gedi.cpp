#include "chm/gedi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chm/csv.hpp"

namespace chm {

std::size_t SparseLabels::measurement_count() const {
    std::size_t n = 0;
    for (const auto& t : tracks) n += t.measurements.size();
    return n;
}

void SparseLabels::validate() const {
    if (width < 1 || height < 1) throw InputError("labels: patch dimensions must be positive");
    for (const auto& t : tracks) {
        std::set<std::pair<int, int>> seen;
        for (const auto& m : t.measurements) {
            if (m.px < 0 || m.py < 0 || m.px >= width || m.py >= height) {
                throw InputError("labels: measurement outside the patch in track " + t.track_key);
            }
            if (!std::isfinite(m.h)) throw InputError("labels: non-finite height in track " + t.track_key);
            if (!seen.emplace(m.px, m.py).second) {
                throw InputError("labels: track " + t.track_key + " repeats a pixel");
            }
        }
    }
}

std::vector<GediShot> filter_shots(std::span<const GediShot> shots, const GediFilterConfig& cfg) {
    std::vector<GediShot> out;
    out.reserve(shots.size());
    for (const auto& s : shots) {
        if (cfg.require_power_beam && !(s.beam_id > 5)) continue;
        if (cfg.require_quality && s.quality_flag != 1) continue;
        if (cfg.require_night && !(s.solar_elevation < 0.0)) continue;
        out.push_back(s);
    }
    return out;
}

std::vector<GediTrack> group_tracks(std::span<const GediShot> shots) {
    std::map<std::string, std::vector<GediShot>> by_key;
    for (const auto& s : shots) by_key[s.track_key].push_back(s);
    std::vector<GediTrack> out;
    out.reserve(by_key.size());
    for (auto& [key, list] : by_key) {
        std::ranges::stable_sort(list, {}, &GediShot::acquisition_time);
        out.push_back({key, std::move(list)});
    }
    return out;
}

SparseLabels rasterize_tracks(std::span<const GediTrack> tracks, const GeoRef& georef, int width, int height,
                              CollisionRule collisions) {
    georef.validate();
    if (width < 1 || height < 1) throw InputError("rasterize_tracks: patch dimensions must be positive");
    SparseLabels labels{width, height, {}};
    for (const auto& t : tracks) {
        LabelTrack lt{t.track_key, {}};
        std::map<std::pair<int, int>, std::size_t> slot;
        for (const auto& s : t.shots) {
            const Pixel p = containing_pixel(georef, s.x, s.y);
            if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height) continue;
            auto [it, fresh] = slot.try_emplace({p.x, p.y}, lt.measurements.size());
            if (fresh) {
                lt.measurements.push_back({p.x, p.y, s.rh100});
            } else if (collisions == CollisionRule::keep_max) {
                auto& m = lt.measurements[it->second];
                m.h = std::max(m.h, s.rh100);
            }
        }
        if (!lt.measurements.empty()) labels.tracks.push_back(std::move(lt));
    }
    return labels;
}

LabelStats label_stats(const SparseLabels& labels) {
    LabelStats st;
    double sum = 0.0;
    double max_h = 0.0;
    for (const auto& t : labels.tracks) {
        for (const auto& m : t.measurements) {
            ++st.count;
            sum += m.h;
            max_h = std::max(max_h, m.h);
        }
    }
    if (st.count == 0) return st;
    const double mean = sum / static_cast<double>(st.count);
    double ss = 0.0;
    st.histogram.assign(static_cast<std::size_t>(std::floor(max_h)) + 1, 0);
    for (const auto& t : labels.tracks) {
        for (const auto& m : t.measurements) {
            ss += (m.h - mean) * (m.h - mean);
            const auto bin = static_cast<std::size_t>(std::max(0.0, std::floor(m.h)));
            ++st.histogram[std::min(bin, st.histogram.size() - 1)];
        }
    }
    st.mean = mean;
    st.stddev = std::sqrt(ss / static_cast<double>(st.count));
    return st;
}

// ---------------------------------------------------------------- I/O

ShotReadReport read_shots(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const auto c_lon = t.column("lon"), c_lat = t.column("lat"), c_rh = t.column("rh100_m"),
               c_beam = t.column("beam_id"), c_q = t.column("quality_flag"), c_sun = t.column("solar_elevation_deg"),
               c_key = t.column("track_key"), c_time = t.column("time_iso8601");
    ShotReadReport rep;
    for (const auto& row : t.rows) {
        GediShot s;
        s.x = parse_double(row[c_lon], "lon");
        s.y = parse_double(row[c_lat], "lat");
        s.rh100 = parse_double(row[c_rh], "rh100_m");
        s.beam_id = static_cast<int>(parse_int(row[c_beam], "beam_id"));
        s.quality_flag = static_cast<int>(parse_int(row[c_q], "quality_flag"));
        s.solar_elevation = parse_double(row[c_sun], "solar_elevation_deg");
        s.track_key = row[c_key];
        s.acquisition_time = row[c_time];
        if (s.quality_flag != 0 && s.quality_flag != 1) throw FormatError("shots: quality_flag must be 0 or 1");
        if (!(s.rh100 >= 0.0 && s.rh100 <= max_plausible_rh100)) {
            ++rep.implausible;
            continue;
        }
        rep.shots.push_back(std::move(s));
    }
    return rep;
}

void write_shots(const std::filesystem::path& path, std::span<const GediShot> shots) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write shots file " + path.string());
    out << "lon,lat,rh100_m,beam_id,quality_flag,solar_elevation_deg,track_key,time_iso8601\n";
    out.precision(17);
    for (const auto& s : shots) {
        out << s.x << ',' << s.y << ',' << s.rh100 << ',' << s.beam_id << ',' << s.quality_flag << ','
            << s.solar_elevation << ',' << s.track_key << ',' << s.acquisition_time << '\n';
    }
}

std::string labels_to_json(const SparseLabels& labels) {
    nlohmann::ordered_json j;
    j["width"] = labels.width;
    j["height"] = labels.height;
    j["tracks"] = nlohmann::ordered_json::array();
    for (const auto& t : labels.tracks) {
        nlohmann::ordered_json jt;
        jt["key"] = t.track_key;
        std::vector<int> px, py;
        std::vector<double> h;
        for (const auto& m : t.measurements) {
            px.push_back(m.px);
            py.push_back(m.py);
            h.push_back(m.h);
        }
        jt["px"] = px;
        jt["py"] = py;
        jt["h"] = h;
        j["tracks"].push_back(std::move(jt));
    }
    return j.dump();
}

SparseLabels labels_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("labels: invalid JSON: ") + e.what());
    }
    try {
        SparseLabels labels;
        labels.width = j.at("width").get<int>();
        labels.height = j.at("height").get<int>();
        for (const auto& jt : j.at("tracks")) {
            LabelTrack t;
            t.track_key = jt.at("key").get<std::string>();
            const auto px = jt.at("px").get<std::vector<int>>();
            const auto py = jt.at("py").get<std::vector<int>>();
            const auto h = jt.at("h").get<std::vector<double>>();
            if (px.size() != py.size() || px.size() != h.size()) {
                throw StructuralError("labels: px/py/h arrays differ in length for track " + t.track_key);
            }
            for (std::size_t i = 0; i < px.size(); ++i) t.measurements.push_back({px[i], py[i], h[i]});
            labels.tracks.push_back(std::move(t));
        }
        labels.validate();
        return labels;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("labels: malformed record: ") + e.what());
    }
}

SparseLabels read_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open labels file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return labels_from_json(ss.str());
}

void write_labels(const std::filesystem::path& path, const SparseLabels& labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write labels file " + path.string());
    out << labels_to_json(labels) << '\n';
}

}  // namespace chm
