#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chm/raster.hpp"

namespace chm {

/// One GEDI footprint. `x`/`y` are map coordinates in the CRS of the target
/// raster grid (ingested from the `lon`/`lat` columns without reprojection).
struct GediShot {
    double x = 0.0;
    double y = 0.0;
    double rh100 = 0.0;
    int beam_id = 0;
    int quality_flag = 0;
    double solar_elevation = 0.0;
    /// One key per (granule, beam): a single laser pass.
    std::string track_key;
    /// ISO 8601, uniformly formatted so that lexical order is time order.
    std::string acquisition_time;

    bool operator==(const GediShot&) const = default;
};

struct GediTrack {
    std::string track_key;
    std::vector<GediShot> shots;
};

struct Measurement {
    int px = 0;
    int py = 0;
    double h = 0.0;
    bool operator==(const Measurement&) const = default;
};

struct LabelTrack {
    std::string track_key;
    std::vector<Measurement> measurements;
    bool operator==(const LabelTrack&) const = default;
};

/// Sparse per-patch labels: the measurement set of each track on a W x H grid.
/// A pixel carries a label of a track iff that track has a measurement there.
struct SparseLabels {
    int width = 0;
    int height = 0;
    std::vector<LabelTrack> tracks;

    std::size_t measurement_count() const;
    /// InputError unless every measurement is in bounds and no track repeats a pixel.
    void validate() const;
    bool operator==(const SparseLabels&) const = default;
};

struct GediFilterConfig {
    bool require_power_beam = true;  // beam_id > 5
    bool require_quality = true;     // quality_flag == 1
    bool require_night = true;       // solar_elevation < 0
    double slope_threshold_deg = 20.0;
};

/// Shots satisfying every enabled predicate, order preserved.
std::vector<GediShot> filter_shots(std::span<const GediShot> shots, const GediFilterConfig& cfg);

/// One track per distinct key (ordered by key); shots sorted by acquisition time.
std::vector<GediTrack> group_tracks(std::span<const GediShot> shots);

enum class CollisionRule { keep_max, keep_first };

/// Snaps each shot to the pixel containing it; shots off the patch are dropped.
SparseLabels rasterize_tracks(std::span<const GediTrack> tracks, const GeoRef& georef, int width, int height,
                              CollisionRule collisions = CollisionRule::keep_max);

struct LabelStats {
    std::size_t count = 0;
    std::optional<double> mean;
    std::optional<double> stddev;  // population standard deviation
    /// histogram[i] counts heights in [i, i+1) meters.
    std::vector<std::size_t> histogram;
};

LabelStats label_stats(const SparseLabels& labels);

// ---------------------------------------------------------------- I/O

/// Shot table columns: lon,lat,rh100_m,beam_id,quality_flag,solar_elevation_deg,track_key,time_iso8601
struct ShotReadReport {
    std::vector<GediShot> shots;
    /// Rows dropped at ingestion because rh100 is outside [0, 120] m.
    std::size_t implausible = 0;
};

ShotReadReport read_shots(const std::filesystem::path& path);
void write_shots(const std::filesystem::path& path, std::span<const GediShot> shots);

/// JSON record: {"width":W,"height":H,"tracks":[{"key":k,"px":[..],"py":[..],"h":[..]}]}
std::string labels_to_json(const SparseLabels& labels);
SparseLabels labels_from_json(const std::string& text);
SparseLabels read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const SparseLabels& labels);

inline constexpr double max_plausible_rh100 = 120.0;

}  // namespace chm
