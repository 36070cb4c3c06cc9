#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chm/raster.hpp"

namespace chm {

enum class Orbit { unknown, ascending, descending };

/// One acquisition. `band_roles` names every band of `raster` ("VV", "VH",
/// "B2" ... "B12"). Optical scenes carry their cloud probability (0-100) and
/// scene-classification codes as separate grids.
struct Scene {
    MultiBandRaster raster;
    std::string timestamp;
    Orbit orbit = Orbit::unknown;
    std::vector<std::string> band_roles;
    std::optional<Grid<float>> cloud_prob;
    std::optional<Grid<std::uint8_t>> scl;
    /// Degrees clockwise from north, in [0, 360).
    std::optional<double> sun_azimuth;
    std::optional<double> sun_elevation;

    /// Index of the band with the given role, or -1.
    int band_index(std::string_view role) const;
};

struct MaskParams {
    double min_cloud_free_fraction = 0.10;
    /// Percent; pixels strictly above are clouds, strictly below are clear.
    double cloud_prob_threshold = 30.0;
    /// Map units along the anti-solar direction.
    double shadow_search_distance = 1000.0;
    double dilation_radius = 300.0;
    /// NIR reflectance scaled to [0, 1].
    double dark_pixel_nir_threshold = 0.15;
    /// SCL codes that may be shadow: 2 dark area, 3 cloud shadow.
    std::set<int> dark_scl_classes{2, 3};
    std::string nir_band = "B8";

    void validate() const;
};

/// True when at least `min_cloud_free_fraction` of the valid pixels have a
/// cloud probability below the threshold.
bool scene_admissible(const Scene& s, const MaskParams& p);

/// Per-pixel validity after removing clouds, dark pixels on the anti-solar ray
/// of a cloud, and a disk around both. Pixels invalid in the scene raster stay
/// invalid.
Grid<std::uint8_t> mask_scene(const Scene& s, const MaskParams& p);

/// Pixels whose center lies within Euclidean `radius` (pixels) of a seed.
/// Exact squared distance transform; seeds are nonzero entries.
Grid<std::uint8_t> dilate_disk(const Grid<std::uint8_t>& seeds, double radius);

/// Per-pixel, per-band median over observations valid in both the scene raster
/// and that scene's mask. Even counts take the midpoint of the central pair.
/// Pixels without observations are invalid.
MultiBandRaster median_composite(std::span<const Scene> scenes, std::span<const Grid<std::uint8_t>> masks);

/// Four-band radar composite with fixed band order
/// [VV ascending, VV descending, VH ascending, VH descending].
MultiBandRaster s1_four_channel(std::span<const Scene> scenes);

inline constexpr int s1_vv_asc = 0;
inline constexpr int s1_vv_desc = 1;
inline constexpr int s1_vh_asc = 2;
inline constexpr int s1_vh_desc = 3;

// ---------------------------------------------------------------- manifests

/// One row of a scene manifest.
///
/// Columns: path,sensor,timestamp,orbit,band_roles,sun_azimuth_deg,sun_elevation_deg
///   sensor      S1 | S2
///   orbit       ascending | descending | (empty)
///   band_roles  ';'-separated role per raster band; CLOUD_PROB and SCL bands
///               are split off into the scene's cloud and class grids
///   sun_*       degrees; empty for radar scenes
struct SceneRecord {
    std::filesystem::path path;
    std::string sensor;
    std::string timestamp;
    Orbit orbit = Orbit::unknown;
    std::vector<std::string> band_roles;
    std::optional<double> sun_azimuth;
    std::optional<double> sun_elevation;
};

std::vector<SceneRecord> read_scene_manifest(const std::filesystem::path& path);
void write_scene_manifest(const std::filesystem::path& path, std::span<const SceneRecord> records);

/// Loads the raster named by the record, relative paths resolved against `base_dir`.
Scene load_scene(const SceneRecord& record, const std::filesystem::path& base_dir);

/// Inclusive date window compared on the leading YYYY-MM-DD of timestamps.
struct DateRange {
    std::string from;
    std::string to;
    bool contains(std::string_view timestamp) const;
};

struct CompositeSummary {
    int s1_scenes = 0;
    int s2_scenes = 0;
    int s2_rejected = 0;
    int out_of_date_range = 0;
    std::size_t empty_pixels = 0;
};

/// Radar four-channel composite followed by masked optical median bands,
/// stacked in that order. Either sensor may be absent.
MultiBandRaster build_composite(std::span<const SceneRecord> records, const std::filesystem::path& base_dir,
                                const MaskParams& params, const DateRange& dates, CompositeSummary* summary = nullptr);

std::string to_string(Orbit o);
Orbit parse_orbit(std::string_view s);

}  // namespace chm
