#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "chm/composite.hpp"
#include "chm/gedi.hpp"
#include "chm/raster.hpp"
#include "chm/shiftloss.hpp"

namespace chm {

struct SynthConfig {
    std::uint64_t seed = 1;
    int width = 128;
    int height = 128;
    double pixel_size = 10.0;
    int tracks = 5;
    /// Along-track shot spacing in map units.
    double shot_spacing = 60.0;
    /// Planted per-track displacement radius in pixels.
    double shift_radius = std::numbers::sqrt2;
    /// Fraction of extra shots failing one of the quality predicates.
    double reject_fraction = 0.15;
    int s2_scenes = 4;
    int s1_scenes_per_orbit = 2;
};

/// Noise-free synthetic patch with planted per-track geolocation shifts.
struct SynthPatch {
    GeoRef georef;
    /// Dense canopy height: smooth random field thresholded into forest patches.
    MultiBandRaster truth;
    /// 14 bands, each a noisy affine function of height.
    MultiBandRaster features;
    /// All shots including ones failing quality predicates; positions carry the planted shift.
    std::vector<GediShot> shots;
    std::vector<std::string> track_keys;
    std::vector<Shift> planted;
    /// Filtered, rasterized (displaced) labels.
    SparseLabels labels;
    /// Same tracks at their true positions.
    SparseLabels true_labels;
    /// 30 m surface elevation covering the patch, with a steep ridge.
    MultiBandRaster elevation;
};

/// Smooth field in [0, ~45] m with bare ground between forest stands.
MultiBandRaster synth_height_field(std::uint64_t seed, int width, int height, const GeoRef& georef);

SynthPatch synth_patch(const SynthConfig& cfg);

/// Optical and radar scenes over the patch grid plus their manifest rows
/// (paths relative to the fixture directory).
struct SynthScenes {
    std::vector<MultiBandRaster> rasters;
    std::vector<SceneRecord> records;
};

SynthScenes synth_scenes(const SynthConfig& cfg, const MultiBandRaster& truth);

/// Writes a complete fixture directory and returns the written file names.
///   truth.tif features.tif pred_perfect.tif elevation.tif
///   shots.csv labels.json labels_true.json pairs.csv tiles.txt
///   scenes/*.tif manifest.csv planted.json
std::vector<std::string> write_synth_fixture(const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace chm
