#pragma once

#include <functional>
#include <span>
#include <vector>

#include "chm/raster.hpp"

namespace chm {

inline constexpr int default_core_size = 312;
inline constexpr int default_context_border = 100;

struct Tile {
    /// Output region owned by this tile; cores partition the extent.
    Window core;
    /// Core grown by the border on every side, not clipped. `padded` marks a
    /// context reaching outside the extent; those pixels are read as nodata.
    Window context;
    bool padded = false;
};

struct TilePlan {
    int extent_width = 0;
    int extent_height = 0;
    int core_size = default_core_size;
    int border = default_context_border;
    std::vector<Tile> tiles;
};

/// Row-major cores of core_size x core_size; the last row and column are
/// truncated to the extent.
TilePlan plan_tiles(int extent_width, int extent_height, int core_size = default_core_size,
                    int border = default_context_border);

/// Maps a context raster to a single-band prediction of the same spatial shape.
/// Must be callable concurrently when predict_mosaic runs with several threads.
using Predictor = std::function<MultiBandRaster(const MultiBandRaster&)>;

/// Runs the predictor on every context window and keeps only the core part of
/// each prediction. Output georef and shape follow the input.
MultiBandRaster predict_mosaic(const TilePlan& plan, const MultiBandRaster& input, const Predictor& predict,
                               int threads = 1);

namespace predictors {

/// Returns one input band unchanged (validity included).
Predictor identity_band(int band);
/// Constant value everywhere.
Predictor constant(float value);
/// bias + sum_b weights[b] * band_b; invalid where any used band is invalid.
Predictor linear(std::vector<float> weights, float bias);

}  // namespace predictors

}  // namespace chm
