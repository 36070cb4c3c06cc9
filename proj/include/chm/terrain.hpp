#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "chm/gedi.hpp"
#include "chm/raster.hpp"

namespace chm {

/// Side length of the slope window in pixels.
inline constexpr int slope_window = 5;

/// Slope in degrees from the elevation range over the centered 5x5 window:
/// atan((max - min) / (5 * pixel_size)). Pixels whose window is truncated by
/// the border or touches an invalid elevation are invalid.
MultiBandRaster slope_5x5(const MultiBandRaster& elevation);

struct SlopeFilterResult {
    std::vector<GediShot> shots;
    std::size_t removed = 0;
    /// Shots kept because their slope pixel is invalid or off the grid.
    std::size_t unknown_slope = 0;
};

/// Keeps shots whose slope is at most `threshold_deg`; removes those exceeding it.
SlopeFilterResult filter_by_slope(std::span<const GediShot> shots, const MultiBandRaster& slope,
                                  double threshold_deg = 20.0);

}  // namespace chm
