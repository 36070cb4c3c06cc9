#include "chm/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace chm {

MultiBandRaster slope_5x5(const MultiBandRaster& elevation) {
    if (elevation.bands() != 1) throw InputError("slope_5x5 expects a single-band elevation raster");
    const int w = elevation.width(), h = elevation.height();
    const int r = slope_window / 2;
    const double run = slope_window * elevation.georef().pixel_size;
    MultiBandRaster out(1, w, h, elevation.georef());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x < r || y < r || x + r >= w || y + r >= h) {
                out.set_value(0, x, y, 0.0f);
                out.set_valid(0, x, y, false);
                continue;
            }
            float lo = elevation.value(0, x, y), hi = lo;
            bool ok = true;
            for (int dy = -r; dy <= r && ok; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    if (!elevation.valid(0, x + dx, y + dy)) {
                        ok = false;
                        break;
                    }
                    const float v = elevation.value(0, x + dx, y + dy);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            }
            if (!ok) {
                out.set_value(0, x, y, 0.0f);
                out.set_valid(0, x, y, false);
                continue;
            }
            const double rise = static_cast<double>(hi) - static_cast<double>(lo);
            out.set_value(0, x, y, static_cast<float>(std::atan(rise / run) * 180.0 / std::numbers::pi));
        }
    }
    return out;
}

SlopeFilterResult filter_by_slope(std::span<const GediShot> shots, const MultiBandRaster& slope, double threshold_deg) {
    if (slope.bands() != 1) throw InputError("filter_by_slope expects a single-band slope raster");
    SlopeFilterResult res;
    res.shots.reserve(shots.size());
    for (const auto& s : shots) {
        const Pixel p = containing_pixel(slope.georef(), s.x, s.y);
        if (p.x < 0 || p.y < 0 || p.x >= slope.width() || p.y >= slope.height() || !slope.valid(0, p.x, p.y)) {
            ++res.unknown_slope;
            res.shots.push_back(s);
            continue;
        }
        if (static_cast<double>(slope.value(0, p.x, p.y)) > threshold_deg) {
            ++res.removed;
        } else {
            res.shots.push_back(s);
        }
    }
    return res;
}

}  // namespace chm
