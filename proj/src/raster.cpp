#include "chm/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace chm {

void GeoRef::validate() const {
    if (!std::isfinite(pixel_size) || pixel_size <= 0.0) {
        throw InputError("georef pixel_size must be positive and finite");
    }
    if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
        throw InputError("georef origin must be finite");
    }
}

MapPoint pixel_to_geo(const GeoRef& g, double x, double y) {
    return {g.origin_x + (x + 0.5) * g.pixel_size, g.origin_y + (y + 0.5) * g.pixel_size};
}

PixelPoint geo_to_pixel(const GeoRef& g, double map_x, double map_y) {
    return {(map_x - g.origin_x) / g.pixel_size - 0.5, (map_y - g.origin_y) / g.pixel_size - 0.5};
}

Pixel containing_pixel(const GeoRef& g, double map_x, double map_y) {
    const double fx = std::floor((map_x - g.origin_x) / g.pixel_size);
    const double fy = std::floor((map_y - g.origin_y) / g.pixel_size);
    constexpr double lim = 1e9;
    return {static_cast<int>(std::clamp(fx, -lim, lim)), static_cast<int>(std::clamp(fy, -lim, lim))};
}

MultiBandRaster::MultiBandRaster(int bands, int width, int height, GeoRef georef)
    : bands_(bands), width_(width), height_(height), georef_(std::move(georef)) {
    if (bands < 1 || width < 1 || height < 1) {
        throw InputError("raster dimensions must be at least 1x1x1");
    }
    georef_.validate();
    const std::size_t n = static_cast<std::size_t>(bands) * pixel_count();
    values_.assign(n, 0.0f);
    valid_.assign(n, 1);
}

void MultiBandRaster::set_georef(GeoRef g) {
    g.validate();
    georef_ = std::move(g);
}

bool MultiBandRaster::pixel_valid(int x, int y) const {
    for (int b = 0; b < bands_; ++b) {
        if (!valid(b, x, y)) return false;
    }
    return true;
}

void MultiBandRaster::set_pixel_valid(int x, int y, bool v) {
    for (int b = 0; b < bands_; ++b) set_valid(b, x, y, v);
}

std::span<float> MultiBandRaster::band(int b) {
    return std::span<float>(values_).subspan(static_cast<std::size_t>(b) * pixel_count(), pixel_count());
}

std::span<const float> MultiBandRaster::band(int b) const {
    return std::span<const float>(values_).subspan(static_cast<std::size_t>(b) * pixel_count(), pixel_count());
}

std::span<std::uint8_t> MultiBandRaster::band_mask(int b) {
    return std::span<std::uint8_t>(valid_).subspan(static_cast<std::size_t>(b) * pixel_count(), pixel_count());
}

std::span<const std::uint8_t> MultiBandRaster::band_mask(int b) const {
    return std::span<const std::uint8_t>(valid_).subspan(static_cast<std::size_t>(b) * pixel_count(),
                                                         pixel_count());
}

Grid<std::uint8_t> MultiBandRaster::pixel_mask() const {
    Grid<std::uint8_t> mask(width_, height_, 1);
    auto out = mask.values();
    for (int b = 0; b < bands_; ++b) {
        auto m = band_mask(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] & m[i];
    }
    return mask;
}

MultiBandRaster MultiBandRaster::extract_band(int b) const {
    if (b < 0 || b >= bands_) throw InputError("band index out of range");
    MultiBandRaster out(1, width_, height_, georef_);
    std::ranges::copy(band(b), out.band(0).begin());
    std::ranges::copy(band_mask(b), out.band_mask(0).begin());
    return out;
}

bool operator==(const MultiBandRaster& a, const MultiBandRaster& b) {
    if (a.bands_ != b.bands_ || a.width_ != b.width_ || a.height_ != b.height_) return false;
    if (!(a.georef_ == b.georef_)) return false;
    if (a.valid_ != b.valid_) return false;
    for (std::size_t i = 0; i < a.values_.size(); ++i) {
        if (a.valid_[i] && std::memcmp(&a.values_[i], &b.values_[i], sizeof(float)) != 0) return false;
    }
    return true;
}

MultiBandRaster extract_window(const MultiBandRaster& r, const Window& w, PadPolicy policy) {
    if (w.width < 1 || w.height < 1) throw InputError("window dimensions must be positive");
    const bool inside = w.contained_in(r.width(), r.height());
    if (!inside && policy == PadPolicy::reject) {
        throw InputError("window extends outside the raster");
    }
    GeoRef g = r.georef();
    g.origin_x += w.x0 * g.pixel_size;
    g.origin_y += w.y0 * g.pixel_size;
    MultiBandRaster out(r.bands(), w.width, w.height, g);
    for (int b = 0; b < r.bands(); ++b) {
        for (int y = 0; y < w.height; ++y) {
            const int sy = w.y0 + y;
            for (int x = 0; x < w.width; ++x) {
                const int sx = w.x0 + x;
                if (sx < 0 || sy < 0 || sx >= r.width() || sy >= r.height()) {
                    out.set_value(b, x, y, 0.0f);
                    out.set_valid(b, x, y, false);
                } else {
                    out.set_value(b, x, y, r.value(b, sx, sy));
                    out.set_valid(b, x, y, r.valid(b, sx, sy));
                }
            }
        }
    }
    return out;
}

MultiBandRaster stack_bands(std::span<const MultiBandRaster> rasters) {
    if (rasters.empty()) throw InputError("stack_bands needs at least one raster");
    const auto& first = rasters.front();
    int total = 0;
    for (const auto& r : rasters) {
        if (r.width() != first.width() || r.height() != first.height()) {
            throw StructuralError("stack_bands: rasters do not share a grid shape");
        }
        total += r.bands();
    }
    MultiBandRaster out(total, first.width(), first.height(), first.georef());
    int dst = 0;
    for (const auto& r : rasters) {
        for (int b = 0; b < r.bands(); ++b, ++dst) {
            std::ranges::copy(r.band(b), out.band(dst).begin());
            std::ranges::copy(r.band_mask(b), out.band_mask(dst).begin());
        }
    }
    return out;
}

}  // namespace chm
