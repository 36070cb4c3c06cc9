#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chm/error.hpp"

namespace chm {

/// Affine placement of a pixel grid in map space.
///
/// Pixel (0,0) is the cell whose lower-left corner sits at (origin_x, origin_y);
/// the pixel row index grows with map y (northing). Map coordinates refer to
/// pixel centers, so pixel (x,y) maps to origin + (x + 0.5, y + 0.5) * pixel_size.
struct GeoRef {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_size = 1.0;
    std::string crs_id;

    /// Throws InputError unless pixel_size is finite and positive.
    void validate() const;

    bool operator==(const GeoRef&) const = default;
};

struct MapPoint {
    double x = 0.0;
    double y = 0.0;
};

/// Continuous pixel coordinates; integer values are pixel centers.
struct PixelPoint {
    double x = 0.0;
    double y = 0.0;
};

struct Pixel {
    int x = 0;
    int y = 0;
    bool operator==(const Pixel&) const = default;
};

MapPoint pixel_to_geo(const GeoRef& g, double x, double y);
PixelPoint geo_to_pixel(const GeoRef& g, double map_x, double map_y);

/// The pixel whose cell contains the map point. Points on a cell edge belong
/// to the cell on their upper/right side.
Pixel containing_pixel(const GeoRef& g, double map_x, double map_y);

/// Dense row-major W x H grid.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(checked(width)) * static_cast<std::size_t>(checked(height)), fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(int x, int y) { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const { return data_[index(x, y)]; }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    bool operator==(const Grid&) const = default;

private:
    static int checked(int n) {
        if (n < 0) throw InputError("grid dimension must be non-negative");
        return n;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// Rectangular pixel window. Origin may be negative or extend past the parent
/// extent; see `contained_in`.
struct Window {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;

    bool contained_in(int parent_width, int parent_height) const {
        return x0 >= 0 && y0 >= 0 && x0 + width <= parent_width && y0 + height <= parent_height;
    }
    long long area() const { return static_cast<long long>(width) * height; }
    bool operator==(const Window&) const = default;
};

enum class PadPolicy { reject, nodata_pad };

/// C x W x H grid of 32-bit values with a validity mask per band and pixel.
///
/// A pixel is valid when every band is valid there. Values stored under an
/// invalid mask entry are unspecified and must not be read.
class MultiBandRaster {
public:
    MultiBandRaster() = default;
    /// All values zero and valid.
    MultiBandRaster(int bands, int width, int height, GeoRef georef = {});

    int bands() const { return bands_; }
    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_); }
    const GeoRef& georef() const { return georef_; }
    void set_georef(GeoRef g);

    float value(int band, int x, int y) const { return values_[offset(band, x, y)]; }
    void set_value(int band, int x, int y, float v) { values_[offset(band, x, y)] = v; }

    bool valid(int band, int x, int y) const { return valid_[offset(band, x, y)] != 0; }
    void set_valid(int band, int x, int y, bool v) { valid_[offset(band, x, y)] = v ? 1 : 0; }

    bool pixel_valid(int x, int y) const;
    void set_pixel_valid(int x, int y, bool v);

    std::span<float> band(int b);
    std::span<const float> band(int b) const;
    std::span<std::uint8_t> band_mask(int b);
    std::span<const std::uint8_t> band_mask(int b) const;

    /// W x H mask, true where every band is valid.
    Grid<std::uint8_t> pixel_mask() const;

    /// Copy of a single band as a one-band raster.
    MultiBandRaster extract_band(int b) const;

    /// Same shape, georef, masks, and bit-identical values at valid entries.
    friend bool operator==(const MultiBandRaster& a, const MultiBandRaster& b);

private:
    std::size_t offset(int band, int x, int y) const {
        return (static_cast<std::size_t>(band) * static_cast<std::size_t>(height_) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int bands_ = 0;
    int width_ = 0;
    int height_ = 0;
    GeoRef georef_;
    std::vector<float> values_;
    std::vector<std::uint8_t> valid_;
};

/// Sub-raster covering `w`. The result's georef origin is translated to the
/// window origin. Pixels outside the parent are invalid under nodata_pad and an
/// InputError under reject.
MultiBandRaster extract_window(const MultiBandRaster& r, const Window& w, PadPolicy policy);

/// Concatenate bands of rasters sharing one grid.
MultiBandRaster stack_bands(std::span<const MultiBandRaster> rasters);

}  // namespace chm
