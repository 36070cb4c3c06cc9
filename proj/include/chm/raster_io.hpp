#pragma once

#include <filesystem>
#include <limits>

#include "chm/raster.hpp"

namespace chm {

/// On-disk raster containers.
///
/// geotiff: little-endian baseline TIFF, uncompressed IEEE float32 samples,
///   one strip per band (PlanarConfiguration=2). Placement is written as a
///   ModelTransformationTag whose y scale is positive, matching the in-memory
///   row order (row index grows with northing); north-up files using
///   ModelPixelScale/ModelTiepoint are flipped on read. The CRS identifier is
///   stored as the GTCitationGeoKey string and the nodata sentinel as the
///   GDAL_NODATA tag, which applies to every band.
///
/// raw: little-endian header followed by band-major, row-major float32
///   samples. Header layout (48 bytes, then the CRS identifier):
///     char[4] "CHMR" | u32 bands | u32 width | u32 height |
///     f64 pixel_size | f64 origin_x | f64 origin_y | f32 nodata |
///     u32 crs_length | char[crs_length] crs_id
enum class RasterFormat { auto_detect, geotiff, raw };

struct RasterWriteOptions {
    /// Written at invalid entries; valid values equal to it are rejected.
    float nodata = std::numeric_limits<float>::quiet_NaN();
};

/// Extension-based choice: .tif/.tiff -> geotiff, .chmr/.raw -> raw.
RasterFormat format_from_extension(const std::filesystem::path& path);

MultiBandRaster read_raster(const std::filesystem::path& path, RasterFormat format = RasterFormat::auto_detect);

void write_raster(const MultiBandRaster& raster, const std::filesystem::path& path,
                  RasterFormat format = RasterFormat::auto_detect, const RasterWriteOptions& options = {});

}  // namespace chm
