#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "chm/raster.hpp"

namespace chm::test {

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("chm_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline MultiBandRaster random_raster(std::mt19937_64& rng, int bands, int w, int h, double invalid_share = 0.1) {
    MultiBandRaster r(bands, w, h, GeoRef{500000.0, 4100000.0, 10.0, "EPSG:32633"});
    std::uniform_real_distribution<float> v(-50.0f, 50.0f);
    std::bernoulli_distribution drop(invalid_share);
    for (int b = 0; b < bands; ++b) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                r.set_value(b, x, y, v(rng));
                r.set_valid(b, x, y, !drop(rng));
            }
        }
    }
    return r;
}

}  // namespace chm::test
