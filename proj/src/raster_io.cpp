#include "chm/raster_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chm {
namespace {

using Bytes = std::vector<std::uint8_t>;

// Little-endian encoding helpers.
void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f32(Bytes& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(Bytes& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    explicit Reader(const Bytes& data) : data_(data) {}

    std::uint16_t u16(std::size_t at) const {
        need(at, 2);
        return static_cast<std::uint16_t>(data_[at] | (data_[at + 1] << 8));
    }
    std::uint32_t u32(std::size_t at) const {
        need(at, 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | data_[at + static_cast<std::size_t>(i)];
        return v;
    }
    std::uint64_t u64(std::size_t at) const {
        need(at, 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | data_[at + static_cast<std::size_t>(i)];
        return v;
    }
    float f32(std::size_t at) const { return std::bit_cast<float>(u32(at)); }
    double f64(std::size_t at) const { return std::bit_cast<double>(u64(at)); }

    void need(std::size_t at, std::size_t n) const {
        if (at > data_.size() || n > data_.size() - at) throw FormatError("raster file truncated");
    }
    std::size_t size() const { return data_.size(); }
    const std::uint8_t* ptr(std::size_t at) const { return data_.data() + at; }

private:
    const Bytes& data_;
};

Bytes slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open raster file: " + path.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

void spill(const std::filesystem::path& path, const Bytes& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open raster file for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw InputError("failed writing raster file: " + path.string());
}

bool is_nodata(float v, float nodata) {
    if (std::isnan(nodata)) return std::isnan(v);
    return v == nodata;
}

void check_sentinel(const MultiBandRaster& r, float nodata) {
    for (int b = 0; b < r.bands(); ++b) {
        auto vals = r.band(b);
        auto mask = r.band_mask(b);
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (mask[i] && is_nodata(vals[i], nodata)) {
                throw InputError("valid raster value collides with the nodata sentinel");
            }
        }
    }
}

float encoded(const MultiBandRaster& r, int b, std::size_t i, float nodata) {
    return r.band_mask(b)[i] ? r.band(b)[i] : nodata;
}

// ---------------------------------------------------------------- raw

constexpr std::array<char, 4> raw_magic{'C', 'H', 'M', 'R'};
constexpr std::size_t raw_header_size = 48;

void write_raw(const MultiBandRaster& r, const std::filesystem::path& path, float nodata) {
    Bytes out;
    out.reserve(raw_header_size + r.bands() * r.pixel_count() * 4);
    for (char c : raw_magic) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, static_cast<std::uint32_t>(r.bands()));
    put_u32(out, static_cast<std::uint32_t>(r.width()));
    put_u32(out, static_cast<std::uint32_t>(r.height()));
    put_f64(out, r.georef().pixel_size);
    put_f64(out, r.georef().origin_x);
    put_f64(out, r.georef().origin_y);
    put_f32(out, nodata);
    const std::string& crs = r.georef().crs_id;
    put_u32(out, static_cast<std::uint32_t>(crs.size()));
    out.insert(out.end(), crs.begin(), crs.end());
    for (int b = 0; b < r.bands(); ++b) {
        for (std::size_t i = 0; i < r.pixel_count(); ++i) put_f32(out, encoded(r, b, i, nodata));
    }
    spill(path, out);
}

MultiBandRaster read_raw(const Bytes& data) {
    Reader rd(data);
    if (data.size() < raw_header_size || !std::equal(raw_magic.begin(), raw_magic.end(), data.begin())) {
        throw FormatError("raw raster: bad magic or short header");
    }
    const std::uint32_t c = rd.u32(4), w = rd.u32(8), h = rd.u32(12);
    if (c == 0 || w == 0 || h == 0 || c > 65535 || w > (1u << 20) || h > (1u << 20)) {
        throw FormatError("raw raster: invalid dimensions in header");
    }
    GeoRef g;
    g.pixel_size = rd.f64(16);
    g.origin_x = rd.f64(24);
    g.origin_y = rd.f64(32);
    const float nodata = rd.f32(40);
    const std::uint32_t crs_len = rd.u32(44);
    if (!(g.pixel_size > 0.0) || !std::isfinite(g.pixel_size)) throw FormatError("raw raster: invalid pixel size");
    if (crs_len > 4096 || data.size() < raw_header_size + crs_len) throw FormatError("raw raster: invalid CRS length");
    g.crs_id.assign(reinterpret_cast<const char*>(data.data()) + raw_header_size, crs_len);
    const std::size_t payload = raw_header_size + crs_len;
    const std::size_t expected = payload + std::size_t{c} * w * h * 4;
    if (data.size() != expected) {
        throw StructuralError("raw raster: payload size does not match bands x width x height");
    }
    MultiBandRaster r(static_cast<int>(c), static_cast<int>(w), static_cast<int>(h), g);
    std::size_t at = payload;
    for (int b = 0; b < r.bands(); ++b) {
        auto vals = r.band(b);
        auto mask = r.band_mask(b);
        for (std::size_t i = 0; i < vals.size(); ++i, at += 4) {
            const float v = rd.f32(at);
            vals[i] = v;
            mask[i] = is_nodata(v, nodata) ? 0 : 1;
        }
    }
    return r;
}

// ---------------------------------------------------------------- geotiff

namespace tag {
constexpr std::uint16_t image_width = 256;
constexpr std::uint16_t image_length = 257;
constexpr std::uint16_t bits_per_sample = 258;
constexpr std::uint16_t compression = 259;
constexpr std::uint16_t photometric = 262;
constexpr std::uint16_t strip_offsets = 273;
constexpr std::uint16_t samples_per_pixel = 277;
constexpr std::uint16_t rows_per_strip = 278;
constexpr std::uint16_t strip_byte_counts = 279;
constexpr std::uint16_t planar_config = 284;
constexpr std::uint16_t tile_width = 322;
constexpr std::uint16_t extra_samples = 338;
constexpr std::uint16_t sample_format = 339;
constexpr std::uint16_t model_pixel_scale = 33550;
constexpr std::uint16_t model_tiepoint = 33922;
constexpr std::uint16_t model_transformation = 34264;
constexpr std::uint16_t geo_key_directory = 34735;
constexpr std::uint16_t geo_ascii_params = 34737;
constexpr std::uint16_t gdal_nodata = 42113;
}  // namespace tag

enum TiffType : std::uint16_t { t_byte = 1, t_ascii = 2, t_short = 3, t_long = 4, t_double = 12 };

std::size_t type_size(std::uint16_t type) {
    switch (type) {
        case 1: case 2: case 6: case 7: return 1;
        case 3: case 8: return 2;
        case 4: case 9: case 11: return 4;
        case 5: case 10: case 12: return 8;
        default: return 0;
    }
}

struct TagEntry {
    std::uint16_t id;
    std::uint16_t type;
    std::uint32_t count;
    Bytes payload;  // little-endian encoded values
};

TagEntry shorts(std::uint16_t id, const std::vector<std::uint16_t>& v) {
    TagEntry e{id, t_short, static_cast<std::uint32_t>(v.size()), {}};
    for (auto x : v) put_u16(e.payload, x);
    return e;
}
TagEntry longs(std::uint16_t id, const std::vector<std::uint32_t>& v) {
    TagEntry e{id, t_long, static_cast<std::uint32_t>(v.size()), {}};
    for (auto x : v) put_u32(e.payload, x);
    return e;
}
TagEntry doubles(std::uint16_t id, const std::vector<double>& v) {
    TagEntry e{id, t_double, static_cast<std::uint32_t>(v.size()), {}};
    for (auto x : v) put_f64(e.payload, x);
    return e;
}
TagEntry ascii(std::uint16_t id, const std::string& s) {
    TagEntry e{id, t_ascii, static_cast<std::uint32_t>(s.size() + 1), {}};
    for (char c : s) e.payload.push_back(static_cast<std::uint8_t>(c));
    e.payload.push_back(0);
    return e;
}

std::string format_nodata(float v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    return buf;
}

void write_geotiff(const MultiBandRaster& r, const std::filesystem::path& path, float nodata) {
    const auto c = static_cast<std::uint32_t>(r.bands());
    const std::uint32_t band_bytes = static_cast<std::uint32_t>(r.pixel_count() * 4);
    const std::uint64_t data_bytes = std::uint64_t{band_bytes} * c;
    if (data_bytes > 0xFFFF0000ull) throw InputError("raster too large for a classic TIFF");

    Bytes out;
    out.reserve(static_cast<std::size_t>(data_bytes) + 1024);
    out.push_back('I');
    out.push_back('I');
    put_u16(out, 42);
    put_u32(out, 0);  // IFD offset patched below

    std::vector<std::uint32_t> offsets(c), counts(c, band_bytes);
    for (std::uint32_t b = 0; b < c; ++b) {
        offsets[b] = static_cast<std::uint32_t>(out.size());
        for (std::size_t i = 0; i < r.pixel_count(); ++i) put_f32(out, encoded(r, static_cast<int>(b), i, nodata));
    }
    if (out.size() % 2) out.push_back(0);

    const GeoRef& g = r.georef();
    std::vector<TagEntry> entries;
    entries.push_back(longs(tag::image_width, {static_cast<std::uint32_t>(r.width())}));
    entries.push_back(longs(tag::image_length, {static_cast<std::uint32_t>(r.height())}));
    entries.push_back(shorts(tag::bits_per_sample, std::vector<std::uint16_t>(c, 32)));
    entries.push_back(shorts(tag::compression, {1}));
    entries.push_back(shorts(tag::photometric, {1}));
    entries.push_back(longs(tag::strip_offsets, offsets));
    entries.push_back(shorts(tag::samples_per_pixel, {static_cast<std::uint16_t>(c)}));
    entries.push_back(longs(tag::rows_per_strip, {static_cast<std::uint32_t>(r.height())}));
    entries.push_back(longs(tag::strip_byte_counts, counts));
    entries.push_back(shorts(tag::planar_config, {2}));
    if (c > 1) entries.push_back(shorts(tag::extra_samples, std::vector<std::uint16_t>(c - 1, 0)));
    entries.push_back(shorts(tag::sample_format, std::vector<std::uint16_t>(c, 3)));
    entries.push_back(doubles(tag::model_transformation,
                              {g.pixel_size, 0.0, 0.0, g.origin_x,  //
                               0.0, g.pixel_size, 0.0, g.origin_y,  //
                               0.0, 0.0, 0.0, 0.0,                  //
                               0.0, 0.0, 0.0, 1.0}));
    // GeoKey directory: model type projected, raster type pixel-is-area,
    // optional citation carrying the opaque CRS identifier.
    std::vector<std::uint16_t> keys{1, 1, 0, 2, 1024, 0, 1, 1, 1025, 0, 1, 1};
    std::string citation;
    if (!g.crs_id.empty()) {
        citation = g.crs_id + "|";
        keys[3] = 3;
        keys.insert(keys.end(), {1026, tag::geo_ascii_params, static_cast<std::uint16_t>(citation.size()), 0});
    }
    entries.push_back(shorts(tag::geo_key_directory, keys));
    if (!citation.empty()) entries.push_back(ascii(tag::geo_ascii_params, citation));
    entries.push_back(ascii(tag::gdal_nodata, format_nodata(nodata)));

    const std::size_t ifd_at = out.size();
    const std::size_t ifd_size = 2 + entries.size() * 12 + 4;
    std::size_t extra_at = ifd_at + ifd_size;
    Bytes extra;
    const std::uint32_t ifd32 = static_cast<std::uint32_t>(ifd_at);
    std::memcpy(out.data() + 4, &ifd32, 4);  // host is little-endian; see static_assert below
    put_u16(out, static_cast<std::uint16_t>(entries.size()));
    for (const auto& e : entries) {
        put_u16(out, e.id);
        put_u16(out, e.type);
        put_u32(out, e.count);
        if (e.payload.size() <= 4) {
            Bytes inl = e.payload;
            inl.resize(4, 0);
            out.insert(out.end(), inl.begin(), inl.end());
        } else {
            put_u32(out, static_cast<std::uint32_t>(extra_at + extra.size()));
            extra.insert(extra.end(), e.payload.begin(), e.payload.end());
            if (extra.size() % 2) extra.push_back(0);
        }
    }
    put_u32(out, 0);
    out.insert(out.end(), extra.begin(), extra.end());
    spill(path, out);
}
static_assert(std::endian::native == std::endian::little, "raster writer assumes a little-endian host");

struct ParsedTag {
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::size_t at = 0;  // file offset of the first value
};

std::vector<std::uint64_t> tag_uints(const Reader& rd, const ParsedTag& t) {
    std::vector<std::uint64_t> v(t.count);
    for (std::uint32_t i = 0; i < t.count; ++i) {
        if (t.type == t_short) v[i] = rd.u16(t.at + 2 * i);
        else if (t.type == t_long) v[i] = rd.u32(t.at + 4 * i);
        else if (t.type == t_byte) { rd.need(t.at + i, 1); v[i] = *rd.ptr(t.at + i); }
        else throw FormatError("geotiff: unexpected type for integer tag");
    }
    return v;
}

std::vector<double> tag_doubles(const Reader& rd, const ParsedTag& t) {
    if (t.type != t_double) throw FormatError("geotiff: expected DOUBLE tag");
    std::vector<double> v(t.count);
    for (std::uint32_t i = 0; i < t.count; ++i) v[i] = rd.f64(t.at + 8 * i);
    return v;
}

std::string tag_string(const Reader& rd, const ParsedTag& t) {
    if (t.type != t_ascii) throw FormatError("geotiff: expected ASCII tag");
    rd.need(t.at, t.count);
    std::string s(reinterpret_cast<const char*>(rd.ptr(t.at)), t.count);
    while (!s.empty() && s.back() == '\0') s.pop_back();
    return s;
}

MultiBandRaster read_geotiff(const Bytes& data) {
    Reader rd(data);
    if (data.size() < 8) throw FormatError("geotiff: short header");
    if (data[0] == 'M' && data[1] == 'M') throw FormatError("geotiff: big-endian files are not supported");
    if (data[0] != 'I' || data[1] != 'I' || rd.u16(2) != 42) throw FormatError("geotiff: bad header magic");
    const std::size_t ifd = rd.u32(4);
    const std::uint16_t n = rd.u16(ifd);
    std::map<std::uint16_t, ParsedTag> tags;
    for (std::uint16_t i = 0; i < n; ++i) {
        const std::size_t e = ifd + 2 + 12u * i;
        ParsedTag t;
        const std::uint16_t id = rd.u16(e);
        t.type = rd.u16(e + 2);
        t.count = rd.u32(e + 4);
        const std::size_t sz = type_size(t.type);
        if (sz == 0) continue;  // unknown types are skipped as TIFF readers must
        const std::uint64_t bytes = std::uint64_t{sz} * t.count;
        t.at = bytes <= 4 ? e + 8 : rd.u32(e + 8);
        rd.need(t.at, static_cast<std::size_t>(bytes));
        tags[id] = t;
    }
    auto req = [&](std::uint16_t id) -> const ParsedTag& {
        auto it = tags.find(id);
        if (it == tags.end()) throw FormatError("geotiff: missing required tag " + std::to_string(id));
        return it->second;
    };
    auto scalar = [&](std::uint16_t id, std::uint64_t fallback) {
        auto it = tags.find(id);
        if (it == tags.end()) return fallback;
        auto v = tag_uints(rd, it->second);
        if (v.empty()) throw FormatError("geotiff: empty tag " + std::to_string(id));
        return v.front();
    };

    if (tags.count(tag::tile_width)) throw FormatError("geotiff: tiled layout is not supported");
    const auto width = scalar(tag::image_width, 0);
    const auto height = scalar(tag::image_length, 0);
    const auto spp = scalar(tag::samples_per_pixel, 1);
    if (width == 0 || height == 0 || width > (1u << 20) || height > (1u << 20) || spp == 0 || spp > 65535) {
        throw FormatError("geotiff: invalid image dimensions");
    }
    if (scalar(tag::compression, 1) != 1) throw FormatError("geotiff: compressed files are not supported");
    const auto bps = tag_uints(rd, req(tag::bits_per_sample));
    if (bps.size() != spp && bps.size() != 1) throw StructuralError("geotiff: BitsPerSample count differs from band count");
    if (std::ranges::any_of(bps, [](auto b) { return b != 32; })) throw FormatError("geotiff: only 32-bit samples are supported");
    if (auto it = tags.find(tag::sample_format); it != tags.end()) {
        auto sf = tag_uints(rd, it->second);
        if (sf.size() != spp && sf.size() != 1) throw StructuralError("geotiff: SampleFormat count differs from band count");
        if (std::ranges::any_of(sf, [](auto s) { return s != 3; })) throw FormatError("geotiff: only IEEE float samples are supported");
    } else {
        throw FormatError("geotiff: integer samples are not supported");
    }
    const auto planar = scalar(tag::planar_config, 1);
    const auto rows_per_strip = std::min<std::uint64_t>(scalar(tag::rows_per_strip, height), height);
    if (rows_per_strip == 0) throw FormatError("geotiff: RowsPerStrip is zero");
    const auto offsets = tag_uints(rd, req(tag::strip_offsets));
    const auto counts = tag_uints(rd, req(tag::strip_byte_counts));
    const std::uint64_t strips_per_band = (height + rows_per_strip - 1) / rows_per_strip;
    const std::uint64_t expected_strips = planar == 2 ? strips_per_band * spp : strips_per_band;
    if (offsets.size() != expected_strips || counts.size() != expected_strips) {
        throw StructuralError("geotiff: strip count does not match bands and rows");
    }

    // Placement.
    GeoRef g;
    bool flip = false;
    if (auto it = tags.find(tag::model_transformation); it != tags.end()) {
        auto m = tag_doubles(rd, it->second);
        if (m.size() != 16) throw FormatError("geotiff: ModelTransformationTag must hold 16 values");
        if (m[1] != 0.0 || m[4] != 0.0) throw FormatError("geotiff: rotated placements are not supported");
        if (std::abs(m[0]) != std::abs(m[5]) || m[0] <= 0.0) throw FormatError("geotiff: non-square pixels are not supported");
        g.pixel_size = m[0];
        g.origin_x = m[3];
        if (m[5] > 0.0) {
            g.origin_y = m[7];
        } else {
            flip = true;
            g.origin_y = m[7] + m[5] * static_cast<double>(height);
        }
    } else if (tags.count(tag::model_pixel_scale) && tags.count(tag::model_tiepoint)) {
        auto s = tag_doubles(rd, tags[tag::model_pixel_scale]);
        auto tp = tag_doubles(rd, tags[tag::model_tiepoint]);
        if (s.size() < 2 || tp.size() < 6) throw FormatError("geotiff: malformed scale/tiepoint tags");
        if (s[0] != s[1] || s[0] <= 0.0) throw FormatError("geotiff: non-square pixels are not supported");
        g.pixel_size = s[0];
        g.origin_x = tp[3] - tp[0] * s[0];
        const double top = tp[4] + tp[1] * s[1];
        g.origin_y = top - s[1] * static_cast<double>(height);
        flip = true;
    }
    if (auto it = tags.find(tag::geo_ascii_params); it != tags.end()) {
        std::string s = tag_string(rd, it->second);
        if (auto bar = s.find('|'); bar != std::string::npos) s.resize(bar);
        g.crs_id = s;
    }
    std::optional<float> nodata;
    if (auto it = tags.find(tag::gdal_nodata); it != tags.end()) {
        const std::string s = tag_string(rd, it->second);
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str()) throw FormatError("geotiff: unparseable GDAL_NODATA value");
        nodata = static_cast<float>(v);
    }

    MultiBandRaster r(static_cast<int>(spp), static_cast<int>(width), static_cast<int>(height), g);
    const std::uint64_t row_samples = planar == 2 ? width : width * spp;
    for (std::uint64_t s = 0; s < expected_strips; ++s) {
        const std::uint64_t band = planar == 2 ? s / strips_per_band : 0;
        const std::uint64_t first_row = (s % strips_per_band) * rows_per_strip;
        const std::uint64_t rows = std::min(rows_per_strip, height - first_row);
        const std::uint64_t need_bytes = rows * row_samples * 4;
        if (counts[s] != need_bytes) throw StructuralError("geotiff: strip byte count does not match strip shape");
        rd.need(offsets[s], need_bytes);
        std::size_t at = offsets[s];
        for (std::uint64_t row = first_row; row < first_row + rows; ++row) {
            const int y = static_cast<int>(flip ? height - 1 - row : row);
            for (std::uint64_t x = 0; x < width; ++x) {
                const std::uint64_t b0 = planar == 2 ? band : 0;
                const std::uint64_t b1 = planar == 2 ? band + 1 : spp;
                for (std::uint64_t b = b0; b < b1; ++b, at += 4) {
                    const float v = rd.f32(at);
                    r.set_value(static_cast<int>(b), static_cast<int>(x), y, v);
                    r.set_valid(static_cast<int>(b), static_cast<int>(x), y, !(nodata && is_nodata(v, *nodata)));
                }
            }
        }
    }
    return r;
}

}  // namespace

RasterFormat format_from_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::ranges::transform(ext, ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (ext == ".tif" || ext == ".tiff") return RasterFormat::geotiff;
    if (ext == ".chmr" || ext == ".raw") return RasterFormat::raw;
    return RasterFormat::auto_detect;
}

MultiBandRaster read_raster(const std::filesystem::path& path, RasterFormat format) {
    const Bytes data = slurp(path);
    if (format == RasterFormat::auto_detect) {
        if (data.size() >= 4 && std::equal(raw_magic.begin(), raw_magic.end(), data.begin())) {
            format = RasterFormat::raw;
        } else if (data.size() >= 2 && ((data[0] == 'I' && data[1] == 'I') || (data[0] == 'M' && data[1] == 'M'))) {
            format = RasterFormat::geotiff;
        } else {
            throw FormatError("unrecognized raster container: " + path.string());
        }
    }
    return format == RasterFormat::raw ? read_raw(data) : read_geotiff(data);
}

void write_raster(const MultiBandRaster& raster, const std::filesystem::path& path, RasterFormat format,
                  const RasterWriteOptions& options) {
    if (format == RasterFormat::auto_detect) format = format_from_extension(path);
    if (format == RasterFormat::auto_detect) format = RasterFormat::geotiff;
    check_sentinel(raster, options.nodata);
    if (format == RasterFormat::raw) {
        write_raw(raster, path, options.nodata);
    } else {
        write_geotiff(raster, path, options.nodata);
    }
}

}  // namespace chm
