#include "chl/geotiff.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace chl {

namespace {

enum Tag : std::uint16_t {
    kImageWidth = 256,
    kImageLength = 257,
    kBitsPerSample = 258,
    kCompression = 259,
    kStripOffsets = 273,
    kSamplesPerPixel = 277,
    kRowsPerStrip = 278,
    kStripByteCounts = 279,
    kPlanarConfig = 284,
    kTileWidth = 322,
    kTileLength = 323,
    kTileOffsets = 324,
    kTileByteCounts = 325,
    kSampleFormat = 339,
    kModelPixelScale = 33550,
    kModelTiepoint = 33922,
    kGeoKeyDirectory = 34735,
    kGdalMetadata = 42112,
    kGdalNodata = 42113,
};

struct Entry {
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::uint32_t value_or_offset = 0;
    std::uint32_t inline_raw = 0;
};

std::size_t type_size(std::uint16_t t) {
    switch (t) {
        case 1: case 2: case 6: case 7: return 1;
        case 3: case 8: return 2;
        case 4: case 9: case 11: return 4;
        case 5: case 10: case 12: return 8;
        default: throw format_error("unsupported TIFF field type");
    }
}

class Reader {
  public:
    explicit Reader(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw io_error("cannot open: " + path);
        std::ostringstream ss;
        ss << is.rdbuf();
        buf_ = ss.str();
        if (buf_.size() < 8) throw format_error("truncated TIFF: " + path);
        if (buf_[0] != 'I' || buf_[1] != 'I')
            throw format_error("only little-endian TIFF is supported: " + path);
        if (u16(2) != 42) throw format_error("bad TIFF magic: " + path);
        parse_ifd(u32(4));
    }

    std::uint16_t u16(std::size_t off) const {
        check(off, 2);
        std::uint16_t v;
        std::memcpy(&v, buf_.data() + off, 2);
        return v;
    }
    std::uint32_t u32(std::size_t off) const {
        check(off, 4);
        std::uint32_t v;
        std::memcpy(&v, buf_.data() + off, 4);
        return v;
    }
    double f64(std::size_t off) const {
        check(off, 8);
        double v;
        std::memcpy(&v, buf_.data() + off, 8);
        return v;
    }

    const Entry* find(std::uint16_t tag) const {
        auto it = entries_.find(tag);
        return it == entries_.end() ? nullptr : &it->second;
    }

    // Values as unsigned integers regardless of SHORT/LONG storage.
    std::vector<std::uint64_t> ints(std::uint16_t tag) const {
        const auto* e = find(tag);
        if (!e) return {};
        std::vector<std::uint64_t> out(e->count);
        const std::size_t elem = type_size(e->type);
        const std::size_t total = elem * e->count;
        std::size_t base;
        if (total <= 4)
            base = e->inline_raw;
        else
            base = e->value_or_offset;
        for (std::uint32_t i = 0; i < e->count; ++i) {
            const std::size_t off = base + i * elem;
            out[i] = (e->type == 3) ? u16(off) : u32(off);
        }
        return out;
    }

    std::uint64_t int_or(std::uint16_t tag, std::uint64_t dflt) const {
        auto v = ints(tag);
        return v.empty() ? dflt : v[0];
    }

    std::vector<double> doubles(std::uint16_t tag) const {
        const auto* e = find(tag);
        if (!e || e->type != 12) return {};
        std::vector<double> out(e->count);
        for (std::uint32_t i = 0; i < e->count; ++i) out[i] = f64(e->value_or_offset + i * 8);
        return out;
    }

    std::string ascii(std::uint16_t tag) const {
        const auto* e = find(tag);
        if (!e) return {};
        const std::size_t base = e->count <= 4 ? e->inline_raw : e->value_or_offset;
        check(base, e->count);
        std::string s(buf_.data() + base, e->count);
        while (!s.empty() && s.back() == '\0') s.pop_back();
        return s;
    }

    const char* data(std::size_t off, std::size_t n) const {
        check(off, n);
        return buf_.data() + off;
    }

  private:
    void check(std::size_t off, std::size_t n) const {
        if (off + n > buf_.size()) throw format_error("TIFF offset out of range");
    }

    void parse_ifd(std::uint32_t off) {
        const std::uint16_t n = u16(off);
        for (std::uint16_t i = 0; i < n; ++i) {
            const std::size_t e_off = off + 2 + static_cast<std::size_t>(i) * 12;
            Entry e;
            const std::uint16_t tag = u16(e_off);
            e.type = u16(e_off + 2);
            e.count = u32(e_off + 4);
            e.value_or_offset = u32(e_off + 8);
            e.inline_raw = static_cast<std::uint32_t>(e_off + 8);
            entries_[tag] = e;
        }
    }

    std::string buf_;
    std::map<std::uint16_t, Entry> entries_;
};

std::vector<char> inflate_chunk(const char* src, std::size_t n, std::size_t expected) {
    std::vector<char> out(expected);
    uLongf dest_len = static_cast<uLongf>(expected);
    const int rc = uncompress(reinterpret_cast<Bytef*>(out.data()), &dest_len,
                              reinterpret_cast<const Bytef*>(src), static_cast<uLong>(n));
    if (rc != Z_OK) throw format_error("deflate decompression failed");
    out.resize(dest_len);
    return out;
}

// GDAL band descriptions: <Item name="DESCRIPTION" sample="i" role="description">...</Item>
std::map<int, std::string> parse_gdal_band_names(const std::string& xml) {
    std::map<int, std::string> names;
    std::size_t pos = 0;
    while ((pos = xml.find("<Item ", pos)) != std::string::npos) {
        const auto end = xml.find("</Item>", pos);
        if (end == std::string::npos) break;
        const std::string item = xml.substr(pos, end - pos);
        pos = end;
        if (item.find("name=\"DESCRIPTION\"") == std::string::npos) continue;
        const auto s_at = item.find("sample=\"");
        const auto gt = item.find('>');
        if (s_at == std::string::npos || gt == std::string::npos) continue;
        const int sample = std::atoi(item.c_str() + s_at + 8);
        names[sample] = item.substr(gt + 1);
    }
    return names;
}

}  // namespace

BandStack read_geotiff(const std::string& path) {
    Reader tif(path);

    BandStack stack;
    stack.width = static_cast<int>(tif.int_or(kImageWidth, 0));
    stack.height = static_cast<int>(tif.int_or(kImageLength, 0));
    if (stack.width <= 0 || stack.height <= 0) throw format_error("TIFF missing dimensions: " + path);

    const auto samples = static_cast<int>(tif.int_or(kSamplesPerPixel, 1));
    const auto compression = tif.int_or(kCompression, 1);
    const auto planar = tif.int_or(kPlanarConfig, 1);
    const auto sample_format = tif.int_or(kSampleFormat, 1);
    for (auto bits : tif.ints(kBitsPerSample))
        if (bits != 32) throw format_error("only 32-bit samples are supported: " + path);
    if (sample_format != 3) throw format_error("only float32 sample format is supported: " + path);
    if (compression != 1 && compression != 8)
        throw format_error("unsupported TIFF compression: " + path);

    stack.bands.resize(samples);
    for (auto& b : stack.bands) b.data.assign(stack.n_pixels(), 0.0f);

    const auto decode = [&](const char* raw, std::size_t raw_n, std::size_t expect) {
        if (compression == 8) return inflate_chunk(raw, raw_n, expect);
        if (raw_n < expect) throw format_error("short TIFF data block: " + path);
        return std::vector<char>(raw, raw + expect);
    };

    // Scatter one decoded chunk covering rows [row0,row0+rows) x cols
    // [col0,col0+cols) for either all samples (chunky) or one plane.
    const auto scatter = [&](const std::vector<char>& chunk, int row0, int col0, int rows,
                             int cols, int plane) {
        const auto* f = reinterpret_cast<const float*>(chunk.data());
        for (int r = 0; r < rows; ++r) {
            const int gr = row0 + r;
            if (gr >= stack.height) break;
            for (int c = 0; c < cols; ++c) {
                const int gc = col0 + c;
                if (gc >= stack.width) continue;
                const std::size_t dst = static_cast<std::size_t>(gr) * stack.width + gc;
                if (planar == 1) {
                    const std::size_t src = (static_cast<std::size_t>(r) * cols + c) * samples;
                    for (int s = 0; s < samples; ++s) stack.bands[s].data[dst] = f[src + s];
                } else {
                    stack.bands[plane].data[dst] = f[static_cast<std::size_t>(r) * cols + c];
                }
            }
        }
    };

    if (tif.find(kTileOffsets)) {
        const int tw = static_cast<int>(tif.int_or(kTileWidth, 0));
        const int th = static_cast<int>(tif.int_or(kTileLength, 0));
        if (tw <= 0 || th <= 0) throw format_error("bad TIFF tile geometry: " + path);
        const auto offsets = tif.ints(kTileOffsets);
        const auto counts = tif.ints(kTileByteCounts);
        const int tiles_x = (stack.width + tw - 1) / tw;
        const int tiles_y = (stack.height + th - 1) / th;
        const int tiles_per_plane = tiles_x * tiles_y;
        const int per_pixel = (planar == 1) ? samples : 1;
        const std::size_t expect = static_cast<std::size_t>(tw) * th * per_pixel * sizeof(float);
        for (std::size_t i = 0; i < offsets.size(); ++i) {
            const int plane = static_cast<int>(i) / tiles_per_plane;
            const int idx = static_cast<int>(i) % tiles_per_plane;
            const int row0 = (idx / tiles_x) * th;
            const int col0 = (idx % tiles_x) * tw;
            const auto chunk = decode(tif.data(offsets[i], counts[i]), counts[i], expect);
            scatter(chunk, row0, col0, th, tw, plane);
        }
    } else {
        const auto offsets = tif.ints(kStripOffsets);
        const auto counts = tif.ints(kStripByteCounts);
        if (offsets.empty()) throw format_error("TIFF has neither strips nor tiles: " + path);
        const auto rows_per_strip =
            static_cast<int>(tif.int_or(kRowsPerStrip, static_cast<std::uint64_t>(stack.height)));
        const int strips_per_plane =
            (stack.height + rows_per_strip - 1) / rows_per_strip;
        const int per_pixel = (planar == 1) ? samples : 1;
        for (std::size_t i = 0; i < offsets.size(); ++i) {
            const int plane = static_cast<int>(i) / strips_per_plane;
            const int idx = static_cast<int>(i) % strips_per_plane;
            const int row0 = idx * rows_per_strip;
            const int rows = std::min(rows_per_strip, stack.height - row0);
            const std::size_t expect =
                static_cast<std::size_t>(rows) * stack.width * per_pixel * sizeof(float);
            const auto chunk = decode(tif.data(offsets[i], counts[i]), counts[i], expect);
            scatter(chunk, row0, 0, rows, stack.width, plane);
        }
    }

    // Geotransform.
    const auto scale = tif.doubles(kModelPixelScale);
    const auto tiepoint = tif.doubles(kModelTiepoint);
    if (scale.size() >= 2 && tiepoint.size() >= 6) {
        stack.transform.pixel_width = scale[0];
        stack.transform.pixel_height = -scale[1];
        stack.transform.origin_x = tiepoint[3] - tiepoint[0] * scale[0];
        stack.transform.origin_y = tiepoint[4] + tiepoint[1] * scale[1];
    }
    const auto geokeys = tif.ints(kGeoKeyDirectory);
    stack.transform.crs_id = "EPSG:4326";
    for (std::size_t i = 4; i + 3 < geokeys.size(); i += 4) {
        const auto key = geokeys[i];
        if (key == 2048 || key == 3072) // GeographicType / ProjectedCSType
            stack.transform.crs_id = "EPSG:" + std::to_string(geokeys[i + 3]);
    }

    // Band names.
    const auto named = parse_gdal_band_names(tif.ascii(kGdalMetadata));
    if (!named.empty()) {
        for (int s = 0; s < samples; ++s) {
            auto it = named.find(s);
            stack.bands[s].name = it != named.end() ? it->second : "B" + std::to_string(s + 1);
        }
    } else if (samples == static_cast<int>(canonical_band_names().size())) {
        for (int s = 0; s < samples; ++s) stack.bands[s].name = canonical_band_names()[s];
    } else {
        for (int s = 0; s < samples; ++s) stack.bands[s].name = "B" + std::to_string(s + 1);
    }

    stack.validate();
    return stack;
}

namespace {

struct IfdEntry {
    std::uint16_t tag;
    std::uint16_t type;
    std::uint32_t count;
    std::uint32_t value;
};

void put16(std::string& s, std::uint16_t v) { s.append(reinterpret_cast<const char*>(&v), 2); }
void put32(std::string& s, std::uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }

}  // namespace

void write_geotiff(const BandStack& stack, const std::string& path) {
    stack.validate();
    const int samples = static_cast<int>(stack.bands.size());
    const std::size_t pixel_bytes = static_cast<std::size_t>(samples) * sizeof(float);
    const std::size_t data_bytes = stack.n_pixels() * pixel_bytes;

    // Chunky-interleaved pixel data, one strip for the whole image.
    std::string pixels(data_bytes, '\0');
    {
        auto* out = reinterpret_cast<float*>(pixels.data());
        for (std::size_t p = 0; p < stack.n_pixels(); ++p)
            for (int s = 0; s < samples; ++s) out[p * samples + s] = stack.bands[s].data[p];
    }

    std::string meta = "<GDALMetadata>\n";
    for (int s = 0; s < samples; ++s) {
        meta += "  <Item name=\"DESCRIPTION\" sample=\"" + std::to_string(s) +
                "\" role=\"description\">" + stack.bands[s].name + "</Item>\n";
    }
    meta += "</GDALMetadata>\n";
    meta.push_back('\0');

    std::string nodata = "nan";
    nodata.push_back('\0');

    const auto& t = stack.transform;
    const double pixel_scale[3] = {t.pixel_width, -t.pixel_height, 0.0};
    const double tiepoint[6] = {0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0};

    std::uint32_t epsg = 4326;
    std::uint16_t model_type = 2; // geographic
    if (!t.is_geographic() && t.crs_id.rfind("EPSG:", 0) == 0) {
        epsg = static_cast<std::uint32_t>(std::atoi(t.crs_id.c_str() + 5));
        model_type = 1; // projected
    }
    const std::uint16_t cs_key = model_type == 1 ? std::uint16_t{3072} : std::uint16_t{2048};
    const std::uint16_t geokeys[12] = {1, 1, 0, 2,       // version header, 2 keys
                                       1024, 0, 1, model_type,
                                       cs_key, 0, 1, static_cast<std::uint16_t>(epsg)};

    // Layout: header(8) | pixel data | aux arrays | IFD
    std::string aux;
    const std::uint32_t data_off = 8;
    const std::uint32_t aux_off = data_off + static_cast<std::uint32_t>(data_bytes);
    auto add_aux = [&](const void* p, std::size_t n) {
        const auto off = aux_off + static_cast<std::uint32_t>(aux.size());
        aux.append(static_cast<const char*>(p), n);
        if (aux.size() % 2) aux.push_back('\0');
        return off;
    };

    std::vector<IfdEntry> ifd;
    auto entry = [&](std::uint16_t tag, std::uint16_t type, std::uint32_t count, std::uint32_t value) {
        ifd.push_back({tag, type, count, value});
    };

    std::vector<std::uint16_t> bits(samples, 16); // placeholder, filled below
    for (auto& b : bits) b = 32;
    std::vector<std::uint16_t> formats(samples, 3);

    entry(kImageWidth, 4, 1, static_cast<std::uint32_t>(stack.width));
    entry(kImageLength, 4, 1, static_cast<std::uint32_t>(stack.height));
    entry(kBitsPerSample, 3, static_cast<std::uint32_t>(samples),
          samples <= 2 ? 32u | (samples == 2 ? 32u << 16 : 0u)
                       : add_aux(bits.data(), bits.size() * 2));
    entry(kCompression, 3, 1, 1);
    entry(262, 3, 1, 1); // PhotometricInterpretation: BlackIsZero
    entry(kStripOffsets, 4, 1, data_off);
    entry(kSamplesPerPixel, 3, 1, static_cast<std::uint32_t>(samples));
    entry(kRowsPerStrip, 4, 1, static_cast<std::uint32_t>(stack.height));
    entry(kStripByteCounts, 4, 1, static_cast<std::uint32_t>(data_bytes));
    entry(kPlanarConfig, 3, 1, 1);
    entry(kSampleFormat, 3, static_cast<std::uint32_t>(samples),
          samples <= 2 ? 3u | (samples == 2 ? 3u << 16 : 0u)
                       : add_aux(formats.data(), formats.size() * 2));
    entry(kModelPixelScale, 12, 3, add_aux(pixel_scale, sizeof(pixel_scale)));
    entry(kModelTiepoint, 12, 6, add_aux(tiepoint, sizeof(tiepoint)));
    entry(kGeoKeyDirectory, 3, 12, add_aux(geokeys, sizeof(geokeys)));
    entry(kGdalMetadata, 2, static_cast<std::uint32_t>(meta.size()),
          add_aux(meta.data(), meta.size()));
    entry(kGdalNodata, 2, static_cast<std::uint32_t>(nodata.size()),
          add_aux(nodata.data(), nodata.size()));

    std::sort(ifd.begin(), ifd.end(),
              [](const IfdEntry& a, const IfdEntry& b) { return a.tag < b.tag; });

    const std::uint32_t ifd_off = aux_off + static_cast<std::uint32_t>(aux.size());

    std::string header;
    header += "II";
    put16(header, 42);
    put32(header, ifd_off);

    std::string ifd_block;
    put16(ifd_block, static_cast<std::uint16_t>(ifd.size()));
    for (const auto& e : ifd) {
        put16(ifd_block, e.tag);
        put16(ifd_block, e.type);
        put32(ifd_block, e.count);
        put32(ifd_block, e.value);
    }
    put32(ifd_block, 0); // no next IFD

    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << header << pixels << aux << ifd_block;
    if (!os) throw io_error("write failed: " + path);
}

}  // namespace chl
