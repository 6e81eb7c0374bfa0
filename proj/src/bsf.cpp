#include "chl/bsf.hpp"

#include <cstring>
#include <fstream>

#include "chl/geotiff.hpp"

namespace chl {

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw format_error("unexpected end of BSF file");
    return v;
}

}  // namespace

void write_bsf(const BandStack& stack, const std::string& path) {
    stack.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os.write("BSF1", 4);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(stack.width));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(stack.height));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(stack.bands.size()));
    for (const auto& b : stack.bands) {
        put<std::uint16_t>(os, static_cast<std::uint16_t>(b.name.size()));
        os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    }
    for (const auto& b : stack.bands)
        os.write(reinterpret_cast<const char*>(b.data.data()),
                 static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    const auto& t = stack.transform;
    put<double>(os, t.origin_x);
    put<double>(os, t.origin_y);
    put<double>(os, t.pixel_width);
    put<double>(os, t.pixel_height);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(t.crs_id.size()));
    os.write(t.crs_id.data(), static_cast<std::streamsize>(t.crs_id.size()));
    if (!os) throw io_error("write failed: " + path);
}

BandStack read_bsf(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "BSF1", 4) != 0) throw format_error("bad BSF magic: " + path);

    BandStack stack;
    stack.width = static_cast<int>(get<std::uint32_t>(is));
    stack.height = static_cast<int>(get<std::uint32_t>(is));
    const auto n_bands = get<std::uint32_t>(is);
    if (stack.width <= 0 || stack.height <= 0 || n_bands < 1)
        throw format_error("corrupt BSF header: " + path);

    stack.bands.resize(n_bands);
    for (auto& b : stack.bands) {
        const auto len = get<std::uint16_t>(is);
        b.name.resize(len);
        is.read(b.name.data(), len);
        if (!is) throw format_error("truncated BSF band table: " + path);
    }
    for (auto& b : stack.bands) {
        b.data.resize(stack.n_pixels());
        is.read(reinterpret_cast<char*>(b.data.data()),
                static_cast<std::streamsize>(b.data.size() * sizeof(float)));
        if (!is) throw format_error("truncated BSF band data: " + path);
    }
    auto& t = stack.transform;
    t.origin_x = get<double>(is);
    t.origin_y = get<double>(is);
    t.pixel_width = get<double>(is);
    t.pixel_height = get<double>(is);
    const auto crs_len = get<std::uint16_t>(is);
    t.crs_id.resize(crs_len);
    is.read(t.crs_id.data(), crs_len);
    if (!is) throw format_error("truncated BSF trailer: " + path);
    stack.validate();
    return stack;
}

BandStack read_band_stack(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char magic[4] = {0, 0, 0, 0};
    is.read(magic, 4);
    is.close();
    if (std::memcmp(magic, "BSF1", 4) == 0) return read_bsf(path);
    if ((magic[0] == 'I' && magic[1] == 'I') || (magic[0] == 'M' && magic[1] == 'M'))
        return read_geotiff(path);
    throw format_error("unrecognized band stack format: " + path);
}

}  // namespace chl
