#include "chl/mapping.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "chl/bsf.hpp"
#include "chl/geotiff.hpp"

namespace chl {

using nlohmann::json;

FeatureTable extract_all_pixels(const BandStack& stack, const std::vector<std::uint8_t>& mask,
                                const ReflectanceSet& set, int window,
                                const std::vector<std::string>* keep, int n_threads) {
    if (mask.size() != stack.n_pixels()) throw contract_error("mask does not match the grid");

    FeatureTable table;
    table.dataset_id = make_dataset_id(set, window, 0);
    table.pixel_keyed = true;
    table.n_raw_bands = static_cast<int>(set.size());
    table.columns = set.band_names;

    auto indices = enumerate_all_indices(set);
    if (keep) {
        std::vector<std::string> wanted;
        for (const auto& name : *keep) {
            const bool is_band =
                std::find(set.band_names.begin(), set.band_names.end(), name) != set.band_names.end();
            if (!is_band) wanted.push_back(name);
        }
        std::vector<SpectralIndex> filtered;
        for (auto& ix : indices)
            if (std::find(wanted.begin(), wanted.end(), ix.canonical_name) != wanted.end())
                filtered.push_back(std::move(ix));
        if (filtered.size() != wanted.size())
            throw contract_error("requested feature absent from the canonical index set");
        indices = std::move(filtered);
    }
    for (const auto& ix : indices) table.columns.push_back(ix.canonical_name);

    for (int row = 0; row < stack.height; ++row)
        for (int col = 0; col < stack.width; ++col)
            if (mask[static_cast<std::size_t>(row) * stack.width + col]) {
                table.key_row.push_back(row);
                table.key_col.push_back(col);
            }

    table.values.assign(table.key_row.size(), {});
    parallel_for(table.key_row.size(), n_threads, [&](std::size_t i) {
        auto means = window_mean(stack, table.key_row[i], table.key_col[i], window, set);
        std::vector<double> feats = means;
        feats.reserve(table.columns.size());
        for (const auto& ix : indices) feats.push_back(eval_index(ix, means));
        table.values[i] = std::move(feats);
    });
    return table;
}

ChlMap predict_map(const TrainedModel& model, const FeatureTable& table, const BandStack& grid,
                   int n_threads) {
    if (!table.pixel_keyed) throw contract_error("predict_map needs a pixel-keyed table");

    ChlMap map;
    map.width = grid.width;
    map.height = grid.height;
    map.transform = grid.transform;
    map.grid.assign(grid.n_pixels(), std::numeric_limits<float>::quiet_NaN());
    map.model_hash = fnv1a(save_model(model).dump());

    // Column alignment resolved once; per-pixel prediction is independent.
    std::vector<std::size_t> index_map;
    for (const auto& f : model.feature_names) {
        const int c = table.column_index(f);
        if (c < 0) throw contract_error("missing feature in pixel table: " + f);
        index_map.push_back(static_cast<std::size_t>(c));
    }

    std::vector<double> pred(table.n_rows());
    parallel_for(table.n_rows(), n_threads, [&](std::size_t i) {
        std::vector<double> x(index_map.size());
        bool valid = true;
        for (std::size_t j = 0; j < index_map.size(); ++j) {
            x[j] = table.values[i][index_map[j]];
            if (!std::isfinite(x[j])) valid = false;
        }
        if (!valid) {
            pred[i] = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        pred[i] = model.scaler ? model.impl->predict_one(model.scaler->transform(x))
                               : model.impl->predict_one(x);
    });

    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        double v = pred[i];
        if (std::isfinite(v) && v < 0.0) {
            v = 0.0;
            ++map.clamped_negative;
        }
        map.grid[static_cast<std::size_t>(table.key_row[i]) * map.width + table.key_col[i]] =
            static_cast<float>(v);
    }
    return map;
}

const std::vector<PaletteStop>& default_palette() {
    static const std::vector<PaletteStop> palette = {
        {0.0, 8, 29, 88},    {0.2, 34, 94, 168},  {0.4, 29, 145, 192},
        {0.6, 65, 182, 96},  {0.8, 254, 204, 92}, {1.0, 215, 25, 28},
    };
    return palette;
}

double palette_position(double chl, double chl_max, double gamma) {
    if (chl_max <= 0 || gamma <= 0) throw config_error("palette needs chl_max > 0 and gamma > 0");
    const double t = std::pow(std::clamp(chl / chl_max, 0.0, 1.0), gamma);
    return t;
}

namespace {

void palette_color(const std::vector<PaletteStop>& palette, double t, std::uint8_t* rgb) {
    if (t <= palette.front().pos) {
        rgb[0] = palette.front().r;
        rgb[1] = palette.front().g;
        rgb[2] = palette.front().b;
        return;
    }
    if (t >= palette.back().pos) {
        rgb[0] = palette.back().r;
        rgb[1] = palette.back().g;
        rgb[2] = palette.back().b;
        return;
    }
    for (std::size_t i = 1; i < palette.size(); ++i) {
        if (t > palette[i].pos) continue;
        const auto& a = palette[i - 1];
        const auto& b = palette[i];
        const double u = (t - a.pos) / (b.pos - a.pos);
        rgb[0] = static_cast<std::uint8_t>(std::lround(a.r + u * (b.r - a.r)));
        rgb[1] = static_cast<std::uint8_t>(std::lround(a.g + u * (b.g - a.g)));
        rgb[2] = static_cast<std::uint8_t>(std::lround(a.b + u * (b.b - a.b)));
        return;
    }
}

void validate_palette(const std::vector<PaletteStop>& palette) {
    if (palette.size() < 2) throw config_error("palette needs at least two control points");
    for (std::size_t i = 1; i < palette.size(); ++i)
        if (palette[i].pos <= palette[i - 1].pos)
            throw config_error("palette control points must be strictly increasing");
}

double percentile99(std::vector<float> vals) {
    if (vals.empty()) return 1.0;
    std::sort(vals.begin(), vals.end());
    const auto idx = static_cast<std::size_t>(0.99 * static_cast<double>(vals.size() - 1));
    const double p = vals[idx];
    return p > 0.0 ? p : 1.0;
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void png_chunk(std::ofstream& os, const char type[4], const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> head;
    put_u32_be(head, static_cast<std::uint32_t>(payload.size()));
    os.write(reinterpret_cast<const char*>(head.data()), 4);
    os.write(type, 4);
    if (!payload.empty())
        os.write(reinterpret_cast<const char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size()));
    auto crc = crc32(0, reinterpret_cast<const Bytef*>(type), 4);
    crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
    std::vector<std::uint8_t> tail;
    put_u32_be(tail, static_cast<std::uint32_t>(crc));
    os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png_rgba(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& rgba) {
    if (rgba.size() != static_cast<std::size_t>(width) * height * 4)
        throw contract_error("rgba buffer does not match dimensions");

    // Filter byte 0 (none) per scanline.
    std::vector<std::uint8_t> raw;
    raw.reserve(rgba.size() + static_cast<std::size_t>(height));
    const std::size_t stride = static_cast<std::size_t>(width) * 4;
    for (int r = 0; r < height; ++r) {
        raw.push_back(0);
        raw.insert(raw.end(), rgba.begin() + static_cast<std::ptrdiff_t>(r * stride),
                   rgba.begin() + static_cast<std::ptrdiff_t>((r + 1) * stride));
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw io_error("png deflate failed");
    comp.resize(comp_len);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    os.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<std::uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(6); // RGBA
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    png_chunk(os, "IHDR", ihdr);
    png_chunk(os, "IDAT", comp);
    png_chunk(os, "IEND", {});
    if (!os) throw io_error("short write: " + path);
}

RenderResult render_png(const ChlMap& map, const std::string& png_path,
                        const std::vector<PaletteStop>& palette, double gamma, double chl_max) {
    validate_palette(palette);
    if (gamma <= 0) throw config_error("gamma must be positive");

    RenderResult res;
    if (chl_max <= 0) {
        std::vector<float> finite;
        for (float v : map.grid)
            if (std::isfinite(v)) finite.push_back(v);
        res.chl_max = percentile99(std::move(finite));
    } else {
        res.chl_max = chl_max;
    }

    std::vector<std::uint8_t> rgba(static_cast<std::size_t>(map.width) * map.height * 4, 0);
    for (std::size_t i = 0; i < map.grid.size(); ++i) {
        const float v = map.grid[i];
        if (!std::isfinite(v)) continue; // transparent
        if (v >= res.chl_max) ++res.saturated;
        const double t = palette_position(v, res.chl_max, gamma);
        palette_color(palette, t, &rgba[i * 4]);
        rgba[i * 4 + 3] = 255;
    }
    write_png_rgba(png_path, map.width, map.height, rgba);
    return res;
}

json colorbar_json(const std::vector<PaletteStop>& palette, double gamma, double chl_max) {
    json stops = json::array();
    for (const auto& s : palette)
        stops.push_back({{"pos", s.pos}, {"rgb", {s.r, s.g, s.b}}});
    return {{"stops", stops}, {"gamma", gamma}, {"chl_max", chl_max}, {"units", "mg/m3"}};
}

json map_provenance(const ChlMap& map, std::uint64_t config_hash) {
    return {{"date", map.date},
            {"depth_bin", map.depth_bin},
            {"dataset_id", map.dataset_id},
            {"model_label", map.model_label},
            {"model_hash", map.model_hash},
            {"config_hash", config_hash},
            {"clamped_negative", map.clamped_negative}};
}

namespace {

BandStack map_to_stack(const ChlMap& map) {
    BandStack stack;
    stack.width = map.width;
    stack.height = map.height;
    stack.transform = map.transform;
    stack.bands.push_back({"chl", map.grid});
    return stack;
}

}  // namespace

void write_map_bsf(const ChlMap& map, const std::string& path) {
    write_bsf(map_to_stack(map), path);
}

void write_map_geotiff(const ChlMap& map, const std::string& path) {
    write_geotiff(map_to_stack(map), path);
}

}  // namespace chl
