#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "chl/features.hpp"
#include "chl/models.hpp"
#include "chl/raster.hpp"

namespace chl {

struct ChlMap {
    int width = 0;
    int height = 0;
    std::vector<float> grid; // mg/m3, NaN outside mask or invalid features
    GeoTransform transform;
    int depth_bin = 0;
    std::string date;
    std::string dataset_id;
    std::string model_label;
    std::uint64_t model_hash = 0;
    std::size_t clamped_negative = 0; // predictions clamped to 0
};

// One feature row per true mask pixel, same pipeline as training. When
// `keep` is non-null only those columns are generated (raw band means are
// always present); a requested column outside the canonical set is a
// contract error.
FeatureTable extract_all_pixels(const BandStack& stack, const std::vector<std::uint8_t>& mask,
                                const ReflectanceSet& set, int window,
                                const std::vector<std::string>* keep = nullptr,
                                int n_threads = 1);

// Predictions placed at their (row, col); negatives clamped to 0 and counted.
ChlMap predict_map(const TrainedModel& model, const FeatureTable& table, const BandStack& grid,
                   int n_threads = 1);

struct PaletteStop {
    double pos = 0.0; // normalized [0,1], strictly increasing
    std::uint8_t r = 0, g = 0, b = 0;
};

// Dark blue -> cyan -> green -> yellow -> orange -> red.
const std::vector<PaletteStop>& default_palette();

struct RenderResult {
    double chl_max = 0.0;      // normalization ceiling actually used
    std::size_t saturated = 0; // pixels at or above the ceiling
};

// Color = palette((chl/chl_max)^gamma), NaN transparent. chl_max <= 0 picks
// the 99th percentile of finite map values.
RenderResult render_png(const ChlMap& map, const std::string& png_path,
                        const std::vector<PaletteStop>& palette = default_palette(),
                        double gamma = 0.5, double chl_max = 0.0);

// Normalized palette position for a chl value (monotone in chl).
double palette_position(double chl, double chl_max, double gamma);

nlohmann::json colorbar_json(const std::vector<PaletteStop>& palette, double gamma,
                             double chl_max);
nlohmann::json map_provenance(const ChlMap& map, std::uint64_t config_hash);

// Map raster round trips (single float32 band named "chl").
void write_map_bsf(const ChlMap& map, const std::string& path);
void write_map_geotiff(const ChlMap& map, const std::string& path);

// Minimal RGBA8 PNG encoder (zlib-compressed, single IDAT).
void write_png_rgba(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& rgba);

}  // namespace chl
