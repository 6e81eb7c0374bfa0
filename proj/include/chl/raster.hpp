#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "chl/util.hpp"

namespace chl {

// Affine pixel <-> CRS mapping. Pixel (r,c) has its center at
// origin + (c+0.5)*pixel_width / origin + (r+0.5)*pixel_height.
struct GeoTransform {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_width = 1.0;   // > 0
    double pixel_height = -1.0; // < 0 for north-up rasters
    std::string crs_id = "EPSG:4326";

    std::pair<double, double> pixel_to_geo(double row, double col) const {
        return {origin_x + (col + 0.5) * pixel_width,
                origin_y + (row + 0.5) * pixel_height};
    }

    // Containing pixel (floor). Out-of-grid results are allowed.
    std::pair<std::int64_t, std::int64_t> geo_to_pixel(double x, double y) const {
        const auto col = static_cast<std::int64_t>(std::floor((x - origin_x) / pixel_width));
        const auto row = static_cast<std::int64_t>(std::floor((y - origin_y) / pixel_height));
        return {row, col};
    }

    bool is_geographic() const;

    // Project WGS84 lon/lat into this transform's CRS. Geographic CRS is a
    // pass-through; metric UTM zones use a local equirectangular
    // approximation (documented limitation, sub-pixel over the study area).
    std::pair<double, double> lonlat_to_crs(double lon, double lat) const;
};

struct Band {
    std::string name;
    std::vector<float> data; // row-major, height*width, NaN = nodata
};

struct BandStack {
    int width = 0;
    int height = 0;
    std::vector<Band> bands;
    GeoTransform transform;

    std::size_t n_pixels() const { return static_cast<std::size_t>(width) * height; }

    float at(std::size_t band, int row, int col) const {
        return bands[band].data[static_cast<std::size_t>(row) * width + col];
    }

    const Band* find_band(const std::string& name) const {
        for (const auto& b : bands)
            if (b.name == name) return &b;
        return nullptr;
    }

    int band_index(const std::string& name) const {
        for (std::size_t i = 0; i < bands.size(); ++i)
            if (bands[i].name == name) return static_cast<int>(i);
        return -1;
    }

    // width, height, unique band names, matching band sizes.
    void validate() const;
};

// Canonical 28-band layout of a processed scene stack:
// TOA_B1..TOA_B12, rhow_B1..rhow_B8A, rhown_B1..rhown_B6, c2rcc_flags.
const std::vector<std::string>& canonical_band_names();

// Smallest pixel-aligned rectangle containing the bbox (expanded outward,
// never truncated). Bounds are WGS84 lon/lat.
BandStack crop_geo(const BandStack& stack, double north, double west, double south, double east);

// Nearest-center resampling onto a grid with the given square pixel size
// covering the same extent. NaN propagates.
BandStack resample_nearest(const BandStack& stack, double target_pixel_size);

// Polygon in lon/lat; first ring outer, the rest holes.
struct Polygon {
    std::vector<std::vector<std::pair<double, double>>> rings;
};

struct PolygonMask {
    std::vector<Polygon> polygons; // MultiPolygon support
};

// Even-odd ray casting at pixel centers. A center on an edge is resolved by
// the half-open edge rule: an edge counts when one endpoint is strictly
// below the test point and the other is not, so shared edges never double
// count. Deterministic.
std::vector<std::uint8_t> rasterize_polygon(const PolygonMask& mask, const BandStack& target);

// Same, against an explicit grid geometry (used by tests).
std::vector<std::uint8_t> rasterize_polygon(const PolygonMask& mask, int width, int height,
                                            const GeoTransform& transform);

bool point_in_mask(const PolygonMask& mask, double lon, double lat);

// Binary erosion of a boolean grid by a square radius (8-neighborhood),
// used to optionally trim shoreline pixels before inference.
std::vector<std::uint8_t> erode_mask(const std::vector<std::uint8_t>& grid, int width, int height,
                                     int radius);

}  // namespace chl
