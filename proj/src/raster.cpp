#include "chl/raster.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace chl {

namespace {

constexpr double kMetersPerDegLat = 111132.95;

// Central meridian for "EPSG:326NN" / "EPSG:327NN" UTM codes.
bool parse_utm(const std::string& crs, double& central_meridian) {
    if (crs.rfind("EPSG:326", 0) != 0 && crs.rfind("EPSG:327", 0) != 0) return false;
    if (crs.size() != 10) return false;
    const int zone = (crs[8] - '0') * 10 + (crs[9] - '0');
    if (zone < 1 || zone > 60) return false;
    central_meridian = 6.0 * zone - 183.0;
    return true;
}

}  // namespace

bool GeoTransform::is_geographic() const {
    return crs_id.empty() || crs_id == "EPSG:4326" || crs_id == "WGS84" || crs_id == "CRS84";
}

std::pair<double, double> GeoTransform::lonlat_to_crs(double lon, double lat) const {
    if (is_geographic()) return {lon, lat};
    double central_meridian;
    if (!parse_utm(crs_id, central_meridian))
        throw domain_error("unsupported CRS for lon/lat mapping: " + crs_id);
    // Local equirectangular around the raster center; the reference latitude
    // comes from the center's approximate inverse (northing / meridian arc).
    const double ref_lat = origin_y / kMetersPerDegLat; // origin_y is a UTM northing
    const double x = 500000.0 + (lon - central_meridian) * kMetersPerDegLat * std::cos(ref_lat * M_PI / 180.0);
    const double y = lat * kMetersPerDegLat;
    return {x, y};
}

void BandStack::validate() const {
    if (width <= 0 || height <= 0) throw integrity_error("band stack has empty dimensions");
    if (bands.empty()) throw integrity_error("band stack has no bands");
    std::set<std::string> names;
    for (const auto& b : bands) {
        if (b.data.size() != n_pixels())
            throw integrity_error("band '" + b.name + "' size mismatch");
        if (!names.insert(b.name).second)
            throw integrity_error("duplicate band name '" + b.name + "'");
    }
}

const std::vector<std::string>& canonical_band_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (int i = 1; i <= 12; ++i) v.push_back("TOA_B" + std::to_string(i));
        for (int i = 1; i <= 8; ++i) v.push_back("rhow_B" + std::to_string(i));
        v.push_back("rhow_B8A");
        for (int i = 1; i <= 6; ++i) v.push_back("rhown_B" + std::to_string(i));
        v.push_back("c2rcc_flags");
        return v;
    }();
    return names;
}

BandStack crop_geo(const BandStack& stack, double north, double west, double south, double east) {
    if (!(north > south) || !(east > west)) throw domain_error("invalid crop bbox");
    const auto& t = stack.transform;
    const auto [wx, ny] = t.lonlat_to_crs(west, north);
    const auto [ex, sy] = t.lonlat_to_crs(east, south);

    // Fractional pixel coordinates of the bbox corners, then expand outward.
    const double c0 = (std::min(wx, ex) - t.origin_x) / t.pixel_width;
    const double c1 = (std::max(wx, ex) - t.origin_x) / t.pixel_width;
    const double r0 = (std::max(ny, sy) - t.origin_y) / t.pixel_height; // pixel_height < 0
    const double r1 = (std::min(ny, sy) - t.origin_y) / t.pixel_height;

    auto col0 = static_cast<std::int64_t>(std::floor(std::min(c0, c1)));
    auto col1 = static_cast<std::int64_t>(std::ceil(std::max(c0, c1)));
    auto row0 = static_cast<std::int64_t>(std::floor(std::min(r0, r1)));
    auto row1 = static_cast<std::int64_t>(std::ceil(std::max(r0, r1)));

    col0 = std::max<std::int64_t>(col0, 0);
    row0 = std::max<std::int64_t>(row0, 0);
    col1 = std::min<std::int64_t>(col1, stack.width);
    row1 = std::min<std::int64_t>(row1, stack.height);
    if (col0 >= col1 || row0 >= row1) throw domain_error("crop bbox does not intersect raster");

    BandStack out;
    out.width = static_cast<int>(col1 - col0);
    out.height = static_cast<int>(row1 - row0);
    out.transform = t;
    out.transform.origin_x = t.origin_x + static_cast<double>(col0) * t.pixel_width;
    out.transform.origin_y = t.origin_y + static_cast<double>(row0) * t.pixel_height;
    out.bands.reserve(stack.bands.size());
    for (const auto& b : stack.bands) {
        Band nb;
        nb.name = b.name;
        nb.data.resize(out.n_pixels());
        for (int r = 0; r < out.height; ++r) {
            const auto* src = &b.data[(static_cast<std::size_t>(r) + row0) * stack.width + col0];
            std::copy(src, src + out.width, &nb.data[static_cast<std::size_t>(r) * out.width]);
        }
        out.bands.push_back(std::move(nb));
    }
    return out;
}

BandStack resample_nearest(const BandStack& stack, double target_pixel_size) {
    if (!(target_pixel_size > 0)) throw domain_error("target pixel size must be positive");
    const auto& t = stack.transform;
    if (target_pixel_size == t.pixel_width && target_pixel_size == -t.pixel_height) return stack;

    const double extent_x = stack.width * t.pixel_width;
    const double extent_y = stack.height * (-t.pixel_height);
    const int out_w = std::max(1, static_cast<int>(std::llround(extent_x / target_pixel_size)));
    const int out_h = std::max(1, static_cast<int>(std::llround(extent_y / target_pixel_size)));

    BandStack out;
    out.width = out_w;
    out.height = out_h;
    out.transform = t;
    out.transform.pixel_width = target_pixel_size;
    out.transform.pixel_height = -target_pixel_size;

    // Input pixel whose center is nearest to each output pixel center.
    std::vector<int> src_col(out_w), src_row(out_h);
    for (int c = 0; c < out_w; ++c) {
        const double x = (c + 0.5) * target_pixel_size;
        int sc = static_cast<int>(std::floor(x / t.pixel_width));
        src_col[c] = std::clamp(sc, 0, stack.width - 1);
    }
    for (int r = 0; r < out_h; ++r) {
        const double y = (r + 0.5) * target_pixel_size;
        int sr = static_cast<int>(std::floor(y / (-t.pixel_height)));
        src_row[r] = std::clamp(sr, 0, stack.height - 1);
    }

    out.bands.reserve(stack.bands.size());
    for (const auto& b : stack.bands) {
        Band nb;
        nb.name = b.name;
        nb.data.resize(out.n_pixels());
        for (int r = 0; r < out_h; ++r)
            for (int c = 0; c < out_w; ++c)
                nb.data[static_cast<std::size_t>(r) * out_w + c] =
                    b.data[static_cast<std::size_t>(src_row[r]) * stack.width + src_col[c]];
        out.bands.push_back(std::move(nb));
    }
    return out;
}

namespace {

bool point_in_ring(const std::vector<std::pair<double, double>>& ring, double px, double py) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto [xi, yi] = ring[i];
        const auto [xj, yj] = ring[j];
        if ((yi > py) != (yj > py)) {
            const double x_int = xi + (py - yi) / (yj - yi) * (xj - xi);
            if (px < x_int) inside = !inside;
        }
    }
    return inside;
}

bool point_in_polygon(const Polygon& poly, double px, double py) {
    if (poly.rings.empty()) return false;
    if (!point_in_ring(poly.rings[0], px, py)) return false;
    for (std::size_t h = 1; h < poly.rings.size(); ++h)
        if (point_in_ring(poly.rings[h], px, py)) return false;
    return true;
}

void check_rings(const PolygonMask& mask) {
    for (const auto& poly : mask.polygons)
        for (const auto& ring : poly.rings) {
            if (ring.size() < 3) throw domain_error("polygon ring needs at least 3 vertices");
        }
}

}  // namespace

bool point_in_mask(const PolygonMask& mask, double lon, double lat) {
    for (const auto& poly : mask.polygons)
        if (point_in_polygon(poly, lon, lat)) return true;
    return false;
}

std::vector<std::uint8_t> rasterize_polygon(const PolygonMask& mask, int width, int height,
                                            const GeoTransform& transform) {
    check_rings(mask);
    std::vector<std::uint8_t> grid(static_cast<std::size_t>(width) * height, 0);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const auto [x, y] = transform.pixel_to_geo(r, c);
            grid[static_cast<std::size_t>(r) * width + c] = point_in_mask(mask, x, y) ? 1 : 0;
        }
    }
    return grid;
}

std::vector<std::uint8_t> rasterize_polygon(const PolygonMask& mask, const BandStack& target) {
    // Polygon vertices are lon/lat; map them into the raster CRS once.
    PolygonMask projected = mask;
    if (!target.transform.is_geographic()) {
        for (auto& poly : projected.polygons)
            for (auto& ring : poly.rings)
                for (auto& v : ring) v = target.transform.lonlat_to_crs(v.first, v.second);
    }
    return rasterize_polygon(projected, target.width, target.height, target.transform);
}

std::vector<std::uint8_t> erode_mask(const std::vector<std::uint8_t>& grid, int width, int height,
                                     int radius) {
    if (radius <= 0) return grid;
    std::vector<std::uint8_t> out(grid.size(), 0);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            if (!grid[static_cast<std::size_t>(r) * width + c]) continue;
            bool keep = true;
            for (int dr = -radius; keep && dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= height || cc >= width ||
                        !grid[static_cast<std::size_t>(rr) * width + cc]) {
                        keep = false;
                        break;
                    }
                }
            }
            out[static_cast<std::size_t>(r) * width + c] = keep ? 1 : 0;
        }
    }
    return out;
}

}  // namespace chl
