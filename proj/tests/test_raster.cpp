#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "chl/bsf.hpp"
#include "chl/geojson.hpp"
#include "chl/geotiff.hpp"
#include "chl/raster.hpp"

using namespace chl;

namespace {

const std::string tmp_dir = [] {
    auto d = (std::filesystem::temp_directory_path() / "chl_raster_tests").string();
    std::filesystem::create_directories(d);
    return d;
}();

BandStack small_stack(int w, int h, int n_bands = 1) {
    BandStack s;
    s.width = w;
    s.height = h;
    s.transform.origin_x = 0.0;
    s.transform.origin_y = static_cast<double>(h);
    s.transform.pixel_width = 1.0;
    s.transform.pixel_height = -1.0;
    for (int b = 0; b < n_bands; ++b) {
        Band band;
        band.name = "B" + std::to_string(b + 1);
        band.data.resize(static_cast<std::size_t>(w) * h);
        for (std::size_t i = 0; i < band.data.size(); ++i)
            band.data[i] = static_cast<float>(i + 1 + 100 * b);
        s.bands.push_back(std::move(band));
    }
    return s;
}

// Independent even-odd containment check used as the rasterization oracle.
bool oracle_inside(const PolygonMask& mask, double px, double py) {
    for (const auto& poly : mask.polygons) {
        int crossings_outer = 0;
        bool in_poly = false;
        for (std::size_t ri = 0; ri < poly.rings.size(); ++ri) {
            const auto& ring = poly.rings[ri];
            int crossings = 0;
            for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
                const double xi = ring[i].first, yi = ring[i].second;
                const double xj = ring[j].first, yj = ring[j].second;
                if ((yi > py) != (yj > py) &&
                    px < xi + (py - yi) * (xj - xi) / (yj - yi))
                    ++crossings;
            }
            if (ri == 0) {
                crossings_outer = crossings;
                in_poly = crossings % 2 == 1;
            } else if (crossings % 2 == 1) {
                in_poly = false;
            }
        }
        (void)crossings_outer;
        if (in_poly) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("bsf round trip 2x2 single band") {
    BandStack s = small_stack(2, 2);
    s.bands[0].data = {1, 2, 3, 4};
    const auto path = tmp_dir + "/rt.bsf";
    write_bsf(s, path);
    const auto r = read_bsf(path);
    CHECK(r.width == 2);
    CHECK(r.height == 2);
    CHECK(r.bands.size() == 1);
    CHECK(r.bands[0].data == std::vector<float>{1, 2, 3, 4});
    CHECK(r.transform.origin_y == s.transform.origin_y);
    CHECK(r.transform.crs_id == s.transform.crs_id);
}

TEST_CASE("bsf round trip preserves NaN and random float32 bit patterns") {
    BandStack s = small_stack(8, 8, 3);
    s.bands[1].data[5] = std::numeric_limits<float>::quiet_NaN();
    s.bands[2].data[63] = -0.0f;
    const auto path = tmp_dir + "/rt_nan.bsf";
    write_bsf(s, path);
    const auto r = read_bsf(path);
    for (std::size_t b = 0; b < s.bands.size(); ++b)
        for (std::size_t i = 0; i < s.bands[b].data.size(); ++i) {
            const float a = s.bands[b].data[i], v = r.bands[b].data[i];
            CHECK(std::memcmp(&a, &v, sizeof(float)) == 0);
        }
}

TEST_CASE("bsf rejects corrupt header") {
    const auto path = tmp_dir + "/corrupt.bsf";
    std::ofstream(path) << "not a band stack at all";
    CHECK_THROWS_AS(read_bsf(path), format_error);
}

TEST_CASE("canonical 28-band order") {
    const auto& names = canonical_band_names();
    REQUIRE(names.size() == 28);
    CHECK(names[0] == "TOA_B1");
    CHECK(names[11] == "TOA_B12");
    CHECK(names[12] == "rhow_B1");
    CHECK(names[20] == "rhow_B8A");
    CHECK(names[21] == "rhown_B1");
    CHECK(names[26] == "rhown_B6");
    CHECK(names[27] == "c2rcc_flags");

    // A 28-band file read back keeps the exact canonical order.
    BandStack s;
    s.width = 2;
    s.height = 2;
    for (const auto& n : names) s.bands.push_back({n, {0, 0, 0, 0}});
    const auto path = tmp_dir + "/canon.bsf";
    write_bsf(s, path);
    const auto r = read_band_stack(path);
    for (std::size_t i = 0; i < names.size(); ++i) CHECK(r.bands[i].name == names[i]);
}

TEST_CASE("geotiff subset round trip") {
    BandStack s = small_stack(5, 3, 2);
    s.bands[0].data[7] = std::numeric_limits<float>::quiet_NaN();
    s.transform.crs_id = "EPSG:32630";
    s.transform.origin_x = 680000;
    s.transform.origin_y = 4190000;
    s.transform.pixel_width = 10;
    s.transform.pixel_height = -10;
    const auto path = tmp_dir + "/rt.tif";
    write_geotiff(s, path);
    const auto r = read_geotiff(path);
    CHECK(r.width == 5);
    CHECK(r.height == 3);
    CHECK(r.transform.crs_id == "EPSG:32630");
    CHECK(r.transform.pixel_width == 10.0);
    REQUIRE(r.bands.size() == 2);
    CHECK(r.bands[0].name == s.bands[0].name);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < s.bands[b].data.size(); ++i) {
            const float a = s.bands[b].data[i], v = r.bands[b].data[i];
            CHECK(std::memcmp(&a, &v, sizeof(float)) == 0);
        }
}

TEST_CASE("geo/pixel round trips") {
    GeoTransform t;
    t.origin_x = -0.88;
    t.origin_y = 37.83;
    t.pixel_width = 0.004;
    t.pixel_height = -0.004;

    SUBCASE("pixel_to_geo(0,0) is the half-pixel center") {
        const auto [x, y] = t.pixel_to_geo(0, 0);
        CHECK(x == doctest::Approx(-0.88 + 0.002).epsilon(1e-15));
        CHECK(y == doctest::Approx(37.83 - 0.002).epsilon(1e-15));
    }
    SUBCASE("round trip exact on 100 random integer indices") {
        Rng rng(7);
        for (int i = 0; i < 100; ++i) {
            const auto r = rng.uniform_int(0, 5000);
            const auto c = rng.uniform_int(0, 5000);
            const auto [x, y] = t.pixel_to_geo(static_cast<double>(r), static_cast<double>(c));
            const auto [rr, cc] = t.geo_to_pixel(x, y);
            CHECK(rr == r);
            CHECK(cc == c);
        }
    }
    SUBCASE("buoy CTD-1 lands on the hand-computed pixel") {
        // col = floor((-0.784483 + 0.88) / 0.004), row = floor((37.8118 - 37.83) / -0.004)
        const auto [r, c] = t.geo_to_pixel(-0.784483, 37.811800);
        CHECK(c == 23);
        CHECK(r == 4);
    }
}

TEST_CASE("crop_geo") {
    BandStack s = small_stack(4, 4); // lon/lat grid covering [0,4]x[0,4]
    s.transform.crs_id = "EPSG:4326";

    SUBCASE("identity crop") {
        const auto r = crop_geo(s, 4.0, 0.0, 0.0, 4.0);
        CHECK(r.width == 4);
        CHECK(r.height == 4);
        CHECK(r.bands[0].data == s.bands[0].data);
        CHECK(r.transform.origin_x == s.transform.origin_x);
    }
    SUBCASE("NW quadrant equals the oracle submatrix") {
        const auto r = crop_geo(s, 4.0, 0.0, 2.0, 2.0);
        CHECK(r.width == 2);
        CHECK(r.height == 2);
        CHECK(r.bands[0].data == std::vector<float>{1, 2, 5, 6});
        CHECK(r.transform.origin_y == 4.0);
    }
    SUBCASE("crop is idempotent") {
        const auto once = crop_geo(s, 3.7, 0.2, 1.1, 2.9);
        const auto twice = crop_geo(once, 3.7, 0.2, 1.1, 2.9);
        CHECK(once.width == twice.width);
        CHECK(once.height == twice.height);
        CHECK(once.bands[0].data == twice.bands[0].data);
    }
    SUBCASE("study bbox corners contained after crop") {
        BandStack big;
        big.width = 100;
        big.height = 100;
        big.transform = {-1.0, 38.0, 0.004, -0.004, "EPSG:4326"};
        big.bands.push_back({"B1", std::vector<float>(10000, 1.0f)});
        const auto r = crop_geo(big, 37.82, -0.867, 37.62, -0.7);
        const auto& t = r.transform;
        CHECK(t.origin_x <= -0.867);
        CHECK(t.origin_y >= 37.82);
        CHECK(t.origin_x + r.width * t.pixel_width >= -0.7);
        CHECK(t.origin_y + r.height * t.pixel_height <= 37.62);
    }
    SUBCASE("disjoint bbox is a domain error") {
        CHECK_THROWS_AS(crop_geo(s, 50.0, 40.0, 45.0, 44.0), domain_error);
    }
}

TEST_CASE("resample_nearest") {
    BandStack s = small_stack(2, 2);
    SUBCASE("identity at own pixel size") {
        const auto r = resample_nearest(s, 1.0);
        CHECK(r.bands[0].data == s.bands[0].data);
    }
    SUBCASE("2x upsample replicates blocks") {
        const auto r = resample_nearest(s, 0.5);
        CHECK(r.width == 4);
        CHECK(r.height == 4);
        CHECK(r.bands[0].data ==
              std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    }
    SUBCASE("random 5x5 3x upsample equals nearest-center oracle") {
        BandStack big = small_stack(5, 5);
        Rng rng(11);
        for (auto& v : big.bands[0].data) v = static_cast<float>(rng.uniform());
        const double target = 1.0 / 3.0;
        const auto r = resample_nearest(big, target);
        for (int row = 0; row < r.height; ++row)
            for (int col = 0; col < r.width; ++col) {
                // brute force: nearest input center to the output center
                const double cx = (col + 0.5) * target;
                const double cy = (row + 0.5) * target;
                int best_r = 0, best_c = 0;
                double best = 1e300;
                for (int ir = 0; ir < 5; ++ir)
                    for (int ic = 0; ic < 5; ++ic) {
                        const double d = std::abs(cx - (ic + 0.5)) + std::abs(cy - (ir + 0.5));
                        if (d < best) {
                            best = d;
                            best_r = ir;
                            best_c = ic;
                        }
                    }
                CHECK(r.bands[0].data[static_cast<std::size_t>(row) * r.width + col] ==
                      big.bands[0].data[static_cast<std::size_t>(best_r) * 5 + best_c]);
            }
    }
    SUBCASE("NaN propagates") {
        s.bands[0].data[0] = std::numeric_limits<float>::quiet_NaN();
        const auto r = resample_nearest(s, 0.5);
        CHECK(std::isnan(r.bands[0].data[0]));
    }
}

TEST_CASE("rasterize_polygon") {
    GeoTransform t{0.0, 3.0, 1.0, -1.0, "EPSG:4326"};

    SUBCASE("unit square with 9 interior centers") {
        PolygonMask m;
        m.polygons.push_back({{{{0, 0}, {3, 0}, {3, 3}, {0, 3}}}});
        const auto grid = rasterize_polygon(m, 3, 3, t);
        int count = 0;
        for (auto v : grid) count += v;
        CHECK(count == 9);
    }
    SUBCASE("square with interior hole") {
        PolygonMask m;
        Polygon p;
        p.rings.push_back({{0, 0}, {3, 0}, {3, 3}, {0, 3}});
        p.rings.push_back({{1, 1}, {2, 1}, {2, 2}, {1, 2}});
        m.polygons.push_back(p);
        const auto grid = rasterize_polygon(m, 3, 3, t);
        int count = 0;
        for (auto v : grid) count += v;
        CHECK(count == 8); // 9 outer minus the single hole-center pixel
    }
    SUBCASE("polygon outside the grid") {
        PolygonMask m;
        m.polygons.push_back({{{{10, 10}, {12, 10}, {12, 12}, {10, 12}}}});
        const auto grid = rasterize_polygon(m, 3, 3, t);
        for (auto v : grid) CHECK(v == 0);
    }
    SUBCASE("degenerate ring rejected") {
        PolygonMask m;
        m.polygons.push_back({{{{0, 0}, {1, 1}}}});
        CHECK_THROWS_AS(rasterize_polygon(m, 3, 3, t), domain_error);
    }
    SUBCASE("random polygons agree with the brute-force oracle") {
        Rng rng(23);
        GeoTransform g{0.0, 16.0, 1.0, -1.0, "EPSG:4326"};
        for (int trial = 0; trial < 25; ++trial) {
            // star-shaped polygon around a random center
            const double cx = rng.uniform(4, 12), cy = rng.uniform(4, 12);
            const int n = static_cast<int>(rng.uniform_int(3, 9));
            std::vector<std::pair<double, double>> ring;
            for (int i = 0; i < n; ++i) {
                const double a = 2 * M_PI * i / n;
                const double rad = rng.uniform(1.0, 6.0);
                ring.push_back({cx + rad * std::cos(a), cy + rad * std::sin(a)});
            }
            PolygonMask m;
            m.polygons.push_back({{ring}});
            const auto grid = rasterize_polygon(m, 16, 16, g);
            for (int r = 0; r < 16; ++r)
                for (int c = 0; c < 16; ++c) {
                    const auto [x, y] = g.pixel_to_geo(r, c);
                    CHECK(static_cast<bool>(grid[static_cast<std::size_t>(r) * 16 + c]) ==
                          oracle_inside(m, x, y));
                }
        }
    }
}

TEST_CASE("erode_mask trims a one-pixel border") {
    std::vector<std::uint8_t> grid(25, 1);
    const auto eroded = erode_mask(grid, 5, 5, 1);
    int count = 0;
    for (auto v : eroded) count += v;
    CHECK(count == 9); // interior 3x3 survives
}

TEST_CASE("geojson parsing") {
    SUBCASE("bare polygon") {
        const auto m = parse_geojson(
            R"({"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]})");
        REQUIRE(m.polygons.size() == 1);
        CHECK(m.polygons[0].rings[0].size() == 4); // closing vertex dropped
    }
    SUBCASE("feature collection with multipolygon") {
        const auto m = parse_geojson(R"({"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},"geometry":{"type":"MultiPolygon",
             "coordinates":[[[[0,0],[1,0],[1,1],[0,0]]],[[[2,2],[3,2],[3,3],[2,2]]]]}}]})");
        CHECK(m.polygons.size() == 2);
    }
    SUBCASE("unclosed ring rejected") {
        CHECK_THROWS(
            parse_geojson(R"({"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]})"));
    }
}

TEST_CASE("lonlat_to_crs equirectangular approximation stays sub-pixel") {
    GeoTransform t;
    t.crs_id = "EPSG:32630";
    t.origin_x = 680000;
    t.origin_y = 4190000; // ~37.8 N
    t.pixel_width = 10;
    t.pixel_height = -10;
    // Mar Menor center; UTM 30N reference: zone 30 central meridian -3.
    const auto [x, y] = t.lonlat_to_crs(-0.78, 37.72);
    // Position must be finite, east of the central meridian, and mapping a
    // 0.0001 deg (~11 m) step must move less than two pixels.
    CHECK(std::isfinite(x));
    CHECK(x > 500000);
    const auto [x2, y2] = t.lonlat_to_crs(-0.7799, 37.7201);
    CHECK(std::abs(x2 - x) < 20.0);
    CHECK(std::abs(y2 - y) < 20.0);
    CHECK(x2 > x);
    CHECK(y2 > y);
}
