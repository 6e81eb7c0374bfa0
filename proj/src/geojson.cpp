#include "chl/geojson.hpp"

#include <fstream>

#include <json.hpp>

namespace chl {

namespace {

using nlohmann::json;

Polygon parse_polygon_coords(const json& coords) {
    Polygon poly;
    for (const auto& ring_j : coords) {
        std::vector<std::pair<double, double>> ring;
        for (const auto& v : ring_j) {
            if (!v.is_array() || v.size() < 2) throw format_error("bad GeoJSON position");
            ring.emplace_back(v[0].get<double>(), v[1].get<double>());
        }
        if (ring.size() < 4 || ring.front() != ring.back())
            throw format_error("GeoJSON ring is not closed");
        ring.pop_back(); // drop the closing duplicate
        poly.rings.push_back(std::move(ring));
    }
    if (poly.rings.empty()) throw format_error("GeoJSON polygon has no rings");
    return poly;
}

void collect(const json& node, PolygonMask& mask) {
    const auto type = node.value("type", "");
    if (type == "FeatureCollection") {
        for (const auto& f : node.at("features")) collect(f, mask);
    } else if (type == "Feature") {
        collect(node.at("geometry"), mask);
    } else if (type == "Polygon") {
        mask.polygons.push_back(parse_polygon_coords(node.at("coordinates")));
    } else if (type == "MultiPolygon") {
        for (const auto& p : node.at("coordinates"))
            mask.polygons.push_back(parse_polygon_coords(p));
    } else {
        throw format_error("unsupported GeoJSON type: " + type);
    }
}

}  // namespace

PolygonMask parse_geojson(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw format_error(std::string("GeoJSON parse error: ") + e.what());
    }
    PolygonMask mask;
    collect(j, mask);
    if (mask.polygons.empty()) throw format_error("GeoJSON contains no polygons");
    return mask;
}

PolygonMask read_geojson(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_geojson(text);
}

}  // namespace chl
