#pragma once

#include <string>

#include "chl/raster.hpp"

namespace chl {

// RFC 7946 subset: Polygon and MultiPolygon geometries, bare or wrapped in
// Feature / FeatureCollection.
PolygonMask read_geojson(const std::string& path);
PolygonMask parse_geojson(const std::string& text);

}  // namespace chl
