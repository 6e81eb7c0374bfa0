#pragma once

#include <string>

#include "chl/raster.hpp"

namespace chl {

// GeoTIFF subset: classic little-endian TIFF, float32 samples, stripped or
// tiled layout, chunky or planar interleave, compression none or deflate.
// Band names come from GDAL band-description metadata when present; a
// 28-sample file without names gets the canonical stack layout.
BandStack read_geotiff(const std::string& path);

// Writer emits uncompressed chunky strips with ModelPixelScale/ModelTiepoint
// geo tags and GDAL band-description metadata.
void write_geotiff(const BandStack& stack, const std::string& path);

}  // namespace chl
