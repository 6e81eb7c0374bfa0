#pragma once

#include <string>

#include "chl/raster.hpp"

namespace chl {

// BSF ("band stack file"): bit-exact little-endian interchange format.
//   magic "BSF1"
//   u32 width, u32 height, u32 band_count
//   per band: u16 name length, UTF-8 name
//   band_count * height * width float32, row-major, band-sequential
//   f64 origin_x, origin_y, pixel_width, pixel_height; u16 crs length, CRS
BandStack read_bsf(const std::string& path);
void write_bsf(const BandStack& stack, const std::string& path);

// Dispatches on file magic: BSF or the supported GeoTIFF subset.
BandStack read_band_stack(const std::string& path);

}  // namespace chl
