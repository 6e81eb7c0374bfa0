#pragma once

#include <array>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "chl/util.hpp"

namespace chl {

struct BandStack;

enum class BuoySource { UPCT, IMIDA };

struct Station {
    std::string id;
    double lat;
    double lon;
};

// The 12 monitoring stations and their WGS84 coordinates.
const std::array<Station, 12>& station_registry();
bool is_registered_buoy(const std::string& id);

struct BuoyRecord {
    BuoySource source;
    std::string buoy_id; // CTD-1..CTD-12
    std::string date;    // YYYY-MM-DD
    double depth;        // meters
    double chl;          // mg/m3
};

// Depth bins 0-1, 1-2, 2-3, 3-4 m.
constexpr int kNumDepthBins = 4;
std::string depth_bin_label(int bin); // "0_1".."3_4"

struct BuoyDepthTable {
    // key (date, buoy_id, bin) -> chl
    std::map<std::tuple<std::string, std::string, int>, double> rows;
};

// CSV with columns Date,Buoy,<depth>... where the depth headers are the
// source's measurement depths (UPCT: 0.5-step from 0.5 to 5.0; IMIDA:
// integers 0 to 5). Empty cells are skipped.
std::vector<BuoyRecord> load_buoy_source(const std::string& path, BuoySource schema);

// Assign records to half-open bins [a, a+1); depth exactly 4.0 closes bin
// 3-4; deeper records are dropped. Bin value is the arithmetic mean.
BuoyDepthTable bin_depths(const std::vector<BuoyRecord>& records);

// Per key: one side present -> that value; both -> mean.
BuoyDepthTable merge_sources(const BuoyDepthTable& a, const BuoyDepthTable& b);

// One CSV per depth bin, columns Date,Buoy,Chl, rows sorted by (date, buoy).
void write_depth_table_csv(const BuoyDepthTable& table, int bin, const std::string& path);
BuoyDepthTable read_depth_table_csv(const std::string& path, int bin);

struct SceneCatalogEntry {
    std::string date;
    std::string tile_id;
    std::string processor; // C2RCC | C2X | C2XC
    std::string path;
    double cloud_pct = 0.0;
    std::int64_t file_bytes = 0;
    double valid_pixel_fraction = -1.0; // computed lazily; -1 = unknown
};

std::vector<SceneCatalogEntry> load_scene_catalog(const std::string& path);
void write_scene_catalog(const std::vector<SceneCatalogEntry>& catalog, const std::string& path);

// Keeps cloud_pct <= max_cloud_pct and valid_pixel_fraction >= min_valid,
// minus any date on the manual exclusion list; sorted by date.
std::vector<SceneCatalogEntry> filter_scenes(std::vector<SceneCatalogEntry> catalog,
                                             double max_cloud_pct, double min_valid_fraction,
                                             const std::vector<std::string>& excluded_dates = {});

// Fraction of non-NaN, non-zero TOA_B3 pixels (whole grid).
double valid_pixel_fraction(const BandStack& stack);

}  // namespace chl
