#include "chl/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "chl/csv.hpp"
#include "chl/raster.hpp"

namespace chl {

using nlohmann::json;

void validate_date(const std::string& date) {
    if (date.size() != 10 || date[4] != '-' || date[7] != '-')
        throw format_error("bad date (expected YYYY-MM-DD): " + date);
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (!std::isdigit(static_cast<unsigned char>(date[i])))
            throw format_error("bad date (expected YYYY-MM-DD): " + date);
    const int month = std::stoi(date.substr(5, 2));
    const int day = std::stoi(date.substr(8, 2));
    if (month < 1 || month > 12 || day < 1 || day > 31)
        throw format_error("date out of range: " + date);
}

const std::array<Station, 12>& station_registry() {
    static const std::array<Station, 12> stations = {{
        {"CTD-1", 37.811800, -0.784483},
        {"CTD-2", 37.760617, -0.807800},
        {"CTD-3", 37.761783, -0.783550},
        {"CTD-4", 37.748233, -0.749617},
        {"CTD-5", 37.740450, -0.727117},
        {"CTD-6", 37.710417, -0.773833},
        {"CTD-7", 37.718000, -0.839783},
        {"CTD-8", 37.694517, -0.810400},
        {"CTD-9", 37.666817, -0.809683},
        {"CTD-10", 37.659833, -0.781967},
        {"CTD-11", 37.651800, -0.728883},
        {"CTD-12", 37.687350, -0.783783},
    }};
    return stations;
}

bool is_registered_buoy(const std::string& id) {
    for (const auto& s : station_registry())
        if (s.id == id) return true;
    return false;
}

std::string depth_bin_label(int bin) {
    if (bin < 0 || bin >= kNumDepthBins) throw domain_error("depth bin out of range");
    return std::to_string(bin) + "_" + std::to_string(bin + 1);
}

namespace {

std::vector<double> schema_depths(BuoySource schema) {
    std::vector<double> depths;
    if (schema == BuoySource::UPCT) {
        for (int i = 1; i <= 10; ++i) depths.push_back(i * 0.5);
    } else {
        for (int i = 0; i <= 5; ++i) depths.push_back(static_cast<double>(i));
    }
    return depths;
}

}  // namespace

std::vector<BuoyRecord> load_buoy_source(const std::string& path, BuoySource schema) {
    const auto csv = read_csv(path);
    if (csv.header.empty()) return {};
    if (csv.header.size() < 3 || csv.header[0] != "Date" || csv.header[1] != "Buoy")
        throw schema_error("buoy CSV must start with Date,Buoy columns: " + path);

    const auto expected = schema_depths(schema);
    std::vector<double> col_depth(csv.header.size(), -1.0);
    for (std::size_t c = 2; c < csv.header.size(); ++c) {
        double d;
        try {
            d = std::stod(csv.header[c]);
        } catch (...) {
            throw schema_error("unknown buoy column '" + csv.header[c] + "' in " + path);
        }
        const bool known = std::any_of(expected.begin(), expected.end(),
                                       [d](double e) { return std::abs(e - d) < 1e-9; });
        if (!known)
            throw schema_error("depth column '" + csv.header[c] + "' not in schema: " + path);
        col_depth[c] = d;
    }

    std::vector<BuoyRecord> records;
    for (const auto& row : csv.rows) {
        if (row.size() < 2) throw schema_error("short row in " + path);
        validate_date(row[0]);
        const auto& buoy = row[1];
        if (!is_registered_buoy(buoy)) throw schema_error("unknown buoy '" + buoy + "' in " + path);
        for (std::size_t c = 2; c < row.size() && c < csv.header.size(); ++c) {
            if (row[c].empty()) continue;
            double chl;
            try {
                chl = std::stod(row[c]);
            } catch (...) {
                throw format_error("unparseable chl value '" + row[c] + "' in " + path);
            }
            if (!std::isfinite(chl) || chl < 0)
                throw integrity_error("chl must be finite and non-negative in " + path);
            records.push_back({schema, buoy, row[0], col_depth[c], chl});
        }
    }
    return records;
}

BuoyDepthTable bin_depths(const std::vector<BuoyRecord>& records) {
    std::map<std::tuple<std::string, std::string, int>, std::pair<double, int>> acc;
    for (const auto& r : records) {
        int bin;
        if (r.depth >= 0.0 && r.depth < 4.0)
            bin = static_cast<int>(std::floor(r.depth));
        else if (r.depth == 4.0)
            bin = 3; // closed upper edge of the last bin
        else
            continue;
        auto& slot = acc[{r.date, r.buoy_id, bin}];
        slot.first += r.chl;
        slot.second += 1;
    }
    BuoyDepthTable table;
    for (const auto& [key, sum_count] : acc)
        table.rows[key] = sum_count.first / sum_count.second;
    return table;
}

BuoyDepthTable merge_sources(const BuoyDepthTable& a, const BuoyDepthTable& b) {
    BuoyDepthTable out = a;
    for (const auto& [key, chl] : b.rows) {
        auto it = out.rows.find(key);
        if (it == out.rows.end())
            out.rows[key] = chl;
        else
            it->second = 0.5 * (it->second + chl);
    }
    return out;
}

void write_depth_table_csv(const BuoyDepthTable& table, int bin, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "Date,Buoy,Chl\n";
    for (const auto& [key, chl] : table.rows) {
        const auto& [date, buoy, b] = key;
        if (b != bin) continue;
        os << date << ',' << buoy << ',' << chl << '\n';
    }
}

BuoyDepthTable read_depth_table_csv(const std::string& path, int bin) {
    const auto csv = read_csv(path);
    if (csv.header != std::vector<std::string>{"Date", "Buoy", "Chl"})
        throw schema_error("expected Date,Buoy,Chl header: " + path);
    BuoyDepthTable table;
    for (const auto& row : csv.rows) {
        if (row.size() != 3) throw schema_error("short row in " + path);
        validate_date(row[0]);
        table.rows[{row[0], row[1], bin}] = std::stod(row[2]);
    }
    return table;
}

std::vector<SceneCatalogEntry> load_scene_catalog(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw format_error(std::string("scene catalog parse error: ") + e.what());
    }
    if (!j.is_array()) throw format_error("scene catalog must be a JSON array: " + path);
    std::vector<SceneCatalogEntry> catalog;
    for (const auto& e : j) {
        SceneCatalogEntry entry;
        entry.date = e.at("date").get<std::string>();
        validate_date(entry.date);
        entry.tile_id = e.value("tile_id", "30SXG");
        entry.processor = e.value("processor", "C2XC");
        entry.path = e.at("path").get<std::string>();
        entry.cloud_pct = e.value("cloud_pct", 0.0);
        entry.file_bytes = e.value("file_bytes", std::int64_t{0});
        entry.valid_pixel_fraction = e.value("valid_pixel_fraction", -1.0);
        if (entry.cloud_pct < 0 || entry.cloud_pct > 100)
            throw integrity_error("cloud_pct out of [0,100] for " + entry.date);
        catalog.push_back(std::move(entry));
    }
    return catalog;
}

void write_scene_catalog(const std::vector<SceneCatalogEntry>& catalog, const std::string& path) {
    json j = json::array();
    for (const auto& e : catalog) {
        j.push_back({{"date", e.date},
                     {"tile_id", e.tile_id},
                     {"processor", e.processor},
                     {"path", e.path},
                     {"cloud_pct", e.cloud_pct},
                     {"file_bytes", e.file_bytes},
                     {"valid_pixel_fraction", e.valid_pixel_fraction}});
    }
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << j.dump(2) << '\n';
}

std::vector<SceneCatalogEntry> filter_scenes(std::vector<SceneCatalogEntry> catalog,
                                             double max_cloud_pct, double min_valid_fraction,
                                             const std::vector<std::string>& excluded_dates) {
    const std::set<std::string> excluded(excluded_dates.begin(), excluded_dates.end());
    std::vector<SceneCatalogEntry> kept;
    for (auto& e : catalog) {
        if (e.cloud_pct > max_cloud_pct) continue;
        if (e.valid_pixel_fraction >= 0 && e.valid_pixel_fraction < min_valid_fraction) continue;
        if (excluded.count(e.date)) continue;
        kept.push_back(std::move(e));
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const SceneCatalogEntry& a, const SceneCatalogEntry& b) {
                         return std::tie(a.date, a.processor) < std::tie(b.date, b.processor);
                     });
    return kept;
}

double valid_pixel_fraction(const BandStack& stack) {
    const Band* b3 = stack.find_band("TOA_B3");
    if (!b3) throw contract_error("stack has no TOA_B3 band");
    std::size_t valid = 0;
    for (float v : b3->data)
        if (std::isfinite(v) && v != 0.0f) ++valid;
    return static_cast<double>(valid) / static_cast<double>(b3->data.size());
}

}  // namespace chl
