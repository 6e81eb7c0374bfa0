#include "chl/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "chl/csv.hpp"

namespace chl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kDenomGuard = 1e-12;

double wavelength_of(const std::string& short_name) {
    static const std::map<std::string, double> wl = {
        {"B1", 443},  {"B2", 490},  {"B3", 560},  {"B4", 665},  {"B5", 705},
        {"B6", 740},  {"B7", 783},  {"B8", 842},  {"B8A", 865}, {"B9", 940},
        {"B10", 1375}, {"B11", 1610}, {"B12", 2190}};
    return wl.at(short_name);
}

std::vector<std::string> toa_shorts() {
    std::vector<std::string> v;
    for (int i = 1; i <= 12; ++i) v.push_back("B" + std::to_string(i));
    return v;
}

std::vector<std::string> rhow_shorts() {
    std::vector<std::string> v;
    for (int i = 1; i <= 8; ++i) v.push_back("B" + std::to_string(i));
    v.push_back("B8A");
    return v;
}

std::vector<std::string> rhown_shorts() {
    std::vector<std::string> v;
    for (int i = 1; i <= 6; ++i) v.push_back("B" + std::to_string(i));
    return v;
}

}  // namespace

const std::vector<ReflectanceKind>& all_reflectance_kinds() {
    static const std::vector<ReflectanceKind> kinds = {
        ReflectanceKind::TOA,       ReflectanceKind::C2RCC_rhow, ReflectanceKind::C2RCC_rhown,
        ReflectanceKind::C2X_rhow,  ReflectanceKind::C2X_rhown,  ReflectanceKind::C2XC_rhow,
        ReflectanceKind::C2XC_rhown};
    return kinds;
}

std::string ReflectanceSet::label() const {
    switch (kind) {
        case ReflectanceKind::TOA: return "TOA";
        case ReflectanceKind::C2RCC_rhow: return "C2RCC_rhow";
        case ReflectanceKind::C2RCC_rhown: return "C2RCC_rhown";
        case ReflectanceKind::C2X_rhow: return "C2X_rhow";
        case ReflectanceKind::C2X_rhown: return "C2X_rhown";
        case ReflectanceKind::C2XC_rhow: return "C2X-Complex_rhow";
        case ReflectanceKind::C2XC_rhown: return "C2X-Complex_rhown";
    }
    throw domain_error("bad reflectance kind");
}

std::string ReflectanceSet::processor() const {
    switch (kind) {
        case ReflectanceKind::TOA: return "";
        case ReflectanceKind::C2RCC_rhow:
        case ReflectanceKind::C2RCC_rhown: return "C2RCC";
        case ReflectanceKind::C2X_rhow:
        case ReflectanceKind::C2X_rhown: return "C2X";
        case ReflectanceKind::C2XC_rhow:
        case ReflectanceKind::C2XC_rhown: return "C2XC";
    }
    throw domain_error("bad reflectance kind");
}

ReflectanceSet reflectance_set(ReflectanceKind kind) {
    ReflectanceSet set;
    set.kind = kind;
    std::string prefix;
    switch (kind) {
        case ReflectanceKind::TOA:
            set.short_names = toa_shorts();
            prefix = "TOA_";
            break;
        case ReflectanceKind::C2RCC_rhow:
        case ReflectanceKind::C2X_rhow:
        case ReflectanceKind::C2XC_rhow:
            set.short_names = rhow_shorts();
            prefix = "rhow_";
            break;
        case ReflectanceKind::C2RCC_rhown:
        case ReflectanceKind::C2X_rhown:
        case ReflectanceKind::C2XC_rhown:
            set.short_names = rhown_shorts();
            prefix = "rhown_";
            break;
    }
    for (const auto& s : set.short_names) {
        set.band_names.push_back(prefix + s);
        set.wavelengths.push_back(wavelength_of(s));
    }
    return set;
}

ReflectanceKind reflectance_kind_from_label(const std::string& label) {
    for (auto k : all_reflectance_kinds())
        if (reflectance_set(k).label() == label) return k;
    throw domain_error("unknown reflectance set label: " + label);
}

const std::vector<IndexFamily>& all_index_families() {
    static const std::vector<IndexFamily> families = {
        IndexFamily::ND,      IndexFamily::DallGitelson, IndexFamily::ND4,
        IndexFamily::InvDiff, IndexFamily::RatioDiff,    IndexFamily::ThreeBandSum};
    return families;
}

std::string family_prefix(IndexFamily family) {
    switch (family) {
        case IndexFamily::ND: return "ND";
        case IndexFamily::DallGitelson: return "DG";
        case IndexFamily::ND4: return "ND4";
        case IndexFamily::InvDiff: return "INV";
        case IndexFamily::RatioDiff: return "RD";
        case IndexFamily::ThreeBandSum: return "TBS";
    }
    throw domain_error("bad index family");
}

namespace {

std::string index_name(IndexFamily family, const ReflectanceSet& set,
                       const std::vector<int>& refs) {
    std::string name = family_prefix(family);
    for (int r : refs) name += "_" + set.short_names[static_cast<std::size_t>(r)];
    return name;
}

std::size_t min_bands(IndexFamily family) {
    switch (family) {
        case IndexFamily::ND:
        case IndexFamily::InvDiff:
        case IndexFamily::ND4:
        case IndexFamily::RatioDiff: return 2;
        case IndexFamily::DallGitelson:
        case IndexFamily::ThreeBandSum: return 3;
    }
    return 2;
}

}  // namespace

std::vector<SpectralIndex> enumerate_indices(IndexFamily family, const ReflectanceSet& set) {
    const int n = static_cast<int>(set.size());
    if (static_cast<std::size_t>(n) < min_bands(family))
        throw domain_error("reflectance set too small for family " + family_prefix(family));

    std::vector<SpectralIndex> out;
    auto emit = [&](std::vector<int> refs) {
        SpectralIndex ix;
        ix.family = family;
        ix.canonical_name = index_name(family, set, refs);
        ix.band_refs = std::move(refs);
        out.push_back(std::move(ix));
    };

    switch (family) {
        case IndexFamily::ND:
        case IndexFamily::InvDiff:
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) emit({i, j});
            break;
        case IndexFamily::DallGitelson:
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        if (k != i && k != j) emit({i, j, k});
            break;
        case IndexFamily::ND4:
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    for (int a = 0; a < n; ++a)
                        for (int b = a; b < n; ++b) {
                            if (a == i && b == j) continue; // degenerates to ND
                            emit({i, j, a, b});
                        }
            break;
        case IndexFamily::RatioDiff:
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    if (a == b) continue;
                    for (int c = 0; c < n; ++c) {
                        if (c == a) continue; // same-numerator pair is a DG instance
                        for (int d = 0; d < n; ++d) {
                            if (c == d) continue;
                            if (std::make_pair(a, b) >= std::make_pair(c, d)) continue;
                            emit({a, b, c, d});
                        }
                    }
                }
            break;
        case IndexFamily::ThreeBandSum:
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    for (int k = j + 1; k < n; ++k) emit({i, j, k});
            break;
    }
    return out;
}

std::vector<SpectralIndex> enumerate_all_indices(const ReflectanceSet& set) {
    std::vector<SpectralIndex> all;
    for (auto family : all_index_families()) {
        auto part = enumerate_indices(family, set);
        all.insert(all.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
    }
    return all;
}

std::size_t index_count(IndexFamily family, std::size_t n) {
    const auto c2 = n * (n - 1) / 2;
    switch (family) {
        case IndexFamily::ND:
        case IndexFamily::InvDiff: return c2;
        case IndexFamily::DallGitelson: return c2 * (n - 2);
        case IndexFamily::ND4: return c2 * (n * (n + 1) / 2 - 1);
        case IndexFamily::RatioDiff: {
            const auto m = n * (n - 1); // ordered pairs
            return m * (m - 1) / 2 - n * ((n - 1) * (n - 2) / 2);
        }
        case IndexFamily::ThreeBandSum: return n * (n - 1) * (n - 2) / 6;
    }
    throw domain_error("bad index family");
}

double eval_index(const SpectralIndex& ix, const std::vector<double>& r) {
    auto v = [&](int k) { return r[static_cast<std::size_t>(ix.band_refs[static_cast<std::size_t>(k)])]; };
    switch (ix.family) {
        case IndexFamily::ND: {
            const double den = v(0) + v(1);
            if (std::abs(den) < kDenomGuard) return kNaN;
            return (v(0) - v(1)) / den;
        }
        case IndexFamily::InvDiff: {
            if (v(0) <= 0 || v(1) <= 0) return kNaN;
            return 1.0 / v(0) - 1.0 / v(1);
        }
        case IndexFamily::DallGitelson: {
            if (v(0) <= 0 || v(1) <= 0) return kNaN;
            return (1.0 / v(0) - 1.0 / v(1)) * v(2);
        }
        case IndexFamily::ND4: {
            const double den = v(2) + v(3);
            if (std::abs(den) < kDenomGuard) return kNaN;
            return (v(0) - v(1)) / den;
        }
        case IndexFamily::RatioDiff: {
            if (std::abs(v(1)) < kDenomGuard || std::abs(v(3)) < kDenomGuard) return kNaN;
            return v(0) / v(1) - v(2) / v(3);
        }
        case IndexFamily::ThreeBandSum: {
            const double den = v(0) + v(1);
            if (std::abs(den) < kDenomGuard) return kNaN;
            return (v(0) + v(2)) / den;
        }
    }
    throw domain_error("bad index family");
}

std::vector<double> window_mean(const BandStack& stack, int row, int col, int w,
                                const ReflectanceSet& set) {
    if (row < 0 || col < 0 || row >= stack.height || col >= stack.width)
        throw domain_error("window center outside grid");
    if (w < 1 || w % 2 == 0) throw domain_error("window size must be odd and positive");

    const int half = w / 2;
    const int r0 = std::max(0, row - half), r1 = std::min(stack.height - 1, row + half);
    const int c0 = std::max(0, col - half), c1 = std::min(stack.width - 1, col + half);

    std::vector<double> means;
    means.reserve(set.size());
    for (const auto& name : set.band_names) {
        const Band* band = stack.find_band(name);
        if (!band) throw contract_error("stack is missing band " + name);
        double sum = 0.0;
        int count = 0;
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                const float v = band->data[static_cast<std::size_t>(r) * stack.width + c];
                if (std::isfinite(v)) {
                    sum += v;
                    ++count;
                }
            }
        means.push_back(count > 0 ? sum / count : kNaN);
    }
    return means;
}

int FeatureTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

std::string make_dataset_id(const ReflectanceSet& set, int window, int depth_bin) {
    return set.label() + "_" + std::to_string(window) + "x" + std::to_string(window) +
           "_depth_in_" + depth_bin_label(depth_bin);
}

FeatureTable build_dataset(const BuoyDepthTable& buoys,
                           const std::vector<std::pair<std::string, const BandStack*>>& scenes,
                           const ReflectanceSet& set, int window, int depth_bin) {
    FeatureTable table;
    table.dataset_id = make_dataset_id(set, window, depth_bin);
    table.has_target = true;
    table.n_raw_bands = static_cast<int>(set.size());
    table.columns = set.band_names;
    const auto indices = enumerate_all_indices(set);
    for (const auto& ix : indices) table.columns.push_back(ix.canonical_name);

    // Sort the scene list by date so the output is independent of input order.
    std::map<std::string, const BandStack*> by_date;
    for (const auto& [date, stack] : scenes) by_date[date] = stack;

    for (const auto& [date, stack] : by_date) {
        for (const auto& station : station_registry()) {
            auto it = buoys.rows.find({date, station.id, depth_bin});
            if (it == buoys.rows.end()) continue;
            const auto [x, y] = stack->transform.lonlat_to_crs(station.lon, station.lat);
            const auto [row, col] = stack->transform.geo_to_pixel(x, y);
            if (row < 0 || col < 0 || row >= stack->height || col >= stack->width) continue;

            auto means = window_mean(*stack, static_cast<int>(row), static_cast<int>(col),
                                     window, set);
            std::vector<double> feats = means;
            feats.reserve(table.columns.size());
            for (const auto& ix : indices) feats.push_back(eval_index(ix, means));

            const bool any_nan = std::any_of(feats.begin(), feats.end(),
                                             [](double v) { return !std::isfinite(v); });
            if (any_nan) {
                ++table.dropped_rows;
                continue;
            }
            table.key_date.push_back(date);
            table.key_buoy.push_back(station.id);
            table.values.push_back(std::move(feats));
            table.target.push_back(it->second);
        }
    }
    return table;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    if (n != b.size() || n < 2) throw domain_error("pearson needs two equal vectors of size >= 2");
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0; // zero variance
    return sab / std::sqrt(saa * sbb);
}

std::vector<std::string> screen_features(const FeatureTable& table,
                                         const std::vector<std::size_t>& train_rows,
                                         std::size_t top_k) {
    if (!table.has_target) throw contract_error("screen_features needs a target column");
    std::vector<double> y;
    y.reserve(train_rows.size());
    for (auto r : train_rows) y.push_back(table.target[r]);

    std::vector<std::string> retained(table.columns.begin(),
                                      table.columns.begin() + table.n_raw_bands);
    if (top_k == 0) return retained;

    std::vector<std::pair<double, std::string>> scored; // (-|r|, name) for ascending sort
    std::vector<double> col(train_rows.size());
    for (std::size_t c = table.n_raw_bands; c < table.columns.size(); ++c) {
        for (std::size_t i = 0; i < train_rows.size(); ++i) col[i] = table.values[train_rows[i]][c];
        double r = 0.0;
        if (train_rows.size() >= 2) r = pearson(col, y);
        scored.emplace_back(-std::abs(r), table.columns[c]);
    }
    std::sort(scored.begin(), scored.end());
    const std::size_t keep = std::min(top_k, scored.size());
    for (std::size_t i = 0; i < keep; ++i) retained.push_back(scored[i].second);
    return retained;
}

void write_feature_table_csv(const FeatureTable& table, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "# dataset_id=" << table.dataset_id << '\n';
    os << "# dropped_rows=" << table.dropped_rows << '\n';
    os << (table.pixel_keyed ? "Row,Col" : "Date,Buoy");
    for (const auto& c : table.columns) os << ',' << c;
    if (table.has_target) os << ",Chl";
    os << '\n';
    os.precision(17);
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        if (table.pixel_keyed)
            os << table.key_row[r] << ',' << table.key_col[r];
        else
            os << table.key_date[r] << ',' << table.key_buoy[r];
        for (double v : table.values[r]) os << ',' << v;
        if (table.has_target) os << ',' << table.target[r];
        os << '\n';
    }
}

FeatureTable read_feature_table_csv(const std::string& path) {
    const auto csv = read_csv(path);
    FeatureTable table;
    for (const auto& comment : csv.comments) {
        if (comment.rfind("# dataset_id=", 0) == 0) table.dataset_id = comment.substr(13);
        if (comment.rfind("# dropped_rows=", 0) == 0)
            table.dropped_rows = std::stoul(comment.substr(15));
    }
    if (csv.header.size() < 3) throw schema_error("feature table too narrow: " + path);
    table.pixel_keyed = csv.header[0] == "Row";
    table.has_target = csv.header.back() == "Chl";
    const std::size_t first = 2;
    const std::size_t last = csv.header.size() - (table.has_target ? 1 : 0);
    table.columns.assign(csv.header.begin() + first, csv.header.begin() + last);
    // Raw band columns precede index columns; indices start at a family prefix.
    table.n_raw_bands = 0;
    for (const auto& c : table.columns) {
        bool is_index = false;
        for (auto f : all_index_families()) {
            const auto p = family_prefix(f) + "_";
            if (c.rfind(p, 0) == 0) is_index = true;
        }
        if (is_index) break;
        ++table.n_raw_bands;
    }
    for (const auto& row : csv.rows) {
        if (row.size() != csv.header.size()) throw schema_error("ragged feature table: " + path);
        if (table.pixel_keyed) {
            table.key_row.push_back(std::stoi(row[0]));
            table.key_col.push_back(std::stoi(row[1]));
        } else {
            table.key_date.push_back(row[0]);
            table.key_buoy.push_back(row[1]);
        }
        std::vector<double> vals;
        vals.reserve(last - first);
        for (std::size_t c = first; c < last; ++c) vals.push_back(std::stod(row[c]));
        table.values.push_back(std::move(vals));
        if (table.has_target) table.target.push_back(std::stod(row.back()));
    }
    return table;
}

}  // namespace chl
