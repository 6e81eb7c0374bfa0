#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chl/ingest.hpp"
#include "chl/raster.hpp"

namespace chl {

enum class ReflectanceKind {
    TOA,
    C2RCC_rhow,
    C2RCC_rhown,
    C2X_rhow,
    C2X_rhown,
    C2XC_rhow,
    C2XC_rhown,
};

const std::vector<ReflectanceKind>& all_reflectance_kinds();

// A band subset of the 28-band stack together with central wavelengths,
// in strictly increasing wavelength order (B8 at 842 nm precedes B8A).
struct ReflectanceSet {
    ReflectanceKind kind;
    std::vector<std::string> band_names;  // stack band names, e.g. "rhow_B3"
    std::vector<std::string> short_names; // "B3"
    std::vector<double> wavelengths;      // nm

    std::size_t size() const { return band_names.size(); }
    // "TOA", "C2RCC_rhow", "C2X-Complex_rhow", ... (dataset-id prefix)
    std::string label() const;
    // Which processed stack to read from: "C2RCC" | "C2X" | "C2XC" | "" (TOA, any)
    std::string processor() const;
};

ReflectanceSet reflectance_set(ReflectanceKind kind);
ReflectanceKind reflectance_kind_from_label(const std::string& label);

enum class IndexFamily { ND, DallGitelson, ND4, InvDiff, RatioDiff, ThreeBandSum };

const std::vector<IndexFamily>& all_index_families();
std::string family_prefix(IndexFamily family);

struct SpectralIndex {
    IndexFamily family;
    std::vector<int> band_refs; // positions within the ReflectanceSet
    std::string canonical_name;
};

// Canonical, deduplicated enumeration. With i/j/... denoting positions in
// wavelength order:
//   ND   (Ri-Rj)/(Ri+Rj), i<j                          -> C(n,2)
//   Inv  1/Ri - 1/Rj, i<j                              -> C(n,2)
//   DG   (1/Ri - 1/Rj)*Rk, i<j, k distinct             -> C(n,2)*(n-2)
//   ND4  (Ri-Rj)/(Ra+Rb), i<j, a<=b, {a,b} != {i,j}    -> C(n,2)*(n(n+1)/2 - 1)
//   RD   Ra/Rb - Rc/Rd, a!=b, c!=d, (a,b)<(c,d) lex,
//        a!=c (a==c collapses into a DG instance)      -> C(n(n-1),2) - n*C(n-1,2)
//   TBS  (Ri+Rk)/(Ri+Rj), i<j<k                        -> C(n,3)
std::vector<SpectralIndex> enumerate_indices(IndexFamily family, const ReflectanceSet& set);

// All families concatenated in family order.
std::vector<SpectralIndex> enumerate_all_indices(const ReflectanceSet& set);

// Closed-form count for a family over n bands (oracle-facing helper).
std::size_t index_count(IndexFamily family, std::size_t n);

// NaN on guarded denominators (|den| < 1e-12) or non-positive inputs to
// reciprocal families.
double eval_index(const SpectralIndex& ix, const std::vector<double>& reflectances);

// Per-band NaN-ignoring mean over the w x w window centered at (row, col),
// clipped to the grid. Zero valid pixels in a band -> NaN.
std::vector<double> window_mean(const BandStack& stack, int row, int col, int w,
                                const ReflectanceSet& set);

struct FeatureTable {
    std::string dataset_id;
    bool pixel_keyed = false;
    std::vector<std::string> key_date;
    std::vector<std::string> key_buoy;
    std::vector<int> key_row;
    std::vector<int> key_col;
    std::vector<std::string> columns; // raw band means first, then indices
    int n_raw_bands = 0;
    std::vector<std::vector<double>> values; // one vector per row
    bool has_target = false;
    std::vector<double> target; // chl, mg/m3
    std::size_t dropped_rows = 0;

    std::size_t n_rows() const { return values.size(); }
    int column_index(const std::string& name) const;
};

std::string make_dataset_id(const ReflectanceSet& set, int window, int depth_bin);

// One row per (date, buoy) with ground truth for depth_bin and a scene on
// exactly that date. Rows with any NaN feature are dropped and counted.
FeatureTable build_dataset(const BuoyDepthTable& buoys,
                           const std::vector<std::pair<std::string, const BandStack*>>& scenes,
                           const ReflectanceSet& set, int window, int depth_bin);

// |Pearson r| ranking of index columns against the target, computed on the
// given training rows only. Raw band columns are always retained; ties break
// by name. Zero-variance columns score 0.
std::vector<std::string> screen_features(const FeatureTable& table,
                                         const std::vector<std::size_t>& train_rows,
                                         std::size_t top_k);

void write_feature_table_csv(const FeatureTable& table, const std::string& path);
FeatureTable read_feature_table_csv(const std::string& path);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace chl
