#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "chl/eval.hpp"

namespace chl {

struct RenderConfig {
    double gamma = 0.5;
    double chl_max = 0.0; // <= 0: p99 of the map
};

struct PipelineConfig {
    int schema_version = 1;

    // Paths are resolved against the config file's directory.
    std::string scene_catalog;
    std::string buoy_upct;
    std::string buoy_imida;
    std::string lagoon_mask; // GeoJSON
    std::string out_dir;

    double bbox_north = 0, bbox_west = 0, bbox_south = 0, bbox_east = 0;
    bool has_bbox = false;

    std::vector<int> windows = {1, 3, 5, 9, 15};
    std::vector<std::string> set_labels; // empty = all seven
    std::vector<int> depth_bins = {0, 1, 2, 3};
    std::vector<std::string> model_labels = {"LR", "ELN", "KNN", "MLP",
                                             "RF", "XGB", "LBM", "CAT"};
    std::map<std::string, std::map<std::string, double>> model_overrides;

    std::uint64_t seed = 1234;
    double test_fraction = 0.25;
    int k_folds = 5;
    double max_cloud_pct = 30.0;
    double min_valid_fraction = 0.5;
    double high_chl_threshold = kHighChlThreshold;
    std::vector<std::string> excluded_dates;
    std::size_t top_k_screening = 50;
    int search_budget = 0; // 0: default hyperparameters only
    std::size_t per_processor_top = 10;
    double ensemble_lambda = 1e-3;
    int mask_erosion = 0;
    RenderConfig render;

    std::string config_dir; // for path resolution
    std::uint64_t config_hash = 0;

    std::string resolve(const std::string& path) const;
};

PipelineConfig load_config(const std::string& path);

// Report-column model roster: label -> spec (GBT backs XGB/LBM/CAT).
ModelSpec spec_for_label(const PipelineConfig& cfg, const std::string& label,
                         const std::string& dataset_id);

int cmd_ingest(const PipelineConfig& cfg, int n_threads);
int cmd_features(const PipelineConfig& cfg, int n_threads);
int cmd_train(const PipelineConfig& cfg, int n_threads);
int cmd_select(const PipelineConfig& cfg, int n_threads);
int cmd_infer(const PipelineConfig& cfg, const std::string& date, int n_threads);
int cmd_report(const PipelineConfig& cfg, int n_threads);

// Full argv entry point; returns the process exit code (0 ok, 2 config
// error, 3 missing input, 1 other failure).
int run_cli(const std::vector<std::string>& args);

}  // namespace chl
