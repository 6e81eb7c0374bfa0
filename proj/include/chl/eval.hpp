#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "chl/features.hpp"
#include "chl/models.hpp"

namespace chl {

constexpr double kHighChlThreshold = 5.0; // mg/m3

std::vector<bool> label_high_chl(const std::vector<double>& y,
                                 double threshold = kHighChlThreshold);
// Empirical quantile of the threshold within y (fraction of values <= t).
double threshold_quantile(const std::vector<double>& y, double threshold);

// Test-row selection: per-class shuffle, largest-remainder allocation so the
// test set totals round(fraction * n) rows and each class is proportionally
// represented within one row.
std::vector<std::size_t> stratified_split(const std::vector<bool>& labels, double test_fraction,
                                          std::uint64_t seed);

// Fold index per input position. Per-class shuffled round-robin with a running
// offset carried across classes, so overall fold sizes also differ by <= 1.
std::vector<int> stratified_kfold(const std::vector<bool>& labels, int k, std::uint64_t seed);

struct SplitPlan {
    std::vector<std::size_t> test_rows;  // sorted
    std::vector<std::size_t> train_rows; // sorted
    std::vector<int> fold_of_train;      // parallel to train_rows, values 0..k-1
    std::vector<bool> labels;            // per table row
    int k = 5;
    std::uint64_t seed = 0;
};

SplitPlan make_split_plan(const std::vector<double>& y, double test_fraction, int k,
                          std::uint64_t seed, double threshold = kHighChlThreshold);

// R^2 and RMSE per the usual definitions; r2 on zero-variance y is an error.
double r2(const std::vector<double>& y, const std::vector<double>& yhat);
double rmse(const std::vector<double>& y, const std::vector<double>& yhat);

struct FoldMetrics {
    double r2 = 0.0;
    double rmse = 0.0;
};

struct EvalReport {
    std::string dataset_id;
    std::string model_label; // report column label (may differ from kind name)
    ModelKind kind = ModelKind::LR;
    std::vector<FoldMetrics> folds;
    double val_r2 = 0.0;  // pooled out-of-fold metric
    double val_rmse = 0.0;
    double mean_fold_r2 = 0.0; // search objective
    double test_r2 = 0.0;
    double test_rmse = 0.0;
    std::map<std::string, double> hyper;
    std::uint64_t seed = 0;
    double high_quantile = 0.0;
    std::size_t dropped_rows = 0;
    bool failed = false;
    std::string fail_reason;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

struct CvResult {
    EvalReport report;
    std::vector<double> oof;       // parallel to plan.train_rows
    std::vector<double> test_pred; // parallel to plan.test_rows (mean of folds)
    std::vector<std::vector<double>> fold_test_preds; // k x n_test
    std::vector<TrainedModel> fold_models;
};

// Per fold: screening and scaling on that fold's training rows only, predict
// the validation fold and the test rows; test prediction = mean over folds.
CvResult cross_validate(const ModelSpec& spec, const FeatureTable& table, const SplitPlan& plan,
                        std::size_t screen_top_k, int n_threads = 1);

struct EnsembleResult {
    EvalReport report;
    std::vector<double> oof;       // meta-model out-of-fold predictions
    std::vector<double> test_pred; // meta-model refit on all OOF rows
};

// Ridge stacking over base-model OOF predictions, fold loop mirroring the plan.
EnsembleResult evaluate_ensemble(const std::vector<std::vector<double>>& base_oof,
                                 const std::vector<std::vector<double>>& base_test_preds,
                                 const FeatureTable& table, const SplitPlan& plan,
                                 double lambda_l2);

struct DatasetRank {
    std::string dataset_id;
    std::string processor; // "TOA" | "C2RCC" | "C2X" | "C2X-Complex"
    double best_val_r2 = 0.0;
    double best_val_rmse = 0.0;
};

std::string dataset_processor(const std::string& dataset_id);

// Top N per processing method by best validation R^2 across models; ties by
// lower RMSE then dataset_id.
std::vector<DatasetRank> rank_datasets(const std::vector<EvalReport>& reports,
                                       std::size_t per_processor_top = 10);

struct SearchTrial {
    std::map<std::string, double> hyper;
    double objective = 0.0; // mean validation fold R^2
    bool failed = false;
};

struct SearchResult {
    std::map<std::string, double> best_hyper;
    double best_objective = 0.0;
    std::vector<SearchTrial> trials;
};

SearchResult random_search(ModelKind kind, const std::vector<HyperRange>& space, int budget,
                           const FeatureTable& table, const SplitPlan& plan,
                           std::size_t screen_top_k, std::uint64_t seed, int n_threads = 1);

}  // namespace chl
