#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chl/util.hpp"

namespace chl {

enum class ModelKind { LR, Ridge, ELN, KNN, RF, GBT, MLP };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ModelSpec {
    ModelKind kind = ModelKind::LR;
    std::map<std::string, double> hyper; // per-kind, defaults filled at fit time
    std::uint64_t seed = 0;

    bool needs_scaling() const {
        return kind == ModelKind::KNN || kind == ModelKind::MLP || kind == ModelKind::ELN ||
               kind == ModelKind::Ridge || kind == ModelKind::LR;
    }
    double get(const std::string& name, double dflt) const {
        auto it = hyper.find(name);
        return it == hyper.end() ? dflt : it->second;
    }
};

// Train-fold standardization; zero-variance features pass through (std 1).
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std_dev;

    static Standardizer fit(const std::vector<std::vector<double>>& X);
    std::vector<double> transform(const std::vector<double>& row) const;
    std::vector<double> inverse(const std::vector<double>& row) const;
};

using Matrix = std::vector<std::vector<double>>; // row-major

class Model {
  public:
    virtual ~Model() = default;
    virtual double predict_one(const std::vector<double>& x) const = 0;
    virtual nlohmann::json to_json() const = 0;
};

struct TrainedModel {
    ModelSpec spec;
    std::vector<std::string> feature_names;
    std::optional<Standardizer> scaler;
    std::shared_ptr<const Model> impl;
    bool rank_deficient = false;
    bool converged = true;

    // X columns must already match feature_names in order.
    std::vector<double> predict(const Matrix& X) const;
    // Name-based column alignment; missing feature -> contract_error.
    std::vector<double> predict_named(const Matrix& X,
                                      const std::vector<std::string>& columns) const;
};

TrainedModel fit_linear(const Matrix& X, const std::vector<double>& y);
TrainedModel fit_ridge(const Matrix& X, const std::vector<double>& y, double lambda_l2);
TrainedModel fit_elastic_net(const Matrix& X, const std::vector<double>& y, double alpha,
                             double l1_ratio, int max_iter = 1000, double tol = 1e-8);
TrainedModel fit_knn(const Matrix& X, const std::vector<double>& y, int k);
TrainedModel fit_random_forest(const Matrix& X, const std::vector<double>& y, int n_trees,
                               int max_depth, int min_samples_leaf, int max_features,
                               std::uint64_t seed, int n_threads = 1);
TrainedModel fit_gbt(const Matrix& X, const std::vector<double>& y, int n_rounds,
                     double learning_rate, int max_depth, double lambda_l2,
                     double gamma_min_gain, double min_child_weight, std::uint64_t seed);
TrainedModel fit_mlp(const Matrix& X, const std::vector<double>& y,
                     const std::vector<int>& hidden_layers, const std::string& activation,
                     double lr, int epochs, int batch_size, std::uint64_t seed);

// Uniform entry point: standardizes when the kind requires it, fills
// hyperparameter defaults, dispatches.
TrainedModel fit_model(const ModelSpec& spec, const Matrix& X, const std::vector<double>& y,
                       const std::vector<std::string>& feature_names, int n_threads = 1);

nlohmann::json save_model(const TrainedModel& model);
TrainedModel load_model(const nlohmann::json& j);
void save_model_file(const TrainedModel& model, const std::string& path);
TrainedModel load_model_file(const std::string& path);

// Default hyperparameters per kind (the preliminary-stage configuration).
std::map<std::string, double> default_hyperparameters(ModelKind kind);

// Random-search sampling ranges per kind.
struct HyperRange {
    std::string name;
    double lo = 0, hi = 0;
    bool log_scale = false;
    bool integer = false;
};
std::vector<HyperRange> default_search_space(ModelKind kind);

// MLP internals exposed for the finite-difference gradient check.
namespace mlp_detail {
struct Network {
    std::vector<int> layer_sizes; // input, hidden..., 1
    bool relu = true;
    std::vector<std::vector<double>> weights; // per layer, row-major (out x in)
    std::vector<std::vector<double>> biases;

    void init(const std::vector<int>& sizes, bool relu_act, Rng& rng);
    double forward(const std::vector<double>& x) const;
    // Mean squared error over the batch and gradients; returns the loss.
    double loss_and_gradients(const Matrix& X, const std::vector<double>& y,
                              const std::vector<std::size_t>& batch,
                              std::vector<std::vector<double>>& grad_w,
                              std::vector<std::vector<double>>& grad_b) const;
    double batch_loss(const Matrix& X, const std::vector<double>& y,
                      const std::vector<std::size_t>& batch) const;
};
}  // namespace mlp_detail

}  // namespace chl
