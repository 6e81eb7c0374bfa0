#include "chl/models.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace chl {

using nlohmann::json;

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::LR: return "LR";
        case ModelKind::Ridge: return "Ridge";
        case ModelKind::ELN: return "ELN";
        case ModelKind::KNN: return "KNN";
        case ModelKind::RF: return "RF";
        case ModelKind::GBT: return "GBT";
        case ModelKind::MLP: return "MLP";
    }
    throw domain_error("bad model kind");
}

ModelKind model_kind_from_name(const std::string& name) {
    for (auto k : {ModelKind::LR, ModelKind::Ridge, ModelKind::ELN, ModelKind::KNN, ModelKind::RF,
                   ModelKind::GBT, ModelKind::MLP})
        if (model_kind_name(k) == name) return k;
    throw domain_error("unknown model kind: " + name);
}

Standardizer Standardizer::fit(const Matrix& X) {
    if (X.empty()) throw domain_error("cannot standardize an empty matrix");
    const std::size_t p = X[0].size();
    Standardizer s;
    s.mean.assign(p, 0.0);
    s.std_dev.assign(p, 1.0);
    for (const auto& row : X)
        for (std::size_t j = 0; j < p; ++j) s.mean[j] += row[j];
    for (auto& m : s.mean) m /= static_cast<double>(X.size());
    std::vector<double> var(p, 0.0);
    for (const auto& row : X)
        for (std::size_t j = 0; j < p; ++j) {
            const double d = row[j] - s.mean[j];
            var[j] += d * d;
        }
    for (std::size_t j = 0; j < p; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(X.size()));
        s.std_dev[j] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

std::vector<double> Standardizer::transform(const std::vector<double>& row) const {
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / std_dev[j];
    return out;
}

std::vector<double> Standardizer::inverse(const std::vector<double>& row) const {
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = row[j] * std_dev[j] + mean[j];
    return out;
}

namespace {

Eigen::MatrixXd to_eigen(const Matrix& X) {
    const auto n = static_cast<Eigen::Index>(X.size());
    const auto p = n > 0 ? static_cast<Eigen::Index>(X[0].size()) : 0;
    Eigen::MatrixXd M(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) M(i, j) = X[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return M;
}

Eigen::VectorXd to_eigen(const std::vector<double>& y) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(y.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = y[static_cast<std::size_t>(i)];
    return v;
}

// ---------------------------------------------------------------- linear ---

class LinearModel final : public Model {
  public:
    std::vector<double> coef;
    double intercept = 0.0;

    double predict_one(const std::vector<double>& x) const override {
        double s = intercept;
        for (std::size_t j = 0; j < coef.size(); ++j) s += coef[j] * x[j];
        return s;
    }

    json to_json() const override {
        return {{"type", "linear"}, {"coef", coef}, {"intercept", intercept}};
    }
};

// ------------------------------------------------------------------- knn ---

class KnnModel final : public Model {
  public:
    Matrix X;
    std::vector<double> y;
    int k = 5;

    double predict_one(const std::vector<double>& q) const override {
        const std::size_t n = X.size();
        std::vector<std::pair<double, std::size_t>> d(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) {
                const double diff = X[i][j] - q[j];
                s += diff * diff;
            }
            d[i] = {std::sqrt(s), i};
        }
        std::sort(d.begin(), d.end()); // ties at the k-th distance break by row index

        // Zero-distance short circuit: exact mean of coincident targets.
        if (d[0].first == 0.0) {
            double sum = 0.0;
            int count = 0;
            for (const auto& [dist, idx] : d) {
                if (dist != 0.0) break;
                sum += y[idx];
                ++count;
            }
            return sum / count;
        }

        double wsum = 0.0, vsum = 0.0;
        for (int i = 0; i < k && static_cast<std::size_t>(i) < n; ++i) {
            const double w = 1.0 / d[static_cast<std::size_t>(i)].first;
            wsum += w;
            vsum += w * y[d[static_cast<std::size_t>(i)].second];
        }
        return vsum / wsum;
    }

    json to_json() const override {
        return {{"type", "knn"}, {"k", k}, {"X", X}, {"y", y}};
    }
};

// ------------------------------------------------------------------ trees ---

struct TreeNode {
    int feature = -1; // -1 = leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

double tree_predict(const std::vector<TreeNode>& nodes, const std::vector<double>& x) {
    int cur = 0;
    while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
        const auto& nd = nodes[static_cast<std::size_t>(cur)];
        cur = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(cur)].value;
}

json tree_to_json(const std::vector<TreeNode>& nodes) {
    json arr = json::array();
    for (const auto& nd : nodes)
        arr.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.value});
    return arr;
}

std::vector<TreeNode> tree_from_json(const json& arr) {
    std::vector<TreeNode> nodes;
    for (const auto& e : arr) {
        TreeNode nd;
        nd.feature = e[0].get<int>();
        nd.threshold = e[1].get<double>();
        nd.left = e[2].get<int>();
        nd.right = e[3].get<int>();
        nd.value = e[4].get<double>();
        nodes.push_back(nd);
    }
    return nodes;
}

// Exact greedy variance-reduction splitter shared by RF trees.
struct VarianceTreeBuilder {
    const Matrix& X;
    const std::vector<double>& y;
    int max_depth;
    int min_samples_leaf;
    int max_features; // 0 = all
    Rng& rng;
    std::vector<TreeNode> nodes;

    int build(std::vector<std::size_t>& samples, int depth) {
        const int id = static_cast<int>(nodes.size());
        nodes.emplace_back();

        double sum = 0.0;
        for (auto i : samples) sum += y[i];
        const double mean = sum / static_cast<double>(samples.size());
        nodes[static_cast<std::size_t>(id)].value = mean;

        if (depth >= max_depth || samples.size() < 2 * static_cast<std::size_t>(min_samples_leaf) ||
            samples.size() < 2)
            return id;

        const int p = static_cast<int>(X[0].size());
        std::vector<int> feats(static_cast<std::size_t>(p));
        std::iota(feats.begin(), feats.end(), 0);
        int n_try = max_features > 0 ? std::min(max_features, p) : p;
        if (n_try < p) {
            rng.shuffle(feats);
            feats.resize(static_cast<std::size_t>(n_try));
            std::sort(feats.begin(), feats.end()); // evaluation order stays deterministic
        }

        double base_sq = 0.0;
        for (auto i : samples) base_sq += (y[i] - mean) * (y[i] - mean);

        int best_feat = -1;
        double best_score = 0.0, best_thr = 0.0;
        std::vector<std::pair<double, double>> vals(samples.size()); // (x, y)
        for (int f : feats) {
            for (std::size_t i = 0; i < samples.size(); ++i)
                vals[i] = {X[samples[i]][static_cast<std::size_t>(f)], y[samples[i]]};
            std::sort(vals.begin(), vals.end());
            double lsum = 0.0, lsq = 0.0;
            const double tsum = sum;
            double tsq = 0.0;
            for (const auto& [xv, yv] : vals) tsq += yv * yv;
            for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                lsum += vals[i].second;
                lsq += vals[i].second * vals[i].second;
                if (vals[i].first == vals[i + 1].first) continue;
                const auto nl = static_cast<double>(i + 1);
                const auto nr = static_cast<double>(vals.size() - i - 1);
                if (nl < min_samples_leaf || nr < min_samples_leaf) continue;
                const double rsum = tsum - lsum, rsq = tsq - lsq;
                // variance reduction = total SS - (left SS + right SS)
                const double score =
                    (tsq - tsum * tsum / (nl + nr)) -
                    ((lsq - lsum * lsum / nl) + (rsq - rsum * rsum / nr));
                if (score > best_score + 1e-15) {
                    best_score = score;
                    best_feat = f;
                    best_thr = 0.5 * (vals[i].first + vals[i + 1].first);
                }
            }
        }
        (void)base_sq;
        if (best_feat < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto i : samples)
            (X[i][static_cast<std::size_t>(best_feat)] <= best_thr ? left : right).push_back(i);
        if (left.empty() || right.empty()) return id;

        nodes[static_cast<std::size_t>(id)].feature = best_feat;
        nodes[static_cast<std::size_t>(id)].threshold = best_thr;
        const int l = build(left, depth + 1);
        nodes[static_cast<std::size_t>(id)].left = l;
        const int r = build(right, depth + 1);
        nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }
};

class ForestModel final : public Model {
  public:
    std::vector<std::vector<TreeNode>> trees;

    double predict_one(const std::vector<double>& x) const override {
        double s = 0.0;
        for (const auto& t : trees) s += tree_predict(t, x);
        return s / static_cast<double>(trees.size());
    }

    json to_json() const override {
        json arr = json::array();
        for (const auto& t : trees) arr.push_back(tree_to_json(t));
        return {{"type", "forest"}, {"trees", arr}};
    }
};

// Second-order boosted trees, squared-error loss (g = pred - y, h = 1).
struct GbtTreeBuilder {
    const Matrix& X;
    const std::vector<double>& grad;
    int max_depth;
    double lambda_l2;
    double gamma_min_gain;
    double min_child_weight;
    std::vector<TreeNode> nodes;

    int build(std::vector<std::size_t>& samples, int depth) {
        const int id = static_cast<int>(nodes.size());
        nodes.emplace_back();

        double g_sum = 0.0;
        for (auto i : samples) g_sum += grad[i];
        const double h_sum = static_cast<double>(samples.size());
        nodes[static_cast<std::size_t>(id)].value = -g_sum / (h_sum + lambda_l2);

        if (depth >= max_depth || samples.size() < 2) return id;

        const int p = static_cast<int>(X[0].size());
        int best_feat = -1;
        double best_gain = 0.0, best_thr = 0.0;
        std::vector<std::pair<double, double>> vals(samples.size()); // (x, g)
        const auto leaf_obj = [this](double g, double h) { return g * g / (h + lambda_l2); };
        for (int f = 0; f < p; ++f) {
            for (std::size_t i = 0; i < samples.size(); ++i)
                vals[i] = {X[samples[i]][static_cast<std::size_t>(f)], grad[samples[i]]};
            std::sort(vals.begin(), vals.end());
            double gl = 0.0;
            for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                gl += vals[i].second;
                if (vals[i].first == vals[i + 1].first) continue;
                const auto hl = static_cast<double>(i + 1);
                const auto hr = h_sum - hl;
                if (hl < min_child_weight || hr < min_child_weight) continue;
                const double gr = g_sum - gl;
                const double gain =
                    0.5 * (leaf_obj(gl, hl) + leaf_obj(gr, hr) - leaf_obj(g_sum, h_sum)) -
                    gamma_min_gain;
                if (gain > best_gain + 1e-15) {
                    best_gain = gain;
                    best_feat = f;
                    best_thr = 0.5 * (vals[i].first + vals[i + 1].first);
                }
            }
        }
        if (best_feat < 0 || best_gain <= 0.0) return id;

        std::vector<std::size_t> left, right;
        for (auto i : samples)
            (X[i][static_cast<std::size_t>(best_feat)] <= best_thr ? left : right).push_back(i);
        if (left.empty() || right.empty()) return id;

        nodes[static_cast<std::size_t>(id)].feature = best_feat;
        nodes[static_cast<std::size_t>(id)].threshold = best_thr;
        const int l = build(left, depth + 1);
        nodes[static_cast<std::size_t>(id)].left = l;
        const int r = build(right, depth + 1);
        nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }
};

class GbtModel final : public Model {
  public:
    double base_score = 0.0;
    double learning_rate = 0.1;
    std::vector<std::vector<TreeNode>> trees;

    double predict_one(const std::vector<double>& x) const override {
        double s = base_score;
        for (const auto& t : trees) s += learning_rate * tree_predict(t, x);
        return s;
    }

    json to_json() const override {
        json arr = json::array();
        for (const auto& t : trees) arr.push_back(tree_to_json(t));
        return {{"type", "gbt"},
                {"base_score", base_score},
                {"learning_rate", learning_rate},
                {"trees", arr}};
    }
};

// ------------------------------------------------------------------- mlp ---

class MlpModel final : public Model {
  public:
    mlp_detail::Network net;

    double predict_one(const std::vector<double>& x) const override { return net.forward(x); }

    json to_json() const override {
        return {{"type", "mlp"},
                {"layer_sizes", net.layer_sizes},
                {"relu", net.relu},
                {"weights", net.weights},
                {"biases", net.biases}};
    }
};

std::shared_ptr<Model> model_from_json(const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "linear") {
        auto m = std::make_shared<LinearModel>();
        m->coef = j.at("coef").get<std::vector<double>>();
        m->intercept = j.at("intercept").get<double>();
        return m;
    }
    if (type == "knn") {
        auto m = std::make_shared<KnnModel>();
        m->k = j.at("k").get<int>();
        m->X = j.at("X").get<Matrix>();
        m->y = j.at("y").get<std::vector<double>>();
        return m;
    }
    if (type == "forest") {
        auto m = std::make_shared<ForestModel>();
        for (const auto& t : j.at("trees")) m->trees.push_back(tree_from_json(t));
        return m;
    }
    if (type == "gbt") {
        auto m = std::make_shared<GbtModel>();
        m->base_score = j.at("base_score").get<double>();
        m->learning_rate = j.at("learning_rate").get<double>();
        for (const auto& t : j.at("trees")) m->trees.push_back(tree_from_json(t));
        return m;
    }
    if (type == "mlp") {
        auto m = std::make_shared<MlpModel>();
        m->net.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        m->net.relu = j.at("relu").get<bool>();
        m->net.weights = j.at("weights").get<std::vector<std::vector<double>>>();
        m->net.biases = j.at("biases").get<std::vector<std::vector<double>>>();
        return m;
    }
    throw format_error("unknown model payload type: " + type);
}

}  // namespace

// --------------------------------------------------------------- fitting ---

TrainedModel fit_linear(const Matrix& X, const std::vector<double>& y) {
    if (X.size() != y.size() || X.empty()) throw domain_error("fit_linear: bad shapes");
    const auto n = static_cast<Eigen::Index>(X.size());
    const auto p = static_cast<Eigen::Index>(X[0].size());
    Eigen::MatrixXd A(n, p + 1);
    A.col(0).setOnes();
    A.rightCols(p) = to_eigen(X);
    const Eigen::VectorXd b = to_eigen(y);

    // Complete orthogonal decomposition: stable, minimum-norm on rank
    // deficiency.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    const Eigen::VectorXd beta = cod.solve(b);

    auto impl = std::make_shared<LinearModel>();
    impl->intercept = beta(0);
    impl->coef.resize(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) impl->coef[static_cast<std::size_t>(j)] = beta(j + 1);

    TrainedModel m;
    m.spec.kind = ModelKind::LR;
    m.impl = impl;
    m.rank_deficient = cod.rank() < p + 1;
    return m;
}

TrainedModel fit_ridge(const Matrix& X, const std::vector<double>& y, double lambda_l2) {
    if (lambda_l2 < 0) throw domain_error("ridge penalty must be non-negative");
    const auto n = static_cast<Eigen::Index>(X.size());
    const auto p = static_cast<Eigen::Index>(X[0].size());
    Eigen::MatrixXd M = to_eigen(X);
    Eigen::VectorXd b = to_eigen(y);
    const Eigen::RowVectorXd x_mean = M.colwise().mean();
    const double y_mean = b.mean();
    M.rowwise() -= x_mean;
    b.array() -= y_mean;

    const Eigen::MatrixXd G =
        M.transpose() * M + lambda_l2 * Eigen::MatrixXd::Identity(p, p);
    const Eigen::VectorXd beta = G.ldlt().solve(M.transpose() * b);

    auto impl = std::make_shared<LinearModel>();
    impl->coef.resize(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) impl->coef[static_cast<std::size_t>(j)] = beta(j);
    impl->intercept = y_mean - x_mean.dot(beta);

    TrainedModel m;
    m.spec.kind = ModelKind::Ridge;
    m.spec.hyper["lambda_l2"] = lambda_l2;
    m.impl = impl;
    (void)n;
    return m;
}

TrainedModel fit_elastic_net(const Matrix& X, const std::vector<double>& y, double alpha,
                             double l1_ratio, int max_iter, double tol) {
    if (alpha < 0 || l1_ratio < 0 || l1_ratio > 1)
        throw domain_error("elastic net: bad penalty configuration");
    const std::size_t n = X.size();
    const std::size_t p = n > 0 ? X[0].size() : 0;
    if (n == 0 || n != y.size()) throw domain_error("fit_elastic_net: bad shapes");

    // Center so the intercept stays unpenalized.
    std::vector<double> x_mean(p, 0.0);
    double y_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        y_mean += y[i];
        for (std::size_t j = 0; j < p; ++j) x_mean[j] += X[i][j];
    }
    y_mean /= static_cast<double>(n);
    for (auto& m : x_mean) m /= static_cast<double>(n);

    Matrix Xc(n, std::vector<double>(p));
    std::vector<double> r(n); // residual y - X beta (centered)
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = y[i] - y_mean;
        for (std::size_t j = 0; j < p; ++j) Xc[i][j] = X[i][j] - x_mean[j];
    }

    std::vector<double> col_sq(p, 0.0);
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < n; ++i) col_sq[j] += Xc[i][j] * Xc[i][j];

    const double nd = static_cast<double>(n);
    const double l1 = alpha * l1_ratio;
    const double l2 = alpha * (1.0 - l1_ratio);

    std::vector<double> beta(p, 0.0);
    bool converged = false;
    for (int it = 0; it < max_iter && !converged; ++it) {
        double max_update = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            if (col_sq[j] == 0.0) continue;
            double rho = 0.0; // (1/n) x_j . (r + x_j beta_j)
            for (std::size_t i = 0; i < n; ++i) rho += Xc[i][j] * r[i];
            rho = rho / nd + col_sq[j] / nd * beta[j];

            const double denom = col_sq[j] / nd + l2;
            double nb;
            if (rho > l1)
                nb = (rho - l1) / denom;
            else if (rho < -l1)
                nb = (rho + l1) / denom;
            else
                nb = 0.0;

            const double delta = nb - beta[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < n; ++i) r[i] -= delta * Xc[i][j];
                beta[j] = nb;
            }
            max_update = std::max(max_update, std::abs(delta));
        }
        converged = max_update < tol;
    }

    auto impl = std::make_shared<LinearModel>();
    impl->coef = beta;
    double dot = 0.0;
    for (std::size_t j = 0; j < p; ++j) dot += x_mean[j] * beta[j];
    impl->intercept = y_mean - dot;

    TrainedModel m;
    m.spec.kind = ModelKind::ELN;
    m.spec.hyper = {{"alpha", alpha}, {"l1_ratio", l1_ratio}};
    m.impl = impl;
    m.converged = converged;
    return m;
}

TrainedModel fit_knn(const Matrix& X, const std::vector<double>& y, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > X.size())
        throw domain_error("knn: k out of range");
    auto impl = std::make_shared<KnnModel>();
    impl->X = X;
    impl->y = y;
    impl->k = k;
    TrainedModel m;
    m.spec.kind = ModelKind::KNN;
    m.spec.hyper["k"] = k;
    m.impl = impl;
    return m;
}

TrainedModel fit_random_forest(const Matrix& X, const std::vector<double>& y, int n_trees,
                               int max_depth, int min_samples_leaf, int max_features,
                               std::uint64_t seed, int n_threads) {
    if (n_trees < 1) throw domain_error("random forest needs at least one tree");
    const std::size_t n = X.size();
    auto impl = std::make_shared<ForestModel>();
    impl->trees.resize(static_cast<std::size_t>(n_trees));

    parallel_for(static_cast<std::size_t>(n_trees), n_threads, [&](std::size_t t) {
        Rng rng(derive_seed(seed, "tree" + std::to_string(t)));
        std::vector<std::size_t> sample(n);
        for (auto& s : sample) s = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        VarianceTreeBuilder builder{X, y, max_depth, min_samples_leaf, max_features, rng, {}};
        builder.build(sample, 0);
        impl->trees[t] = std::move(builder.nodes);
    });

    TrainedModel m;
    m.spec.kind = ModelKind::RF;
    m.spec.hyper = {{"n_trees", static_cast<double>(n_trees)},
                    {"max_depth", static_cast<double>(max_depth)},
                    {"min_samples_leaf", static_cast<double>(min_samples_leaf)},
                    {"max_features", static_cast<double>(max_features)}};
    m.spec.seed = seed;
    m.impl = impl;
    return m;
}

TrainedModel fit_gbt(const Matrix& X, const std::vector<double>& y, int n_rounds,
                     double learning_rate, int max_depth, double lambda_l2,
                     double gamma_min_gain, double min_child_weight, std::uint64_t seed) {
    const std::size_t n = X.size();
    auto impl = std::make_shared<GbtModel>();
    impl->learning_rate = learning_rate;
    impl->base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

    std::vector<double> pred(n, impl->base_score);
    std::vector<double> grad(n);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);

    for (int round = 0; round < n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - y[i];
        GbtTreeBuilder builder{X, grad, max_depth, lambda_l2, gamma_min_gain, min_child_weight, {}};
        auto samples = all;
        builder.build(samples, 0);
        for (std::size_t i = 0; i < n; ++i)
            pred[i] += learning_rate * tree_predict(builder.nodes, X[i]);
        impl->trees.push_back(std::move(builder.nodes));
    }

    TrainedModel m;
    m.spec.kind = ModelKind::GBT;
    m.spec.hyper = {{"n_rounds", static_cast<double>(n_rounds)},
                    {"learning_rate", learning_rate},
                    {"max_depth", static_cast<double>(max_depth)},
                    {"lambda_l2", lambda_l2},
                    {"gamma_min_gain", gamma_min_gain},
                    {"min_child_weight", min_child_weight}};
    m.spec.seed = seed;
    m.impl = impl;
    return m;
}

// ------------------------------------------------------------ mlp detail ---

namespace mlp_detail {

void Network::init(const std::vector<int>& sizes, bool relu_act, Rng& rng) {
    layer_sizes = sizes;
    relu = relu_act;
    weights.clear();
    biases.clear();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l], fan_out = sizes[l + 1];
        const double scale = std::sqrt(2.0 / (fan_in + fan_out));
        std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
        for (auto& x : w) x = rng.normal() * scale;
        weights.push_back(std::move(w));
        biases.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
    }
}

namespace {
double act(double z, bool relu) { return relu ? std::max(0.0, z) : std::tanh(z); }
double act_grad(double z, bool relu) {
    if (relu) return z > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(z);
    return 1.0 - t * t;
}
}  // namespace

double Network::forward(const std::vector<double>& x) const {
    std::vector<double> a = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const int in = layer_sizes[l], out = layer_sizes[l + 1];
        std::vector<double> z(static_cast<std::size_t>(out));
        for (int o = 0; o < out; ++o) {
            double s = biases[l][static_cast<std::size_t>(o)];
            for (int i = 0; i < in; ++i)
                s += weights[l][static_cast<std::size_t>(o) * in + i] * a[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(o)] = s;
        }
        const bool last = l + 1 == weights.size();
        if (!last)
            for (auto& v : z) v = act(v, relu);
        a = std::move(z);
    }
    return a[0];
}

double Network::loss_and_gradients(const Matrix& X, const std::vector<double>& y,
                                   const std::vector<std::size_t>& batch,
                                   std::vector<std::vector<double>>& grad_w,
                                   std::vector<std::vector<double>>& grad_b) const {
    grad_w.clear();
    grad_b.clear();
    for (std::size_t l = 0; l < weights.size(); ++l) {
        grad_w.emplace_back(weights[l].size(), 0.0);
        grad_b.emplace_back(biases[l].size(), 0.0);
    }
    double loss = 0.0;
    const double inv_m = 1.0 / static_cast<double>(batch.size());

    for (auto idx : batch) {
        // forward with stored pre-activations
        std::vector<std::vector<double>> acts{X[idx]};
        std::vector<std::vector<double>> zs;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            const int in = layer_sizes[l], out = layer_sizes[l + 1];
            std::vector<double> z(static_cast<std::size_t>(out));
            for (int o = 0; o < out; ++o) {
                double s = biases[l][static_cast<std::size_t>(o)];
                for (int i = 0; i < in; ++i)
                    s += weights[l][static_cast<std::size_t>(o) * in + i] *
                         acts.back()[static_cast<std::size_t>(i)];
                z[static_cast<std::size_t>(o)] = s;
            }
            zs.push_back(z);
            const bool last = l + 1 == weights.size();
            if (!last)
                for (auto& v : z) v = act(v, relu);
            acts.push_back(std::move(z));
        }
        const double err = acts.back()[0] - y[idx];
        loss += 0.5 * err * err * inv_m;

        // backward
        std::vector<double> delta{err * inv_m};
        for (std::size_t li = weights.size(); li-- > 0;) {
            const int in = layer_sizes[li], out = layer_sizes[li + 1];
            for (int o = 0; o < out; ++o) {
                grad_b[li][static_cast<std::size_t>(o)] += delta[static_cast<std::size_t>(o)];
                for (int i = 0; i < in; ++i)
                    grad_w[li][static_cast<std::size_t>(o) * in + i] +=
                        delta[static_cast<std::size_t>(o)] * acts[li][static_cast<std::size_t>(i)];
            }
            if (li == 0) break;
            std::vector<double> prev(static_cast<std::size_t>(in), 0.0);
            for (int i = 0; i < in; ++i) {
                double s = 0.0;
                for (int o = 0; o < out; ++o)
                    s += weights[li][static_cast<std::size_t>(o) * in + i] *
                         delta[static_cast<std::size_t>(o)];
                prev[static_cast<std::size_t>(i)] =
                    s * act_grad(zs[li - 1][static_cast<std::size_t>(i)], relu);
            }
            delta = std::move(prev);
        }
    }
    return loss;
}

double Network::batch_loss(const Matrix& X, const std::vector<double>& y,
                           const std::vector<std::size_t>& batch) const {
    double loss = 0.0;
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    for (auto idx : batch) {
        const double err = forward(X[idx]) - y[idx];
        loss += 0.5 * err * err * inv_m;
    }
    return loss;
}

}  // namespace mlp_detail

TrainedModel fit_mlp(const Matrix& X, const std::vector<double>& y,
                     const std::vector<int>& hidden_layers, const std::string& activation,
                     double lr, int epochs, int batch_size, std::uint64_t seed) {
    if (activation != "relu" && activation != "tanh")
        throw domain_error("mlp: unknown activation " + activation);
    const std::size_t n = X.size();
    const int p = static_cast<int>(X[0].size());

    std::vector<int> sizes{p};
    for (int h : hidden_layers)
        if (h > 0) sizes.push_back(h);
    sizes.push_back(1);

    Rng rng(seed);
    auto impl = std::make_shared<MlpModel>();
    impl->net.init(sizes, activation == "relu", rng);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const double initial_loss = impl->net.batch_loss(X, y, order) + 1e-12;

    std::vector<std::vector<double>> gw, gb;
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
            std::vector<std::size_t> batch(
                order.begin() + static_cast<std::ptrdiff_t>(start),
                order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
            impl->net.loss_and_gradients(X, y, batch, gw, gb);
            for (std::size_t l = 0; l < impl->net.weights.size(); ++l) {
                for (std::size_t i = 0; i < gw[l].size(); ++i)
                    impl->net.weights[l][i] -= lr * gw[l][i];
                for (std::size_t i = 0; i < gb[l].size(); ++i)
                    impl->net.biases[l][i] -= lr * gb[l][i];
            }
        }
        const double loss = impl->net.batch_loss(X, y, order);
        if (!std::isfinite(loss) || loss > 1e6 * initial_loss)
            throw domain_error("mlp training diverged at epoch " + std::to_string(e) +
                               " (loss " + std::to_string(loss) + ")");
    }

    TrainedModel m;
    m.spec.kind = ModelKind::MLP;
    m.spec.hyper = {{"lr", lr},
                    {"epochs", static_cast<double>(epochs)},
                    {"batch_size", static_cast<double>(batch_size)},
                    {"activation", activation == "relu" ? 0.0 : 1.0}};
    m.spec.seed = seed;
    m.impl = impl;
    return m;
}

// --------------------------------------------------------------- predict ---

std::vector<double> TrainedModel::predict(const Matrix& X) const {
    if (!impl) throw contract_error("model has no implementation");
    std::vector<double> out;
    out.reserve(X.size());
    for (const auto& row : X) {
        if (row.size() != feature_names.size() && !feature_names.empty())
            throw contract_error("feature count mismatch in predict");
        out.push_back(scaler ? impl->predict_one(scaler->transform(row))
                             : impl->predict_one(row));
    }
    return out;
}

std::vector<double> TrainedModel::predict_named(const Matrix& X,
                                                const std::vector<std::string>& columns) const {
    std::vector<std::size_t> index_map;
    index_map.reserve(feature_names.size());
    for (const auto& f : feature_names) {
        const auto it = std::find(columns.begin(), columns.end(), f);
        if (it == columns.end()) throw contract_error("missing feature in input: " + f);
        index_map.push_back(static_cast<std::size_t>(it - columns.begin()));
    }
    Matrix aligned(X.size(), std::vector<double>(feature_names.size()));
    for (std::size_t i = 0; i < X.size(); ++i)
        for (std::size_t j = 0; j < index_map.size(); ++j) aligned[i][j] = X[i][index_map[j]];
    return predict(aligned);
}

// ----------------------------------------------------------- persistence ---

json save_model(const TrainedModel& model) {
    json j;
    j["format_version"] = 1;
    j["spec"] = {{"kind", model_kind_name(model.spec.kind)},
                 {"hyper", model.spec.hyper},
                 {"seed", model.spec.seed}};
    j["feature_names"] = model.feature_names;
    j["rank_deficient"] = model.rank_deficient;
    j["converged"] = model.converged;
    if (model.scaler)
        j["scaler"] = {{"mean", model.scaler->mean}, {"std", model.scaler->std_dev}};
    j["impl"] = model.impl->to_json();
    return j;
}

TrainedModel load_model(const json& j) {
    if (j.value("format_version", 0) != 1) throw format_error("unsupported model format version");
    TrainedModel m;
    m.spec.kind = model_kind_from_name(j.at("spec").at("kind").get<std::string>());
    m.spec.hyper = j.at("spec").at("hyper").get<std::map<std::string, double>>();
    m.spec.seed = j.at("spec").at("seed").get<std::uint64_t>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.rank_deficient = j.value("rank_deficient", false);
    m.converged = j.value("converged", true);
    if (j.contains("scaler")) {
        Standardizer s;
        s.mean = j.at("scaler").at("mean").get<std::vector<double>>();
        s.std_dev = j.at("scaler").at("std").get<std::vector<double>>();
        m.scaler = std::move(s);
    }
    m.impl = model_from_json(j.at("impl"));
    return m;
}

void save_model_file(const TrainedModel& model, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << save_model(model).dump(2) << '\n';
}

TrainedModel load_model_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open: " + path);
    json j;
    is >> j;
    return load_model(j);
}

// ------------------------------------------------------- configurations ---

std::map<std::string, double> default_hyperparameters(ModelKind kind) {
    switch (kind) {
        case ModelKind::LR: return {};
        case ModelKind::Ridge: return {{"lambda_l2", 1.0}};
        case ModelKind::ELN: return {{"alpha", 1.0}, {"l1_ratio", 0.5}};
        case ModelKind::KNN: return {{"k", 5}};
        case ModelKind::RF:
            return {{"n_trees", 200}, {"max_depth", 10}, {"min_samples_leaf", 1},
                    {"max_features", 0}};
        case ModelKind::GBT:
            return {{"n_rounds", 200},      {"learning_rate", 0.1}, {"max_depth", 4},
                    {"lambda_l2", 1.0},     {"gamma_min_gain", 0.0}, {"min_child_weight", 1.0}};
        case ModelKind::MLP:
            return {{"h1", 32}, {"h2", 0}, {"activation", 0.0}, {"lr", 0.01},
                    {"epochs", 200}, {"batch_size", 16}};
    }
    throw domain_error("bad model kind");
}

std::vector<HyperRange> default_search_space(ModelKind kind) {
    switch (kind) {
        case ModelKind::LR: return {};
        case ModelKind::Ridge: return {{"lambda_l2", 1e-4, 10, true, false}};
        case ModelKind::ELN:
            return {{"alpha", 1e-4, 10, true, false}, {"l1_ratio", 0, 1, false, false}};
        case ModelKind::KNN: return {{"k", 1, 15, false, true}};
        case ModelKind::RF:
            return {{"n_trees", 100, 500, false, true}, {"max_depth", 2, 12, false, true}};
        case ModelKind::GBT:
            return {{"n_rounds", 50, 500, false, true},
                    {"learning_rate", 0.01, 0.3, true, false},
                    {"max_depth", 2, 8, false, true},
                    {"lambda_l2", 0, 10, false, false}};
        case ModelKind::MLP:
            return {{"h1", 8, 64, false, true}, {"h2", 0, 64, false, true}};
    }
    throw domain_error("bad model kind");
}

TrainedModel fit_model(const ModelSpec& spec, const Matrix& X, const std::vector<double>& y,
                       const std::vector<std::string>& feature_names, int n_threads) {
    ModelSpec s = spec;
    for (const auto& [name, value] : default_hyperparameters(spec.kind))
        s.hyper.emplace(name, value);

    std::optional<Standardizer> scaler;
    Matrix Xs = X;
    if (s.needs_scaling()) {
        scaler = Standardizer::fit(X);
        for (auto& row : Xs) row = scaler->transform(row);
    }

    TrainedModel m;
    switch (s.kind) {
        case ModelKind::LR: m = fit_linear(Xs, y); break;
        case ModelKind::Ridge: m = fit_ridge(Xs, y, s.get("lambda_l2", 1.0)); break;
        case ModelKind::ELN:
            m = fit_elastic_net(Xs, y, s.get("alpha", 1.0), s.get("l1_ratio", 0.5),
                                static_cast<int>(s.get("max_iter", 1000)), s.get("tol", 1e-8));
            break;
        case ModelKind::KNN: {
            const int k = std::min<int>(static_cast<int>(s.get("k", 5)),
                                        static_cast<int>(Xs.size()));
            m = fit_knn(Xs, y, std::max(1, k));
            break;
        }
        case ModelKind::RF:
            m = fit_random_forest(Xs, y, static_cast<int>(s.get("n_trees", 200)),
                                  static_cast<int>(s.get("max_depth", 10)),
                                  static_cast<int>(s.get("min_samples_leaf", 1)),
                                  static_cast<int>(s.get("max_features", 0)), s.seed, n_threads);
            break;
        case ModelKind::GBT:
            m = fit_gbt(Xs, y, static_cast<int>(s.get("n_rounds", 200)),
                        s.get("learning_rate", 0.1), static_cast<int>(s.get("max_depth", 4)),
                        s.get("lambda_l2", 1.0), s.get("gamma_min_gain", 0.0),
                        s.get("min_child_weight", 1.0), s.seed);
            break;
        case ModelKind::MLP: {
            std::vector<int> hidden;
            if (s.get("h1", 0) > 0) hidden.push_back(static_cast<int>(s.get("h1", 0)));
            if (s.get("h2", 0) > 0) hidden.push_back(static_cast<int>(s.get("h2", 0)));
            m = fit_mlp(Xs, y, hidden, s.get("activation", 0.0) == 0.0 ? "relu" : "tanh",
                        s.get("lr", 0.01), static_cast<int>(s.get("epochs", 200)),
                        static_cast<int>(s.get("batch_size", 16)), s.seed);
            break;
        }
    }
    m.spec = s;
    m.feature_names = feature_names;
    m.scaler = std::move(scaler);
    return m;
}

}  // namespace chl
