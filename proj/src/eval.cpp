#include "chl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace chl {

using nlohmann::json;

std::vector<bool> label_high_chl(const std::vector<double>& y, double threshold) {
    std::vector<bool> labels(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(y[i]) || y[i] < 0)
            throw domain_error("chl targets must be finite and non-negative");
        labels[i] = y[i] > threshold;
    }
    return labels;
}

double threshold_quantile(const std::vector<double>& y, double threshold) {
    if (y.empty()) return 0.0;
    std::size_t below = 0;
    for (double v : y)
        if (v <= threshold) ++below;
    return static_cast<double>(below) / static_cast<double>(y.size());
}

namespace {

// Row indices grouped by class, classes in a fixed order (false, true).
std::vector<std::vector<std::size_t>> by_class(const std::vector<bool>& labels) {
    std::vector<std::vector<std::size_t>> groups(2);
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i] ? 1 : 0].push_back(i);
    return groups;
}

}  // namespace

std::vector<std::size_t> stratified_split(const std::vector<bool>& labels, double test_fraction,
                                          std::uint64_t seed) {
    if (test_fraction < 0 || test_fraction > 1) throw domain_error("bad test fraction");
    const std::size_t n = labels.size();
    const auto total_test =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

    auto groups = by_class(labels);
    Rng rng(seed);
    for (auto& g : groups) rng.shuffle(g);

    // Largest-remainder quota per class: totals match exactly, each class
    // proportional within one row.
    std::vector<std::size_t> quota(groups.size(), 0);
    std::vector<std::pair<double, std::size_t>> rema; // (-remainder, class)
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < groups.size(); ++c) {
        const double exact = test_fraction * static_cast<double>(groups[c].size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        quota[c] = std::min(quota[c], groups[c].size());
        assigned += quota[c];
        rema.push_back({-(exact - std::floor(exact)), c});
    }
    std::sort(rema.begin(), rema.end());
    for (const auto& [neg_r, c] : rema) {
        if (assigned >= total_test) break;
        if (quota[c] < groups[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    std::vector<std::size_t> test;
    for (std::size_t c = 0; c < groups.size(); ++c)
        test.insert(test.end(), groups[c].begin(),
                    groups[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
    std::sort(test.begin(), test.end());
    return test;
}

std::vector<int> stratified_kfold(const std::vector<bool>& labels, int k, std::uint64_t seed) {
    if (k < 2 || static_cast<std::size_t>(k) > labels.size())
        throw domain_error("k out of range for kfold");
    std::vector<int> fold(labels.size(), -1);
    auto groups = by_class(labels);
    Rng rng(seed);
    // Running offset across classes keeps overall fold sizes within one row.
    int offset = 0;
    for (auto& g : groups) {
        rng.shuffle(g);
        for (std::size_t i = 0; i < g.size(); ++i)
            fold[g[i]] = (offset + static_cast<int>(i)) % k;
        offset = (offset + static_cast<int>(g.size())) % k;
    }
    return fold;
}

SplitPlan make_split_plan(const std::vector<double>& y, double test_fraction, int k,
                          std::uint64_t seed, double threshold) {
    SplitPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.labels = label_high_chl(y, threshold);
    plan.test_rows = stratified_split(plan.labels, test_fraction, derive_seed(seed, "split"));

    std::vector<bool> in_test(y.size(), false);
    for (auto r : plan.test_rows) in_test[r] = true;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (!in_test[i]) plan.train_rows.push_back(i);

    std::vector<bool> train_labels;
    train_labels.reserve(plan.train_rows.size());
    for (auto r : plan.train_rows) train_labels.push_back(plan.labels[r]);
    plan.fold_of_train = stratified_kfold(train_labels, k, derive_seed(seed, "kfold"));
    return plan;
}

double rmse(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.size() != yhat.size() || y.empty()) throw domain_error("rmse: bad shapes");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - yhat[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(y.size()));
}

double r2(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.size() != yhat.size() || y.size() < 2) throw domain_error("r2: bad shapes");
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    if (ss_tot == 0.0) throw domain_error("r2 undefined: zero-variance targets");
    return 1.0 - ss_res / ss_tot;
}

json EvalReport::to_json() const {
    json jf = json::array();
    for (const auto& f : folds) jf.push_back({{"r2", f.r2}, {"rmse", f.rmse}});
    return {{"dataset_id", dataset_id},
            {"model_label", model_label},
            {"kind", model_kind_name(kind)},
            {"folds", jf},
            {"val_r2", val_r2},
            {"val_rmse", val_rmse},
            {"mean_fold_r2", mean_fold_r2},
            {"test_r2", test_r2},
            {"test_rmse", test_rmse},
            {"hyper", hyper},
            {"seed", seed},
            {"high_quantile", high_quantile},
            {"dropped_rows", dropped_rows},
            {"failed", failed},
            {"fail_reason", fail_reason}};
}

EvalReport EvalReport::from_json(const json& j) {
    EvalReport r;
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.model_label = j.at("model_label").get<std::string>();
    r.kind = model_kind_from_name(j.at("kind").get<std::string>());
    for (const auto& f : j.at("folds"))
        r.folds.push_back({f.at("r2").get<double>(), f.at("rmse").get<double>()});
    r.val_r2 = j.at("val_r2").get<double>();
    r.val_rmse = j.at("val_rmse").get<double>();
    r.mean_fold_r2 = j.at("mean_fold_r2").get<double>();
    r.test_r2 = j.at("test_r2").get<double>();
    r.test_rmse = j.at("test_rmse").get<double>();
    r.hyper = j.at("hyper").get<std::map<std::string, double>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.high_quantile = j.at("high_quantile").get<double>();
    r.dropped_rows = j.at("dropped_rows").get<std::size_t>();
    r.failed = j.at("failed").get<bool>();
    r.fail_reason = j.at("fail_reason").get<std::string>();
    return r;
}

namespace {

Matrix gather(const FeatureTable& table, const std::vector<std::size_t>& rows,
              const std::vector<int>& cols) {
    Matrix X(rows.size(), std::vector<double>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            X[i][j] = table.values[rows[i]][static_cast<std::size_t>(cols[j])];
    return X;
}

std::vector<double> gather_y(const FeatureTable& table, const std::vector<std::size_t>& rows) {
    std::vector<double> y;
    y.reserve(rows.size());
    for (auto r : rows) y.push_back(table.target[r]);
    return y;
}

std::vector<int> column_indices(const FeatureTable& table, const std::vector<std::string>& names) {
    std::vector<int> idx;
    idx.reserve(names.size());
    for (const auto& n : names) idx.push_back(table.column_index(n));
    return idx;
}

}  // namespace

CvResult cross_validate(const ModelSpec& spec, const FeatureTable& table, const SplitPlan& plan,
                        std::size_t screen_top_k, int n_threads) {
    if (!table.has_target) throw contract_error("cross_validate needs a target column");
    CvResult out;
    out.report.dataset_id = table.dataset_id;
    out.report.kind = spec.kind;
    out.report.model_label = model_kind_name(spec.kind);
    out.report.hyper = spec.hyper;
    out.report.seed = spec.seed;
    out.report.dropped_rows = table.dropped_rows;
    out.report.high_quantile = threshold_quantile(gather_y(table, plan.train_rows),
                                                  kHighChlThreshold);

    const std::size_t n_train = plan.train_rows.size();
    const std::size_t n_test = plan.test_rows.size();
    out.oof.assign(n_train, 0.0);
    out.fold_test_preds.assign(static_cast<std::size_t>(plan.k),
                               std::vector<double>(n_test, 0.0));

    try {
        for (int f = 0; f < plan.k; ++f) {
            std::vector<std::size_t> fit_rows, val_rows, val_pos;
            for (std::size_t i = 0; i < n_train; ++i) {
                if (plan.fold_of_train[i] == f) {
                    val_rows.push_back(plan.train_rows[i]);
                    val_pos.push_back(i);
                } else {
                    fit_rows.push_back(plan.train_rows[i]);
                }
            }
            // Screening and scaling see this fold's training rows only.
            const auto retained = screen_features(table, fit_rows, screen_top_k);
            const auto cols = column_indices(table, retained);

            ModelSpec fold_spec = spec;
            fold_spec.seed = derive_seed(spec.seed, "fold" + std::to_string(f));
            auto model = fit_model(fold_spec, gather(table, fit_rows, cols),
                                   gather_y(table, fit_rows), retained, n_threads);

            const auto val_pred = model.predict(gather(table, val_rows, cols));
            for (std::size_t i = 0; i < val_pos.size(); ++i) out.oof[val_pos[i]] = val_pred[i];
            out.report.folds.push_back(
                {r2(gather_y(table, val_rows), val_pred), rmse(gather_y(table, val_rows), val_pred)});

            if (n_test > 0)
                out.fold_test_preds[static_cast<std::size_t>(f)] =
                    model.predict(gather(table, plan.test_rows, cols));
            out.fold_models.push_back(std::move(model));
        }

        out.test_pred.assign(n_test, 0.0);
        for (const auto& fp : out.fold_test_preds)
            for (std::size_t i = 0; i < n_test; ++i) out.test_pred[i] += fp[i];
        for (auto& v : out.test_pred) v /= static_cast<double>(plan.k);

        const auto y_train = gather_y(table, plan.train_rows);
        out.report.val_r2 = r2(y_train, out.oof);
        out.report.val_rmse = rmse(y_train, out.oof);
        double s = 0.0;
        for (const auto& fm : out.report.folds) s += fm.r2;
        out.report.mean_fold_r2 = s / static_cast<double>(plan.k);
        if (n_test >= 2) {
            const auto y_test = gather_y(table, plan.test_rows);
            out.report.test_r2 = r2(y_test, out.test_pred);
            out.report.test_rmse = rmse(y_test, out.test_pred);
        }
    } catch (const std::exception& e) {
        out.report.failed = true;
        out.report.fail_reason = e.what();
    }
    return out;
}

EnsembleResult evaluate_ensemble(const std::vector<std::vector<double>>& base_oof,
                                 const std::vector<std::vector<double>>& base_test_preds,
                                 const FeatureTable& table, const SplitPlan& plan,
                                 double lambda_l2) {
    const std::size_t m = base_oof.size();
    if (m == 0) throw contract_error("ensemble needs at least one base model");
    const std::size_t n_train = plan.train_rows.size();
    const std::size_t n_test = plan.test_rows.size();
    for (const auto& o : base_oof)
        if (o.size() != n_train) throw contract_error("oof length mismatch");
    if (base_test_preds.size() != m) throw contract_error("test prediction matrix mismatch");

    // Meta-features: one column per base model.
    Matrix Z(n_train, std::vector<double>(m));
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n_train; ++i) Z[i][j] = base_oof[j][i];
    Matrix Zt(n_test, std::vector<double>(m));
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n_test; ++i) Zt[i][j] = base_test_preds[j][i];

    const auto y_train = gather_y(table, plan.train_rows);

    EnsembleResult out;
    out.report.dataset_id = table.dataset_id;
    out.report.kind = ModelKind::Ridge;
    out.report.model_label = "ENS";
    out.report.hyper = {{"lambda_l2", lambda_l2}};
    out.report.seed = plan.seed;
    out.report.dropped_rows = table.dropped_rows;
    out.report.high_quantile = threshold_quantile(y_train, kHighChlThreshold);
    out.oof.assign(n_train, 0.0);

    for (int f = 0; f < plan.k; ++f) {
        Matrix Zf;
        std::vector<double> yf;
        std::vector<std::size_t> val_pos;
        for (std::size_t i = 0; i < n_train; ++i) {
            if (plan.fold_of_train[i] == f) {
                val_pos.push_back(i);
            } else {
                Zf.push_back(Z[i]);
                yf.push_back(y_train[i]);
            }
        }
        auto meta = fit_ridge(Zf, yf, lambda_l2);
        Matrix Zv;
        std::vector<double> yv;
        for (auto i : val_pos) {
            Zv.push_back(Z[i]);
            yv.push_back(y_train[i]);
        }
        const auto pred = meta.predict(Zv);
        for (std::size_t i = 0; i < val_pos.size(); ++i) out.oof[val_pos[i]] = pred[i];
        out.report.folds.push_back({r2(yv, pred), rmse(yv, pred)});
    }

    out.report.val_r2 = r2(y_train, out.oof);
    out.report.val_rmse = rmse(y_train, out.oof);
    double s = 0.0;
    for (const auto& fm : out.report.folds) s += fm.r2;
    out.report.mean_fold_r2 = s / static_cast<double>(plan.k);

    // Test path: meta-model refit on all OOF rows.
    auto meta_full = fit_ridge(Z, y_train, lambda_l2);
    out.test_pred = meta_full.predict(Zt);
    if (n_test >= 2) {
        const auto y_test = gather_y(table, plan.test_rows);
        out.report.test_r2 = r2(y_test, out.test_pred);
        out.report.test_rmse = rmse(y_test, out.test_pred);
    }
    return out;
}

std::string dataset_processor(const std::string& dataset_id) {
    if (dataset_id.rfind("TOA", 0) == 0) return "TOA";
    if (dataset_id.rfind("C2X-Complex", 0) == 0) return "C2X-Complex";
    if (dataset_id.rfind("C2X", 0) == 0) return "C2X";
    if (dataset_id.rfind("C2RCC", 0) == 0) return "C2RCC";
    throw domain_error("cannot infer processor from dataset id: " + dataset_id);
}

std::vector<DatasetRank> rank_datasets(const std::vector<EvalReport>& reports,
                                       std::size_t per_processor_top) {
    std::map<std::string, DatasetRank> best;
    for (const auto& r : reports) {
        if (r.failed) continue;
        auto [it, fresh] = best.try_emplace(r.dataset_id);
        auto& d = it->second;
        if (fresh) {
            d.dataset_id = r.dataset_id;
            d.processor = dataset_processor(r.dataset_id);
            d.best_val_r2 = r.val_r2;
            d.best_val_rmse = r.val_rmse;
        } else if (r.val_r2 > d.best_val_r2 ||
                   (r.val_r2 == d.best_val_r2 && r.val_rmse < d.best_val_rmse)) {
            d.best_val_r2 = r.val_r2;
            d.best_val_rmse = r.val_rmse;
        }
    }

    std::map<std::string, std::vector<DatasetRank>> by_proc;
    for (const auto& [id, d] : best) by_proc[d.processor].push_back(d);

    std::vector<DatasetRank> out;
    for (const auto* proc : {"TOA", "C2RCC", "C2X", "C2X-Complex"}) {
        auto it = by_proc.find(proc);
        if (it == by_proc.end()) continue;
        auto& v = it->second;
        std::sort(v.begin(), v.end(), [](const DatasetRank& a, const DatasetRank& b) {
            if (a.best_val_r2 != b.best_val_r2) return a.best_val_r2 > b.best_val_r2;
            if (a.best_val_rmse != b.best_val_rmse) return a.best_val_rmse < b.best_val_rmse;
            return a.dataset_id < b.dataset_id;
        });
        if (v.size() > per_processor_top) v.resize(per_processor_top);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

SearchResult random_search(ModelKind kind, const std::vector<HyperRange>& space, int budget,
                           const FeatureTable& table, const SplitPlan& plan,
                           std::size_t screen_top_k, std::uint64_t seed, int n_threads) {
    if (budget < 1) throw domain_error("search budget must be >= 1");
    Rng rng(seed);
    SearchResult out;
    out.best_objective = -std::numeric_limits<double>::infinity();

    for (int t = 0; t < budget; ++t) {
        SearchTrial trial;
        trial.hyper = default_hyperparameters(kind);
        for (const auto& r : space) {
            double v;
            if (r.integer)
                v = static_cast<double>(
                    rng.uniform_int(static_cast<std::int64_t>(r.lo), static_cast<std::int64_t>(r.hi)));
            else if (r.log_scale)
                v = rng.log_uniform(r.lo, r.hi);
            else
                v = rng.uniform(r.lo, r.hi);
            trial.hyper[r.name] = v;
        }

        ModelSpec spec;
        spec.kind = kind;
        spec.hyper = trial.hyper;
        spec.seed = derive_seed(seed, "trial" + std::to_string(t));
        const auto cv = cross_validate(spec, table, plan, screen_top_k, n_threads);
        trial.failed = cv.report.failed;
        trial.objective = cv.report.failed ? -std::numeric_limits<double>::infinity()
                                           : cv.report.mean_fold_r2;
        if (!trial.failed && trial.objective > out.best_objective) {
            out.best_objective = trial.objective;
            out.best_hyper = trial.hyper;
        }
        out.trials.push_back(std::move(trial));
    }
    if (out.best_hyper.empty() && out.best_objective == -std::numeric_limits<double>::infinity())
        throw domain_error("random search: every trial failed");
    return out;
}

}  // namespace chl
