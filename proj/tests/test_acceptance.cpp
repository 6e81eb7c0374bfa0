// Acceptance suite: one numbered check per release criterion, plain
// asserts, fails fast with a message.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>

#include "chl/bsf.hpp"
#include "chl/cli.hpp"
#include "chl/eval.hpp"
#include "chl/geojson.hpp"
#include "chl/mapping.hpp"
#include "../tests/synthetic.hpp"

using namespace chl;
namespace fs = std::filesystem;

#define REQUIRE(cond)                                                              \
    do {                                                                           \
        if (!(cond)) {                                                             \
            std::cerr << "FAILED at " << __FILE__ << ":" << __LINE__ << ": "       \
                      << #cond << "\n";                                            \
            std::exit(1);                                                          \
        }                                                                          \
    } while (0)

namespace {

const std::string work_dir = [] {
    const auto d = (fs::temp_directory_path() / "chl_acceptance").string();
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}();

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t binom(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    std::size_t r = 1;
    for (std::size_t i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
    return r;
}

// ------------------------------------------------------------ criterion 1 ---

void criterion_1_metric_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 5 + static_cast<int>(rng.uniform_int(0, 45));
        std::vector<double> y, p;
        for (int i = 0; i < n; ++i) {
            y.push_back(rng.uniform(-5.0, 15.0));
            p.push_back(rng.uniform(-5.0, 15.0));
        }
        double ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
        double ssr = 0, sst = 0;
        for (int i = 0; i < n; ++i) {
            ssr += (y[i] - p[i]) * (y[i] - p[i]);
            sst += (y[i] - ym) * (y[i] - ym);
        }
        const double r2_ref = 1.0 - ssr / sst;
        const double rmse_ref = std::sqrt(ssr / n);
        REQUIRE(std::abs(r2(y, p) - r2_ref) <= 1e-12 * std::max(1.0, std::abs(r2_ref)));
        REQUIRE(std::abs(rmse(y, p) - rmse_ref) <= 1e-12 * std::max(1.0, rmse_ref));
        REQUIRE(r2(y, y) == 1.0);
        REQUIRE(rmse(y, y) == 0.0);
    }
    REQUIRE(elapsed_s(t0) < 1.0);
    std::cout << "1. metric oracle: ok\n";
}

// ------------------------------------------------------------ criterion 2 ---

void criterion_2_index_enumeration() {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t n : {6u, 9u, 12u}) {
        REQUIRE(index_count(IndexFamily::ND, n) == binom(n, 2));
        REQUIRE(index_count(IndexFamily::InvDiff, n) == binom(n, 2));
        REQUIRE(index_count(IndexFamily::DallGitelson, n) == binom(n, 2) * (n - 2));
        REQUIRE(index_count(IndexFamily::ND4, n) == binom(n, 2) * (n * (n + 1) / 2 - 1));
        REQUIRE(index_count(IndexFamily::RatioDiff, n) ==
                binom(n * (n - 1), 2) - n * binom(n - 1, 2));
        REQUIRE(index_count(IndexFamily::ThreeBandSum, n) == binom(n, 3));
    }
    const auto set6 = reflectance_set(ReflectanceKind::C2RCC_rhown);  // 6 bands
    const auto set9 = reflectance_set(ReflectanceKind::C2XC_rhow);    // 9 bands
    const auto set12 = reflectance_set(ReflectanceKind::TOA);         // 12 bands
    REQUIRE(enumerate_indices(IndexFamily::ND, set6).size() == 15);
    REQUIRE(enumerate_indices(IndexFamily::ThreeBandSum, set6).size() == 20);
    for (const auto* set : {&set6, &set9, &set12})
        for (auto fam : all_index_families())
            REQUIRE(enumerate_indices(fam, *set).size() == index_count(fam, set->size()));

    // Duplicate/negation scan on 1000 random positive reflectance vectors.
    const auto all = enumerate_all_indices(set9);
    const int n_vec = 1000;
    Rng rng(202);
    std::vector<std::vector<double>> vecs(n_vec, std::vector<double>(set9.size()));
    for (auto& v : vecs)
        for (auto& x : v) x = rng.uniform(0.01, 0.6);

    std::vector<std::vector<double>> sig(all.size(), std::vector<double>(n_vec));
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (int k = 0; k < n_vec; ++k) {
            const double v = eval_index(all[i], vecs[static_cast<std::size_t>(k)]);
            REQUIRE(std::isfinite(v));
            sig[i][static_cast<std::size_t>(k)] = v;
        }
        if (sig[i][0] < 0)  // sign-normalize so negated pairs collide too
            for (auto& v : sig[i]) v = -v;
    }
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return sig[a][0] < sig[b][0]; });
    auto same = [&](const std::vector<double>& a, const std::vector<double>& b) {
        for (int k = 0; k < n_vec; ++k) {
            const auto i = static_cast<std::size_t>(k);
            if (std::abs(a[i] - b[i]) > 1e-12 * std::max({1.0, std::abs(a[i]), std::abs(b[i])}))
                return false;
        }
        return true;
    };
    for (std::size_t i = 0; i < order.size(); ++i)
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            const auto &a = sig[order[i]], &b = sig[order[j]];
            if (b[0] - a[0] > 1e-6 * std::max(1.0, std::abs(a[0]))) break;
            REQUIRE(!same(a, b));
        }
    REQUIRE(elapsed_s(t0) < 10.0);
    std::cout << "2. index enumeration: ok (" << all.size() << " features scanned)\n";
}

// ------------------------------------------------------------ criterion 3 ---

void criterion_3_window_mean() {
    const auto set = reflectance_set(ReflectanceKind::C2RCC_rhown);
    Rng rng(303);
    const std::vector<int> widths = {1, 3, 5, 9, 15};
    int cases = 0;
    while (cases < 10000) {
        BandStack s;
        s.width = 4 + static_cast<int>(rng.uniform_int(0, 28));
        s.height = 4 + static_cast<int>(rng.uniform_int(0, 28));
        for (const auto& n : canonical_band_names()) {
            Band b;
            b.name = n;
            b.data.resize(s.n_pixels());
            for (auto& v : b.data)
                v = rng.uniform() < 0.15 ? std::numeric_limits<float>::quiet_NaN()
                                         : static_cast<float>(rng.uniform(0.0, 1.0));
            s.bands.push_back(std::move(b));
        }
        for (int rep = 0; rep < 100 && cases < 10000; ++rep, ++cases) {
            const int row = static_cast<int>(rng.uniform_int(0, s.height - 1));
            const int col = static_cast<int>(rng.uniform_int(0, s.width - 1));
            const int w = widths[static_cast<std::size_t>(rng.uniform_int(0, 4))];
            const auto got = window_mean(s, row, col, w, set);
            for (std::size_t bi = 0; bi < set.size(); ++bi) {
                const auto band = static_cast<std::size_t>(s.band_index(set.band_names[bi]));
                double sum = 0;
                int cnt = 0;
                for (int r = row - w / 2; r <= row + w / 2; ++r)
                    for (int c = col - w / 2; c <= col + w / 2; ++c) {
                        if (r < 0 || c < 0 || r >= s.height || c >= s.width) continue;
                        const double v = s.at(band, r, c);
                        if (std::isnan(v)) continue;
                        sum += v;
                        ++cnt;
                    }
                if (cnt == 0) {
                    REQUIRE(std::isnan(got[bi]));
                } else {
                    REQUIRE(std::abs(got[bi] - sum / cnt) <= 1e-12 * std::max(1.0, sum / cnt));
                }
            }
        }
    }
    std::cout << "3. window aggregation: ok\n";
}

// ------------------------------------------------------------ criterion 4 ---

bool oracle_inside(const PolygonMask& mask, double x, double y) {
    bool in = false;
    for (const auto& poly : mask.polygons)
        for (const auto& ring : poly.rings)
            for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
                const auto [xi, yi] = ring[i];
                const auto [xj, yj] = ring[j];
                if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi)
                    in = !in;
            }
    return in;
}

void criterion_4_rasterize() {
    GeoTransform t;
    t.origin_x = 0;
    t.origin_y = 0;
    t.pixel_width = 1;
    t.pixel_height = -1;
    t.crs_id = "EPSG:4326";
    Rng rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        PolygonMask mask;
        Polygon poly;
        const double cx = rng.uniform(10.0, 54.0), cy = rng.uniform(-54.0, -10.0);
        const int verts = 5 + static_cast<int>(rng.uniform_int(0, 9));
        std::vector<std::pair<double, double>> ring;
        for (int v = 0; v < verts; ++v) {
            const double ang = 2 * M_PI * v / verts;
            const double rad = rng.uniform(4.0, 20.0);
            ring.push_back({cx + rad * std::cos(ang), cy + rad * std::sin(ang)});
        }
        poly.rings.push_back(ring);
        if (trial % 3 == 0) {  // sometimes punch a hole
            std::vector<std::pair<double, double>> hole;
            for (int v = 0; v < 4; ++v) {
                const double ang = 2 * M_PI * v / 4;
                hole.push_back({cx + 2.0 * std::cos(ang), cy + 2.0 * std::sin(ang)});
            }
            poly.rings.push_back(hole);
        }
        mask.polygons.push_back(poly);

        const auto grid = rasterize_polygon(mask, 64, 64, t);
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c) {
                const auto [x, y] = t.pixel_to_geo(r, c);
                REQUIRE(grid[static_cast<std::size_t>(r) * 64 + c] ==
                        (oracle_inside(mask, x, y) ? 1 : 0));
            }
    }
    std::cout << "4. rasterization: ok\n";
}

// ------------------------------------------------------------ criterion 5 ---

void criterion_5_model_suites() {
    Rng rng(505);
    Matrix X;
    std::vector<double> y;
    for (int i = 0; i < 60; ++i) {
        const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-1.0, 3.0);
        X.push_back({a, b});
        y.push_back(1.5 + 2.0 * a - 0.5 * b);
    }
    const std::vector<std::string> names = {"x0", "x1"};

    // OLS exact recovery.
    {
        ModelSpec spec;
        spec.kind = ModelKind::LR;
        spec.seed = 1;
        const auto m = fit_model(spec, X, y, names);
        const auto p = m.predict({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}});
        REQUIRE(std::abs(p[0] - 1.5) < 1e-10);
        REQUIRE(std::abs(p[1] - 3.5) < 1e-10);
        REQUIRE(std::abs(p[2] - 1.0) < 1e-10);
    }
    // Elastic net alpha -> 0 equals OLS; full shrinkage at the deactivation bound.
    {
        auto yn = y;
        for (auto& v : yn) v += 0.05 * rng.normal();
        const auto ols = fit_linear(X, yn);
        const auto eln = fit_elastic_net(X, yn, 1e-12, 0.5);
        Matrix q = {{0.4, 0.8}, {-1.2, 2.0}, {1.7, -0.3}};
        const auto po = ols.predict(q);
        const auto pe = eln.predict(q);
        for (std::size_t i = 0; i < q.size(); ++i) REQUIRE(std::abs(pe[i] - po[i]) < 1e-6);

        // bound for l1_ratio=1: max_j |x_cj . y_c| / n zeroes every coefficient
        const auto n = static_cast<double>(yn.size());
        std::vector<double> xm(2, 0.0);
        double ym = 0;
        for (std::size_t i = 0; i < yn.size(); ++i) {
            xm[0] += X[i][0] / n;
            xm[1] += X[i][1] / n;
            ym += yn[i] / n;
        }
        double bound = 0;
        for (std::size_t j = 0; j < 2; ++j) {
            double dot = 0;
            for (std::size_t i = 0; i < yn.size(); ++i)
                dot += (X[i][j] - xm[j]) * (yn[i] - ym);
            bound = std::max(bound, std::abs(dot) / n);
        }
        const auto zero = fit_elastic_net(X, yn, bound * (1.0 + 1e-9), 1.0);
        const auto pz = zero.predict({{0.0, 0.0}, {5.0, -5.0}});
        REQUIRE(pz[0] == pz[1]);  // constant model: all coefficients at zero
        REQUIRE(std::abs(pz[0] - ym) < 1e-12);
    }
    // KNN 3-point hand example: query 1.0, neighbors 0 (d=1), 3 (d=2), 7 (d=6),
    // inverse-distance weights 1, 1/2, 1/6 -> (0 + 1.5 + 7/6) / (5/3) = 1.6
    {
        const auto m = fit_knn({{0.0}, {3.0}, {7.0}}, {0.0, 3.0, 7.0}, 3);
        const double expected = (1.0 * 0.0 + 0.5 * 3.0 + (1.0 / 6.0) * 7.0) / (1.0 + 0.5 + 1.0 / 6.0);
        REQUIRE(std::abs(m.predict({{1.0}})[0] - expected) < 1e-15);
    }
    // GBT: training loss monotone over 50 rounds.
    {
        auto yn = y;
        for (auto& v : yn) v += 0.3 * rng.normal();
        double prev = 1e18;
        for (int rounds = 1; rounds <= 50; ++rounds) {
            const auto m = fit_gbt(X, yn, rounds, 0.1, 3, 1.0, 0.0, 1.0, 77);
            const auto p = m.predict(X);
            double loss = 0;
            for (std::size_t i = 0; i < yn.size(); ++i)
                loss += (p[i] - yn[i]) * (p[i] - yn[i]);
            REQUIRE(loss <= prev + 1e-9);
            prev = loss;
        }
    }
    // RF: bit-exact determinism under a fixed seed.
    {
        const auto a = fit_random_forest(X, y, 30, 8, 1, 0, 909);
        const auto b = fit_random_forest(X, y, 30, 8, 1, 0, 909);
        Matrix q;
        for (int i = 0; i < 20; ++i) q.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 3.0)});
        const auto pa = a.predict(q), pb = b.predict(q);
        REQUIRE(std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(double)) == 0);
    }
    // MLP: analytic gradient vs central differences, max relative error < 1e-4.
    {
        Matrix Xs;
        std::vector<double> ys;
        std::vector<std::size_t> batch;
        for (std::size_t i = 0; i < 10; ++i) {
            Xs.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
            ys.push_back(rng.uniform(-1.0, 1.0));
            batch.push_back(i);
        }
        mlp_detail::Network net;
        Rng init(606);
        net.init({2, 6, 1}, true, init);
        std::vector<std::vector<double>> gw, gb;
        net.loss_and_gradients(Xs, ys, batch, gw, gb);
        const double h = 1e-6;
        double max_rel = 0;
        auto probe = [&](std::vector<double>& slot, std::size_t j, double analytic) {
            const double orig = slot[j];
            slot[j] = orig + h;
            const double lp = net.batch_loss(Xs, ys, batch);
            slot[j] = orig - h;
            const double lm = net.batch_loss(Xs, ys, batch);
            slot[j] = orig;
            const double numeric = (lp - lm) / (2 * h);
            max_rel = std::max(max_rel,
                               std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)));
        };
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            for (std::size_t j = 0; j < net.weights[l].size(); ++j) probe(net.weights[l], j, gw[l][j]);
            for (std::size_t j = 0; j < net.biases[l].size(); ++j) probe(net.biases[l], j, gb[l][j]);
        }
        REQUIRE(max_rel < 1e-4);
    }
    std::cout << "5. model unit suites: ok\n";
}

// ------------------------------------------------------------ criterion 6 ---

FeatureTable linear_table(std::size_t n, std::uint64_t seed) {
    FeatureTable t;
    t.dataset_id = "C2RCC_rhow_1x1_depth_in_0_1";
    t.columns = {"rhow_B1", "f0", "f1"};
    t.n_raw_bands = 1;
    t.has_target = true;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double f0 = rng.uniform(0.0, 2.0), f1 = rng.uniform(-1.0, 1.0);
        t.values.push_back({rng.uniform(), f0, f1});
        t.target.push_back(4.0 + 3.0 * f0 - 2.0 * f1 + 0.05 * rng.normal());
    }
    return t;
}

void criterion_6_leakage_guard() {
    const auto table = linear_table(80, 707);
    const auto plan = make_split_plan(table.target, 0.25, 5, 11);
    ModelSpec spec;
    spec.kind = ModelKind::Ridge;
    spec.seed = 5;

    auto hashes = [&](const FeatureTable& t) {
        const auto cv = cross_validate(spec, t, plan, 10);
        REQUIRE(!cv.report.failed);
        std::vector<std::uint64_t> h;
        for (const auto& m : cv.fold_models) h.push_back(fnv1a(save_model(m).dump()));
        return h;
    };
    auto perturbed = table;
    Rng rng(808);
    for (auto r : plan.test_rows) perturbed.target[r] += rng.uniform(1.0, 50.0);
    REQUIRE(hashes(table) == hashes(perturbed));
    std::cout << "6. leakage guard: ok\n";
}

// ------------------------------------------------------------ criterion 7 ---

void criterion_7_stratification() {
    Rng rng(909);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(15, 200));
        std::vector<bool> labels(n, false);
        for (auto&& b : labels) b = rng.uniform() < 0.25;
        const auto folds = stratified_kfold(labels, 5, static_cast<std::uint64_t>(trial));
        for (bool cls : {false, true}) {
            std::vector<int> count(5, 0);
            for (std::size_t i = 0; i < n; ++i)
                if (labels[i] == cls) ++count[static_cast<std::size_t>(folds[i])];
            const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
            REQUIRE(*hi - *lo <= 1);
        }
        std::vector<int> total(5, 0);
        for (int f : folds) ++total[static_cast<std::size_t>(f)];
        const auto [lo, hi] = std::minmax_element(total.begin(), total.end());
        REQUIRE(*hi - *lo <= 1);
    }
    std::cout << "7. stratification: ok\n";
}

// ------------------------------------------------------------ criterion 8 ---

void criterion_8_ensemble() {
    auto table = linear_table(100, 111);
    const auto plan = make_split_plan(table.target, 0.25, 5, 13);

    // Single base + tiny lambda: pass-through within 1e-6. The base must be
    // exact for the pass-through limit, so strip the generator noise first.
    auto exact = table;
    for (std::size_t i = 0; i < exact.n_rows(); ++i)
        exact.target[i] = 4.0 + 3.0 * exact.values[i][1] - 2.0 * exact.values[i][2];
    ModelSpec lr;
    lr.kind = ModelKind::LR;
    lr.seed = 3;
    const auto base = cross_validate(lr, exact, plan, 10);
    REQUIRE(!base.report.failed);
    const auto ens = evaluate_ensemble({base.oof}, {base.test_pred}, exact, plan, 1e-9);
    for (std::size_t i = 0; i < base.test_pred.size(); ++i)
        REQUIRE(std::abs(ens.test_pred[i] - base.test_pred[i]) < 1e-6);

    // True-function base + noise base: stacking beats the noise model.
    Rng rng(222);
    std::vector<double> true_oof, true_test, noise_oof, noise_test;
    for (auto r : plan.train_rows) {
        true_oof.push_back(table.target[r] + 0.01 * rng.normal());
        noise_oof.push_back(table.target[r] + 2.0 * rng.normal());
    }
    for (auto r : plan.test_rows) {
        true_test.push_back(table.target[r] + 0.01 * rng.normal());
        noise_test.push_back(table.target[r] + 2.0 * rng.normal());
    }
    const auto two =
        evaluate_ensemble({true_oof, noise_oof}, {true_test, noise_test}, table, plan, 1e-3);
    std::vector<double> y_train;
    for (auto r : plan.train_rows) y_train.push_back(table.target[r]);
    REQUIRE(two.report.val_rmse <= rmse(y_train, noise_oof));
    std::cout << "8. ensemble: ok\n";
}

// ------------------------------------------------------------ criterion 9 ---

void criterion_9_synthetic_e2e() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto fx = synth::write_fixture(work_dir + "/e2e_fixture", 30, 4242);
    const auto out = work_dir + "/e2e_out";
    auto cfg = synth::base_config(fx, out, 4242);
    cfg["reflectance_sets"] = {"C2X-Complex_rhow"};
    cfg["windows"] = {1};
    cfg["depth_bins"] = {0};
    cfg["models"] = {"LR", "XGB"};
    cfg["model_overrides"] = {{"XGB", {{"n_rounds", 300}, {"max_depth", 6}}}};
    const auto cfg_path = synth::write_config(cfg, work_dir + "/e2e.json");

    for (const auto* sub : {"ingest", "features", "train", "select"})
        REQUIRE(run_cli({sub, "--config", cfg_path, "--threads", "1"}) == 0);
    const auto date = fx.dates.front();
    REQUIRE(run_cli({"infer", "--date", date, "--config", cfg_path, "--threads", "1"}) == 0);

    nlohmann::json prelim;
    std::ifstream(out + "/reports/preliminary.json") >> prelim;
    double lr_r2 = -1, gbt_r2 = -1;
    for (const auto& j : prelim) {
        const auto r = EvalReport::from_json(j);
        if (r.model_label == "LR") lr_r2 = r.test_r2;
        if (r.model_label == "XGB") gbt_r2 = r.test_r2;
    }
    REQUIRE(lr_r2 >= 0.99);
    REQUIRE(gbt_r2 >= 0.99);

    // Per-pixel map values equal direct model predictions.
    const auto map = read_bsf(out + "/maps/" + date + "_depth_0_1.bsf");
    nlohmann::json sel;
    std::ifstream(out + "/selection.json") >> sel;
    const auto model = load_model_file(sel.at("0_1").at("model_path").get<std::string>());
    const auto set = reflectance_set(
        reflectance_kind_from_label(sel.at("0_1").at("set_label").get<std::string>()));
    const int window = sel.at("0_1").at("window").get<int>();

    auto scene = read_bsf(fx.dir + "/scenes/" + date + ".bsf");
    scene = crop_geo(scene, cfg["bbox"]["north"], cfg["bbox"]["west"], cfg["bbox"]["south"],
                     cfg["bbox"]["east"]);
    const auto polygons = read_geojson(fx.mask_path);
    const auto mask = rasterize_polygon(polygons, scene);
    std::vector<std::string> keep = model.feature_names;
    const auto pixels = extract_all_pixels(scene, mask, set, window, &keep);
    const auto direct = model.predict_named(pixels.values, pixels.columns);

    REQUIRE(map.width == scene.width);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < pixels.n_rows(); ++i) {
        const auto idx = static_cast<std::size_t>(pixels.key_row[i]) *
                             static_cast<std::size_t>(map.width) +
                         static_cast<std::size_t>(pixels.key_col[i]);
        const float expected = static_cast<float>(std::max(0.0, direct[i]));
        REQUIRE(std::abs(static_cast<double>(map.bands[0].data[idx]) - expected) <= 1e-9);
        ++checked;
    }
    REQUIRE(checked > 100);
    const double secs = elapsed_s(t0);
    REQUIRE(secs < 120.0);
    std::cout << "9. synthetic end-to-end: ok (LR r2 " << lr_r2 << ", GBT r2 " << gbt_r2
              << ", " << secs << " s)\n";
}

// ----------------------------------------------------------- criterion 10 ---

void criterion_10_grid_cardinality() {
    const auto fx = synth::write_fixture(work_dir + "/grid_fixture", 1, 10);
    const auto out = work_dir + "/grid_out";
    const auto cfg = synth::base_config(fx, out, 10);  // full default grid
    const auto cfg_path = synth::write_config(cfg, work_dir + "/grid.json");
    REQUIRE(run_cli({"ingest", "--config", cfg_path}) == 0);
    REQUIRE(run_cli({"features", "--config", cfg_path, "--threads", "4"}) == 0);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(out + "/datasets"))
        n += e.path().extension() == ".csv" ? 1 : 0;
    REQUIRE(n == 140);  // 7 sets x 5 windows x 4 depth bins
    std::cout << "10. grid cardinality: ok\n";
}

// ----------------------------------------------------------- criterion 11 ---

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void criterion_11_thread_determinism() {
    const auto fx = synth::write_fixture(work_dir + "/thr_fixture", 10, 77);
    nlohmann::json overrides = {{"RF", {{"n_trees", 30}, {"max_depth", 6}}}};

    auto run_pipeline = [&](const std::string& out, const std::string& threads) {
        auto cfg = synth::base_config(fx, out, 77);
        cfg["reflectance_sets"] = {"C2X-Complex_rhow", "C2RCC_rhown"};
        cfg["windows"] = {1, 3};
        cfg["depth_bins"] = {0};
        cfg["models"] = {"LR", "KNN", "RF"};
        cfg["model_overrides"] = overrides;
        const auto cfg_path = synth::write_config(cfg, out + "_config.json");
        for (const auto* sub : {"ingest", "features", "train", "select"})
            REQUIRE(run_cli({sub, "--config", cfg_path, "--threads", threads}) == 0);
        REQUIRE(run_cli({"infer", "--date", fx.dates.front(), "--config", cfg_path,
                         "--threads", threads}) == 0);
    };
    const auto out1 = work_dir + "/thr_out1", out8 = work_dir + "/thr_out8";
    run_pipeline(out1, "1");
    run_pipeline(out8, "8");

    REQUIRE(slurp(out1 + "/reports/preliminary.json") ==
            slurp(out8 + "/reports/preliminary.json"));
    const auto map_rel = "/maps/" + fx.dates.front() + "_depth_0_1.bsf";
    REQUIRE(slurp(out1 + map_rel) == slurp(out8 + map_rel));
    std::cout << "11. thread determinism: ok\n";
}

// ----------------------------------------------------------- criterion 12 ---

void criterion_12_report_fidelity() {
    const auto fx = synth::write_fixture(work_dir + "/rep_fixture", 10, 55);
    const auto out = work_dir + "/rep_out";
    auto cfg = synth::base_config(fx, out, 55);
    cfg["windows"] = {1, 3};  // 7 sets x 2 windows = 14 candidate datasets
    cfg["depth_bins"] = {0};
    cfg["model_overrides"] = {{"RF", {{"n_trees", 20}, {"max_depth", 5}}},
                              {"XGB", {{"n_rounds", 40}}},
                              {"LBM", {{"n_rounds", 40}}},
                              {"CAT", {{"n_rounds", 40}}},
                              {"MLP", {{"epochs", 30}, {"h1", 16}}}};
    const auto cfg_path = synth::write_config(cfg, work_dir + "/rep.json");
    for (const auto* sub : {"ingest", "features", "train", "report"})
        REQUIRE(run_cli({sub, "--config", cfg_path, "--threads", "8"}) == 0);

    // 10 dataset rows x 10 model columns per metric.
    const auto csv = slurp(out + "/tables/r2_depth_0_1.csv");
    std::vector<std::string> lines;
    std::istringstream ss(csv);
    for (std::string line; std::getline(ss, line);)
        if (!line.empty()) lines.push_back(line);
    REQUIRE(lines.size() == 11);
    REQUIRE(lines[0] == "dataset,CAT,ELN,ENS,KNN,LBM,LR,MLP,RF,SVR,XGB");
    for (std::size_t i = 1; i < lines.size(); ++i)
        REQUIRE(std::count(lines[i].begin(), lines[i].end(), ',') == 10);

    // Golden fixture: every populated cell equals the synthetic run's report.
    nlohmann::json prelim;
    std::ifstream(out + "/reports/preliminary.json") >> prelim;
    std::map<std::pair<std::string, std::string>, EvalReport> by_key;
    for (const auto& j : prelim) {
        const auto r = EvalReport::from_json(j);
        if (!r.failed) by_key[{r.dataset_id, r.model_label}] = r;
    }
    for (const auto* metric : {"r2", "rmse"}) {
        nlohmann::json tbl;
        std::ifstream(out + "/tables/" + std::string(metric) + "_depth_0_1.json") >> tbl;
        REQUIRE(tbl.size() == 10);
        for (const auto& [dataset, row] : tbl.items()) {
            REQUIRE(row.size() == 10);
            REQUIRE(row.at("SVR").is_null());
            for (const auto& [col, cell] : row.items()) {
                const auto it = by_key.find({dataset, col});
                if (it == by_key.end()) {
                    REQUIRE(cell.is_null());
                } else {
                    const double expected = std::string(metric) == "r2" ? it->second.test_r2
                                                                        : it->second.test_rmse;
                    REQUIRE(cell.get<double>() == expected);
                }
            }
        }
    }
    std::cout << "12. report fidelity: ok\n";
}

}  // namespace

int main() {
    criterion_1_metric_oracle();
    criterion_2_index_enumeration();
    criterion_3_window_mean();
    criterion_4_rasterize();
    criterion_5_model_suites();
    criterion_6_leakage_guard();
    criterion_7_stratification();
    criterion_8_ensemble();
    criterion_9_synthetic_e2e();
    criterion_10_grid_cardinality();
    criterion_11_thread_determinism();
    criterion_12_report_fidelity();
    std::cout << "acceptance: all criteria passed\n";
    return 0;
}
