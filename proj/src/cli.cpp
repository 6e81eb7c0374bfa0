#include "chl/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "chl/bsf.hpp"
#include "chl/csv.hpp"
#include "chl/geojson.hpp"
#include "chl/mapping.hpp"

namespace fs = std::filesystem;

namespace chl {

using nlohmann::json;

std::string PipelineConfig::resolve(const std::string& path) const {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(config_dir) / path).string();
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw missing_input_error("missing input file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::uint64_t file_hash(const std::string& path) { return fnv1a(read_file(path)); }

void require_file(const std::string& path, const std::string& what) {
    if (path.empty() || !fs::exists(path))
        throw missing_input_error("missing " + what + ": " + (path.empty() ? "(unset)" : path) +
                                  " (run the producing stage first)");
}

void write_text(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw format_error("JSON parse error in " + path + ": " + e.what());
    }
}

// ------------------------------------------------------------- manifests ---

std::string manifest_path(const PipelineConfig& cfg, const std::string& stage) {
    return (fs::path(cfg.resolve(cfg.out_dir)) / "manifests" / (stage + ".json")).string();
}

std::uint64_t combine_hashes(std::uint64_t base, const std::vector<std::string>& files) {
    std::uint64_t h = base;
    for (const auto& f : files) {
        const auto fh = file_hash(f);
        h = fnv1a(&fh, sizeof(fh), h);
    }
    return h;
}

bool stage_up_to_date(const PipelineConfig& cfg, const std::string& stage,
                      std::uint64_t input_hash) {
    const auto path = manifest_path(cfg, stage);
    if (!fs::exists(path)) return false;
    const auto j = read_json(path);
    if (j.value("input_hash", std::uint64_t{0}) != input_hash) return false;
    for (const auto& out : j.value("outputs", std::vector<std::string>{}))
        if (!fs::exists(out)) return false;
    return true;
}

void write_stage_manifest(const PipelineConfig& cfg, const std::string& stage,
                          std::uint64_t input_hash, const std::vector<std::string>& outputs) {
    write_json(manifest_path(cfg, stage),
               {{"stage", stage}, {"input_hash", input_hash}, {"outputs", outputs}});
}

// ---------------------------------------------------------------- config ---

std::vector<std::string> default_set_labels() {
    std::vector<std::string> labels;
    for (auto k : all_reflectance_kinds()) labels.push_back(reflectance_set(k).label());
    return labels;
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
    if (!fs::exists(path)) throw config_error("config file not found: " + path);
    const auto text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config parse error: ") + e.what());
    }

    PipelineConfig cfg;
    cfg.config_dir = fs::absolute(fs::path(path)).parent_path().string();
    cfg.config_hash = fnv1a(text);
    try {
        cfg.schema_version = j.at("schema_version").get<int>();
        if (cfg.schema_version != 1)
            throw config_error("unsupported schema_version " +
                               std::to_string(cfg.schema_version));

        const auto& p = j.at("paths");
        cfg.scene_catalog = p.value("scene_catalog", "");
        cfg.buoy_upct = p.value("buoy_upct", "");
        cfg.buoy_imida = p.value("buoy_imida", "");
        cfg.lagoon_mask = p.value("lagoon_mask", "");
        cfg.out_dir = p.at("out_dir").get<std::string>();

        if (j.contains("bbox")) {
            const auto& b = j.at("bbox");
            cfg.bbox_north = b.at("north").get<double>();
            cfg.bbox_west = b.at("west").get<double>();
            cfg.bbox_south = b.at("south").get<double>();
            cfg.bbox_east = b.at("east").get<double>();
            cfg.has_bbox = true;
        }

        cfg.windows = j.value("windows", cfg.windows);
        cfg.set_labels = j.value("reflectance_sets", std::vector<std::string>{});
        cfg.depth_bins = j.value("depth_bins", cfg.depth_bins);
        cfg.model_labels = j.value("models", cfg.model_labels);
        if (j.contains("model_overrides"))
            cfg.model_overrides =
                j.at("model_overrides")
                    .get<std::map<std::string, std::map<std::string, double>>>();

        if (!j.contains("seed")) throw config_error("config must pin an explicit seed");
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
        cfg.k_folds = j.value("k_folds", cfg.k_folds);
        if (j.contains("thresholds")) {
            const auto& t = j.at("thresholds");
            cfg.max_cloud_pct = t.value("max_cloud_pct", cfg.max_cloud_pct);
            cfg.min_valid_fraction = t.value("min_valid_fraction", cfg.min_valid_fraction);
            cfg.high_chl_threshold = t.value("high_chl", cfg.high_chl_threshold);
        }
        cfg.excluded_dates = j.value("excluded_dates", cfg.excluded_dates);
        cfg.top_k_screening = j.value("top_k_screening", cfg.top_k_screening);
        cfg.search_budget = j.value("search_budget", cfg.search_budget);
        cfg.per_processor_top = j.value("per_processor_top", cfg.per_processor_top);
        cfg.ensemble_lambda = j.value("ensemble_lambda", cfg.ensemble_lambda);
        cfg.mask_erosion = j.value("mask_erosion", cfg.mask_erosion);
        if (j.contains("render")) {
            cfg.render.gamma = j.at("render").value("gamma", cfg.render.gamma);
            cfg.render.chl_max = j.at("render").value("chl_max", cfg.render.chl_max);
        }
    } catch (const json::exception& e) {
        throw config_error(std::string("bad config field: ") + e.what());
    }

    if (cfg.set_labels.empty()) cfg.set_labels = default_set_labels();
    try {
        for (const auto& label : cfg.set_labels) reflectance_kind_from_label(label);
    } catch (const domain_error& e) {
        throw config_error(e.what());
    }
    for (const auto& label : cfg.model_labels) spec_for_label(cfg, label, ""); // validates
    for (int w : cfg.windows)
        if (w < 1 || w % 2 == 0) throw config_error("windows must be odd and positive");
    for (int d : cfg.depth_bins)
        if (d < 0 || d >= kNumDepthBins) throw config_error("depth bin out of range");
    if (cfg.k_folds < 2) throw config_error("k_folds must be >= 2");
    if (cfg.test_fraction <= 0 || cfg.test_fraction >= 1)
        throw config_error("test_fraction must be in (0,1)");
    return cfg;
}

ModelSpec spec_for_label(const PipelineConfig& cfg, const std::string& label,
                         const std::string& dataset_id) {
    ModelSpec spec;
    if (label == "LR") spec.kind = ModelKind::LR;
    else if (label == "Ridge") spec.kind = ModelKind::Ridge;
    else if (label == "ELN") spec.kind = ModelKind::ELN;
    else if (label == "KNN") spec.kind = ModelKind::KNN;
    else if (label == "RF") spec.kind = ModelKind::RF;
    else if (label == "MLP") spec.kind = ModelKind::MLP;
    else if (label == "XGB") spec.kind = ModelKind::GBT;
    else if (label == "LBM") {
        // One boosted-tree learner backs the three boosting columns; the
        // variants differ in defaults and seed stream.
        spec.kind = ModelKind::GBT;
        spec.hyper = {{"learning_rate", 0.05}, {"max_depth", 6}, {"n_rounds", 300}};
    } else if (label == "CAT") {
        spec.kind = ModelKind::GBT;
        spec.hyper = {{"learning_rate", 0.08}, {"max_depth", 3}, {"n_rounds", 300}};
    } else {
        throw config_error("unknown model label: " + label);
    }
    const auto it = cfg.model_overrides.find(label);
    if (it != cfg.model_overrides.end())
        for (const auto& [k, v] : it->second) spec.hyper[k] = v;
    spec.seed = derive_seed(cfg.seed, label + ":" + dataset_id);
    return spec;
}

namespace {

// -------------------------------------------------------- shared loading ---

std::string out_path(const PipelineConfig& cfg, const std::string& rel) {
    return (fs::path(cfg.resolve(cfg.out_dir)) / rel).string();
}

std::string depth_csv_path(const PipelineConfig& cfg, int bin) {
    return out_path(cfg, "buoys/depth_" + depth_bin_label(bin) + ".csv");
}

std::string dataset_path(const PipelineConfig& cfg, const std::string& dataset_id) {
    return out_path(cfg, "datasets/" + dataset_id + ".csv");
}

struct GridEntry {
    ReflectanceSet set;
    int window = 1;
    int depth = 0;
    std::string dataset_id;
};

std::vector<GridEntry> dataset_grid(const PipelineConfig& cfg) {
    std::vector<GridEntry> grid;
    for (const auto& label : cfg.set_labels) {
        const auto set = reflectance_set(reflectance_kind_from_label(label));
        for (int w : cfg.windows)
            for (int d : cfg.depth_bins)
                grid.push_back({set, w, d, make_dataset_id(set, w, d)});
    }
    return grid;
}

// Scenes feeding a reflectance set: its processor's entries; TOA reads from
// any processor's stack, preferring C2XC.
std::vector<SceneCatalogEntry> scenes_for_set(const std::vector<SceneCatalogEntry>& catalog,
                                              const ReflectanceSet& set) {
    const auto proc = set.processor();
    std::map<std::string, SceneCatalogEntry> by_date;
    for (const auto& e : catalog) {
        if (!proc.empty()) {
            if (e.processor == proc) by_date[e.date] = e;
        } else {
            auto it = by_date.find(e.date);
            if (it == by_date.end() || (e.processor == "C2XC" && it->second.processor != "C2XC"))
                by_date[e.date] = e;
        }
    }
    std::vector<SceneCatalogEntry> out;
    for (auto& [date, e] : by_date) out.push_back(std::move(e));
    return out;
}

struct SceneCache {
    std::map<std::string, BandStack> stacks; // keyed by resolved path

    const BandStack* get(const PipelineConfig& cfg, const std::string& path) {
        const auto resolved = cfg.resolve(path);
        auto it = stacks.find(resolved);
        if (it != stacks.end()) return &it->second;
        require_file(resolved, "scene stack");
        BandStack stack = read_band_stack(resolved);
        if (cfg.has_bbox)
            stack = crop_geo(stack, cfg.bbox_north, cfg.bbox_west, cfg.bbox_south, cfg.bbox_east);
        return &stacks.emplace(resolved, std::move(stack)).first->second;
    }
};

std::vector<SceneCatalogEntry> load_filtered_catalog(const PipelineConfig& cfg) {
    const auto path = out_path(cfg, "scenes.json");
    require_file(path, "filtered scene catalog (ingest output)");
    return load_scene_catalog(path);
}

// ------------------------------------------------------- report handling ---

const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {"CAT", "ELN", "ENS", "KNN", "LBM",
                                                  "LR",  "MLP", "RF",  "SVR", "XGB"};
    return cols;
}

std::vector<EvalReport> load_reports_file(const std::string& path) {
    std::vector<EvalReport> reports;
    if (!fs::exists(path)) return reports;
    for (const auto& e : read_json(path)) reports.push_back(EvalReport::from_json(e));
    return reports;
}

// Final-stage reports override preliminary ones per (dataset, model).
std::vector<EvalReport> load_effective_reports(const PipelineConfig& cfg) {
    auto reports = load_reports_file(out_path(cfg, "reports/preliminary.json"));
    const auto finals = load_reports_file(out_path(cfg, "reports/final.json"));
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (std::size_t i = 0; i < reports.size(); ++i)
        index[{reports[i].dataset_id, reports[i].model_label}] = i;
    for (const auto& r : finals) {
        auto it = index.find({r.dataset_id, r.model_label});
        if (it != index.end())
            reports[it->second] = r;
        else
            reports.push_back(r);
    }
    return reports;
}

int dataset_depth_bin(const std::string& dataset_id) {
    const auto pos = dataset_id.rfind("_depth_in_");
    if (pos == std::string::npos) throw domain_error("bad dataset id: " + dataset_id);
    return std::stoi(dataset_id.substr(pos + 10, 1));
}

// ------------------------------------------------------------- training ---

struct DatasetTrainResult {
    std::vector<EvalReport> reports;
    std::map<std::string, std::map<std::string, double>> searched_hyper;
};

DatasetTrainResult train_dataset(const PipelineConfig& cfg, const FeatureTable& table,
                                 bool with_search, int n_threads) {
    DatasetTrainResult out;
    SplitPlan plan;
    try {
        plan = make_split_plan(table.target, cfg.test_fraction, cfg.k_folds,
                               derive_seed(cfg.seed, "plan:" + table.dataset_id),
                               cfg.high_chl_threshold);
    } catch (const std::exception& e) {
        for (const auto& label : cfg.model_labels) {
            EvalReport r;
            r.dataset_id = table.dataset_id;
            r.model_label = label;
            r.failed = true;
            r.fail_reason = e.what();
            out.reports.push_back(std::move(r));
        }
        return out;
    }

    std::vector<std::string> labels = cfg.model_labels;
    std::sort(labels.begin(), labels.end());
    std::vector<std::vector<double>> base_oof, base_test;
    for (const auto& label : labels) {
        ModelSpec spec = spec_for_label(cfg, label, table.dataset_id);
        if (with_search && cfg.search_budget > 0) {
            const auto space = default_search_space(spec.kind);
            if (!space.empty()) {
                const auto search = random_search(
                    spec.kind, space, cfg.search_budget, table, plan, cfg.top_k_screening,
                    derive_seed(cfg.seed, "search:" + label + ":" + table.dataset_id), n_threads);
                spec.hyper = search.best_hyper;
                out.searched_hyper[label] = search.best_hyper;
            }
        }
        auto cv = cross_validate(spec, table, plan, cfg.top_k_screening, n_threads);
        cv.report.model_label = label;
        if (!cv.report.failed) {
            base_oof.push_back(std::move(cv.oof));
            base_test.push_back(std::move(cv.test_pred));
        }
        out.reports.push_back(std::move(cv.report));
    }

    if (!base_oof.empty()) {
        auto ens = evaluate_ensemble(base_oof, base_test, table, plan, cfg.ensemble_lambda);
        out.reports.push_back(std::move(ens.report));
    }
    return out;
}

}  // namespace

// ------------------------------------------------------------------ cmds ---

int cmd_ingest(const PipelineConfig& cfg, int /*n_threads*/) {
    const auto upct = cfg.resolve(cfg.buoy_upct);
    const auto imida = cfg.resolve(cfg.buoy_imida);
    const auto catalog_path = cfg.resolve(cfg.scene_catalog);
    require_file(catalog_path, "scene catalog");
    if (cfg.buoy_upct.empty() && cfg.buoy_imida.empty())
        throw config_error("at least one buoy source must be configured");

    std::vector<std::string> inputs;
    if (!cfg.buoy_upct.empty()) {
        require_file(upct, "UPCT buoy CSV");
        inputs.push_back(upct);
    }
    if (!cfg.buoy_imida.empty()) {
        require_file(imida, "IMIDA buoy CSV");
        inputs.push_back(imida);
    }
    inputs.push_back(catalog_path);
    const auto input_hash = combine_hashes(cfg.config_hash, inputs);
    if (stage_up_to_date(cfg, "ingest", input_hash)) {
        std::cout << "ingest: up to date\n";
        return 0;
    }

    BuoyDepthTable merged;
    if (!cfg.buoy_upct.empty() && !cfg.buoy_imida.empty())
        merged = merge_sources(bin_depths(load_buoy_source(upct, BuoySource::UPCT)),
                               bin_depths(load_buoy_source(imida, BuoySource::IMIDA)));
    else if (!cfg.buoy_upct.empty())
        merged = bin_depths(load_buoy_source(upct, BuoySource::UPCT));
    else
        merged = bin_depths(load_buoy_source(imida, BuoySource::IMIDA));

    std::vector<std::string> outputs;
    for (int b = 0; b < kNumDepthBins; ++b) {
        const auto path = depth_csv_path(cfg, b);
        fs::create_directories(fs::path(path).parent_path());
        write_depth_table_csv(merged, b, path);
        outputs.push_back(path);
    }

    auto catalog = filter_scenes(load_scene_catalog(catalog_path), cfg.max_cloud_pct,
                                 cfg.min_valid_fraction, cfg.excluded_dates);
    const auto scenes_path = out_path(cfg, "scenes.json");
    fs::create_directories(fs::path(scenes_path).parent_path());
    write_scene_catalog(catalog, scenes_path);
    outputs.push_back(scenes_path);

    write_stage_manifest(cfg, "ingest", input_hash, outputs);
    std::cout << "ingest: " << catalog.size() << " scenes, " << merged.rows.size()
              << " binned buoy rows\n";
    return 0;
}

int cmd_features(const PipelineConfig& cfg, int n_threads) {
    const auto catalog = load_filtered_catalog(cfg);
    std::vector<std::string> inputs = {out_path(cfg, "scenes.json")};
    for (int d : cfg.depth_bins) {
        require_file(depth_csv_path(cfg, d), "binned buoy CSV (ingest output)");
        inputs.push_back(depth_csv_path(cfg, d));
    }
    for (const auto& e : catalog) inputs.push_back(cfg.resolve(e.path));
    std::sort(inputs.begin(), inputs.end());
    inputs.erase(std::unique(inputs.begin(), inputs.end()), inputs.end());
    const auto input_hash = combine_hashes(cfg.config_hash, inputs);
    if (stage_up_to_date(cfg, "features", input_hash)) {
        std::cout << "features: up to date\n";
        return 0;
    }

    std::map<int, BuoyDepthTable> buoys;
    for (int d : cfg.depth_bins) buoys[d] = read_depth_table_csv(depth_csv_path(cfg, d), d);

    SceneCache cache;
    for (const auto& e : catalog) cache.get(cfg, e.path); // load sequentially

    const auto grid = dataset_grid(cfg);
    std::vector<FeatureTable> tables(grid.size());
    parallel_for(grid.size(), n_threads, [&](std::size_t i) {
        const auto& g = grid[i];
        std::vector<std::pair<std::string, const BandStack*>> scenes;
        for (const auto& e : scenes_for_set(catalog, g.set))
            scenes.push_back({e.date, &cache.stacks.at(cfg.resolve(e.path))});
        tables[i] = build_dataset(buoys.at(g.depth), scenes, g.set, g.window, g.depth);
    });

    std::vector<std::string> outputs;
    fs::create_directories(out_path(cfg, "datasets"));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto path = dataset_path(cfg, grid[i].dataset_id);
        write_feature_table_csv(tables[i], path);
        outputs.push_back(path);
    }
    write_stage_manifest(cfg, "features", input_hash, outputs);
    std::cout << "features: " << outputs.size() << " dataset files\n";
    return 0;
}

int cmd_train(const PipelineConfig& cfg, int n_threads) {
    const auto grid = dataset_grid(cfg);
    std::vector<std::string> inputs;
    for (const auto& g : grid) {
        require_file(dataset_path(cfg, g.dataset_id), "dataset file (features output)");
        inputs.push_back(dataset_path(cfg, g.dataset_id));
    }
    const auto input_hash = combine_hashes(cfg.config_hash, inputs);
    if (stage_up_to_date(cfg, "train", input_hash)) {
        std::cout << "train: up to date\n";
        return 0;
    }

    std::vector<FeatureTable> tables(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        tables[i] = read_feature_table_csv(dataset_path(cfg, grid[i].dataset_id));

    // Preliminary stage: default hyperparameters on every dataset. The outer
    // loop parallelizes across datasets; fits stay single-threaded so results
    // are independent of the worker count.
    std::vector<DatasetTrainResult> prelim(grid.size());
    parallel_for(grid.size(), n_threads,
                 [&](std::size_t i) { prelim[i] = train_dataset(cfg, tables[i], false, 1); });

    json prelim_json = json::array();
    std::vector<EvalReport> prelim_reports;
    for (const auto& r : prelim)
        for (const auto& rep : r.reports) {
            prelim_json.push_back(rep.to_json());
            prelim_reports.push_back(rep);
        }
    write_json(out_path(cfg, "reports/preliminary.json"), prelim_json);
    std::vector<std::string> outputs = {out_path(cfg, "reports/preliminary.json")};

    // Ranking per depth, top N per processing method.
    std::set<std::string> selected_ids;
    for (int d : cfg.depth_bins) {
        std::vector<EvalReport> depth_reports;
        for (const auto& r : prelim_reports)
            if (!r.failed && dataset_depth_bin(r.dataset_id) == d) depth_reports.push_back(r);
        const auto ranked = rank_datasets(depth_reports, cfg.per_processor_top);
        json jr = json::array();
        for (const auto& dr : ranked) {
            jr.push_back({{"dataset_id", dr.dataset_id},
                          {"processor", dr.processor},
                          {"best_val_r2", dr.best_val_r2},
                          {"best_val_rmse", dr.best_val_rmse}});
            selected_ids.insert(dr.dataset_id);
        }
        const auto path = out_path(cfg, "reports/ranking_depth_" + depth_bin_label(d) + ".json");
        write_json(path, jr);
        outputs.push_back(path);
    }

    // Final stage: hyperparameter search on the ranked datasets.
    if (cfg.search_budget > 0) {
        std::vector<std::size_t> chosen;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (selected_ids.count(grid[i].dataset_id)) chosen.push_back(i);
        std::vector<DatasetTrainResult> finals(chosen.size());
        parallel_for(chosen.size(), n_threads, [&](std::size_t i) {
            finals[i] = train_dataset(cfg, tables[chosen[i]], true, 1);
        });
        json final_json = json::array();
        for (const auto& r : finals)
            for (const auto& rep : r.reports) final_json.push_back(rep.to_json());
        write_json(out_path(cfg, "reports/final.json"), final_json);
        outputs.push_back(out_path(cfg, "reports/final.json"));
    }

    write_stage_manifest(cfg, "train", input_hash, outputs);
    std::cout << "train: " << prelim_reports.size() << " preliminary reports\n";
    return 0;
}

int cmd_select(const PipelineConfig& cfg, int n_threads) {
    require_file(out_path(cfg, "reports/preliminary.json"), "training reports (train output)");
    const auto reports = load_effective_reports(cfg);

    std::vector<std::string> inputs = {out_path(cfg, "reports/preliminary.json")};
    if (fs::exists(out_path(cfg, "reports/final.json")))
        inputs.push_back(out_path(cfg, "reports/final.json"));
    const auto input_hash = combine_hashes(cfg.config_hash, inputs);
    if (stage_up_to_date(cfg, "select", input_hash)) {
        std::cout << "select: up to date\n";
        return 0;
    }

    json selection = json::object();
    std::vector<std::string> outputs;
    for (int d : cfg.depth_bins) {
        const EvalReport* best = nullptr;
        for (const auto& r : reports) {
            if (r.failed || r.model_label == "ENS") continue;
            if (dataset_depth_bin(r.dataset_id) != d) continue;
            if (!best || r.val_r2 > best->val_r2 ||
                (r.val_r2 == best->val_r2 &&
                 std::tie(r.val_rmse, r.dataset_id, r.model_label) <
                     std::tie(best->val_rmse, best->dataset_id, best->model_label)))
                best = &r;
        }
        if (!best) throw domain_error("no successful model for depth bin " + depth_bin_label(d));

        // Refit on all rows of the winning dataset with the winning
        // hyperparameters; screening repeated on the full table.
        const auto table = read_feature_table_csv(dataset_path(cfg, best->dataset_id));
        std::vector<std::size_t> all_rows(table.n_rows());
        std::iota(all_rows.begin(), all_rows.end(), 0);
        const auto retained = screen_features(table, all_rows, cfg.top_k_screening);
        Matrix X(table.n_rows(), std::vector<double>(retained.size()));
        for (std::size_t i = 0; i < table.n_rows(); ++i)
            for (std::size_t j = 0; j < retained.size(); ++j)
                X[i][j] = table.values[i][static_cast<std::size_t>(
                    table.column_index(retained[j]))];

        ModelSpec spec;
        spec.kind = best->kind;
        spec.hyper = best->hyper;
        spec.seed = derive_seed(cfg.seed, "final:" + best->model_label + ":" + best->dataset_id);
        const auto model = fit_model(spec, X, table.target, retained, n_threads);

        const auto model_file = out_path(cfg, "models/depth_" + depth_bin_label(d) + ".json");
        fs::create_directories(fs::path(model_file).parent_path());
        save_model_file(model, model_file);
        outputs.push_back(model_file);

        // The dataset id encodes <set label>_<w>x<w>_depth_in_<bin>.
        const auto& id = best->dataset_id;
        const auto depth_pos = id.rfind("_depth_in_");
        const auto wpos = id.rfind('_', depth_pos - 1);
        const auto wtoken = id.substr(wpos + 1, depth_pos - wpos - 1);
        selection[depth_bin_label(d)] = {
            {"dataset_id", id},
            {"set_label", id.substr(0, wpos)},
            {"window", std::stoi(wtoken.substr(0, wtoken.find('x')))},
            {"model_label", best->model_label},
            {"kind", model_kind_name(best->kind)},
            {"hyper", best->hyper},
            {"val_r2", best->val_r2},
            {"test_r2", best->test_r2},
            {"model_path", model_file}};
    }

    const auto sel_path = out_path(cfg, "selection.json");
    write_json(sel_path, selection);
    outputs.push_back(sel_path);
    write_stage_manifest(cfg, "select", input_hash, outputs);
    std::cout << "select: " << cfg.depth_bins.size() << " depth bins\n";
    return 0;
}

int cmd_infer(const PipelineConfig& cfg, const std::string& date, int n_threads) {
    validate_date(date);
    const auto sel_path = out_path(cfg, "selection.json");
    require_file(sel_path, "model selection (select output)");
    const auto mask_path = cfg.resolve(cfg.lagoon_mask);
    require_file(mask_path, "lagoon mask GeoJSON");
    const auto selection = read_json(sel_path);
    const auto catalog = load_filtered_catalog(cfg);

    std::vector<std::string> inputs = {sel_path, mask_path, out_path(cfg, "scenes.json")};
    for (const auto& e : catalog)
        if (e.date == date) inputs.push_back(cfg.resolve(e.path));
    for (int d : cfg.depth_bins)
        inputs.push_back(selection.at(depth_bin_label(d)).at("model_path").get<std::string>());
    std::sort(inputs.begin(), inputs.end());
    inputs.erase(std::unique(inputs.begin(), inputs.end()), inputs.end());
    const auto input_hash = combine_hashes(cfg.config_hash, inputs);
    const auto stage = "infer_" + date;
    if (stage_up_to_date(cfg, stage, input_hash)) {
        std::cout << "infer " << date << ": up to date\n";
        return 0;
    }

    const auto polygons = read_geojson(mask_path);
    SceneCache cache;
    std::vector<std::string> outputs;
    fs::create_directories(out_path(cfg, "maps"));

    for (int d : cfg.depth_bins) {
        const auto& sel = selection.at(depth_bin_label(d));
        const auto set =
            reflectance_set(reflectance_kind_from_label(sel.at("set_label").get<std::string>()));
        const int window = sel.at("window").get<int>();
        const auto model = load_model_file(sel.at("model_path").get<std::string>());

        // The scene feeding this set's processor on the requested date.
        const auto candidates = scenes_for_set(catalog, set);
        const SceneCatalogEntry* entry = nullptr;
        for (const auto& e : candidates)
            if (e.date == date) entry = &e;
        if (!entry)
            throw missing_input_error("no scene on " + date + " for processor '" +
                                      set.processor() + "' in the filtered catalog");
        const auto* stack = cache.get(cfg, entry->path);

        auto mask = rasterize_polygon(polygons, *stack);
        if (cfg.mask_erosion > 0)
            mask = erode_mask(mask, stack->width, stack->height, cfg.mask_erosion);

        std::vector<std::string> keep = model.feature_names;
        const auto table = extract_all_pixels(*stack, mask, set, window, &keep, n_threads);
        auto map = predict_map(model, table, *stack, n_threads);
        map.depth_bin = d;
        map.date = date;
        map.dataset_id = sel.at("dataset_id").get<std::string>();
        map.model_label = sel.at("model_label").get<std::string>();

        const auto base = out_path(cfg, "maps/" + date + "_depth_" + depth_bin_label(d));
        write_map_bsf(map, base + ".bsf");
        write_map_geotiff(map, base + ".tif");
        const auto render = render_png(map, base + ".png", default_palette(), cfg.render.gamma,
                                       cfg.render.chl_max);
        write_json(base + ".colorbar.json",
                   colorbar_json(default_palette(), cfg.render.gamma, render.chl_max));
        write_json(base + ".provenance.json", map_provenance(map, cfg.config_hash));
        for (const auto* ext : {".bsf", ".tif", ".png", ".colorbar.json", ".provenance.json"})
            outputs.push_back(base + ext);
    }

    write_stage_manifest(cfg, stage, input_hash, outputs);
    std::cout << "infer " << date << ": " << cfg.depth_bins.size() << " maps\n";
    return 0;
}

int cmd_report(const PipelineConfig& cfg, int /*n_threads*/) {
    require_file(out_path(cfg, "reports/preliminary.json"), "training reports (train output)");
    const auto reports = load_effective_reports(cfg);

    std::vector<std::string> inputs = {out_path(cfg, "reports/preliminary.json")};
    if (fs::exists(out_path(cfg, "reports/final.json")))
        inputs.push_back(out_path(cfg, "reports/final.json"));
    const auto input_hash = combine_hashes(cfg.config_hash, inputs);
    if (stage_up_to_date(cfg, "report", input_hash)) {
        std::cout << "report: up to date\n";
        return 0;
    }

    std::vector<std::string> outputs;
    fs::create_directories(out_path(cfg, "tables"));
    for (int d : cfg.depth_bins) {
        std::vector<EvalReport> depth_reports;
        for (const auto& r : reports)
            if (dataset_depth_bin(r.dataset_id) == d) depth_reports.push_back(r);

        // Table rows: the 10 best datasets for this depth across processors.
        std::vector<EvalReport> ok;
        for (const auto& r : depth_reports)
            if (!r.failed) ok.push_back(r);
        auto ranked = rank_datasets(ok, cfg.per_processor_top);
        std::sort(ranked.begin(), ranked.end(), [](const DatasetRank& a, const DatasetRank& b) {
            if (a.best_val_r2 != b.best_val_r2) return a.best_val_r2 > b.best_val_r2;
            if (a.best_val_rmse != b.best_val_rmse) return a.best_val_rmse < b.best_val_rmse;
            return a.dataset_id < b.dataset_id;
        });
        if (ranked.size() > 10) ranked.resize(10);

        std::map<std::pair<std::string, std::string>, const EvalReport*> cell;
        for (const auto& r : depth_reports)
            if (!r.failed) cell[{r.dataset_id, r.model_label}] = &r;

        for (const auto* metric : {"r2", "rmse"}) {
            std::ostringstream csv;
            json jt = json::object();
            csv << "dataset";
            for (const auto& c : report_columns()) csv << ',' << c;
            csv << '\n';
            for (const auto& row : ranked) {
                csv << row.dataset_id;
                json jrow = json::object();
                for (const auto& c : report_columns()) {
                    const auto it = cell.find({row.dataset_id, c});
                    if (it == cell.end()) {
                        csv << ",NA";
                        jrow[c] = nullptr;
                    } else {
                        const double v = std::string(metric) == "r2" ? it->second->test_r2
                                                                     : it->second->test_rmse;
                        csv << ',' << v;
                        jrow[c] = v;
                    }
                }
                csv << '\n';
                jt[row.dataset_id] = jrow;
            }
            const auto base =
                out_path(cfg, "tables/" + std::string(metric) + "_depth_" + depth_bin_label(d));
            write_text(base + ".csv", csv.str());
            write_json(base + ".json", jt);
            outputs.push_back(base + ".csv");
            outputs.push_back(base + ".json");
        }
    }

    write_stage_manifest(cfg, "report", input_hash, outputs);
    std::cout << "report: tables for " << cfg.depth_bins.size() << " depth bins\n";
    return 0;
}

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Mar Menor chlorophyll-a retrieval pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    int n_threads = 1;
    std::uint64_t seed_override = 0;
    bool has_seed_override = false;
    app.add_option("--config", config_path, "pipeline configuration JSON")->required();
    app.add_option("--threads", n_threads, "worker thread cap");
    auto* seed_opt = app.add_option("--seed", seed_override, "override the config seed");

    std::string infer_date;
    auto* c_ingest = app.add_subcommand("ingest", "merge buoy sources, filter scenes");
    auto* c_features = app.add_subcommand("features", "build the dataset grid");
    auto* c_train = app.add_subcommand("train", "cross-validate the model roster");
    auto* c_select = app.add_subcommand("select", "pick and refit per-depth models");
    auto* c_infer = app.add_subcommand("infer", "predict full-lagoon maps for a date");
    c_infer->add_option("--date", infer_date, "scene date YYYY-MM-DD")->required();
    auto* c_report = app.add_subcommand("report", "emit metric tables");

    // Global options may follow the subcommand (ingest --config ...).
    for (auto* sub : {c_ingest, c_features, c_train, c_select, c_infer, c_report})
        sub->fallthrough();

    // CLI11 expects argv-style ordering.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::ostringstream dummy;
        const int code = app.exit(e, dummy, dummy);
        std::cerr << dummy.str();
        return code == 0 ? 0 : 2;
    }
    has_seed_override = seed_opt->count() > 0;

    try {
        auto cfg = load_config(config_path);
        if (has_seed_override) cfg.seed = seed_override;
        if (n_threads < 1) throw config_error("--threads must be >= 1");

        if (c_ingest->parsed()) return cmd_ingest(cfg, n_threads);
        if (c_features->parsed()) return cmd_features(cfg, n_threads);
        if (c_train->parsed()) return cmd_train(cfg, n_threads);
        if (c_select->parsed()) return cmd_select(cfg, n_threads);
        if (c_infer->parsed()) return cmd_infer(cfg, infer_date, n_threads);
        if (c_report->parsed()) return cmd_report(cfg, n_threads);
        return 2;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const missing_input_error& e) {
        std::cerr << "missing input: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace chl
