// gridcast command-line entry point: synthesize, ingest, train, predict,
// evaluate, cluster. Commands communicate through documented file formats
// only; a fixed config and seed reproduce every output byte for byte.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridcast/baselines.hpp"
#include "gridcast/config.hpp"
#include "gridcast/convlstm.hpp"
#include "gridcast/cube.hpp"
#include "gridcast/ensemble.hpp"
#include "gridcast/evaluation.hpp"
#include "gridcast/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridcast;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out;
    std::string seed_override;
    int workers = 0;
};

RunConfig load_config(const CommonArgs& args) {
    Config cfg = Config::parse_file(args.config_path);
    if (!args.seed_override.empty()) cfg.set("seed", args.seed_override);
    RunConfig rc = RunConfig::from(cfg);
    kernels::set_backend(kernels::parse_backend(rc.kernels));
    return rc;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out = true) {
    cmd->add_option("--config", args.config_path, "run config file")
        ->required();
    cmd->add_option("--seed", args.seed_override, "override the config seed");
    cmd->add_option("--workers", args.workers,
                    "worker threads for per-window training (default: cores)");
    if (needs_out)
        cmd->add_option("--out", args.out, "output directory")->required();
}

evaluation::ForecastGrid predictions_to_grid(
    const SpaceTimeCube& cube, int week_begin, int week_end,
    const std::function<std::vector<double>(int)>& predict_week) {
    evaluation::ForecastGrid grid;
    grid.width = cube.grid.width;
    grid.height = cube.grid.height;
    grid.week_begin = week_begin;
    grid.week_end = week_end;
    grid.values.assign(static_cast<std::size_t>(grid.cells()) * grid.weeks(),
                       kNull);
    for (int t = week_begin; t < week_end; ++t) {
        auto pred = predict_week(t);
        for (int c = 0; c < grid.cells(); ++c) grid.at(c, t) = pred[c];
    }
    return grid;
}

std::string archive_model_kind(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw std::runtime_error("cannot open " + dir + "/manifest.json");
    json manifest = json::parse(in);
    if (manifest.value("format", "") == "gridcast-ensemble") return "ensemble";
    return manifest.value("meta", json::object()).value("model", "");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridcast: grid-level weekly crash-risk forecasting"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string crashes_path, features_path, cube_dir, model_dir, labels_path;
    std::vector<std::string> forecast_paths;
    std::string baseline_kind;
    bool force = false;

    auto* synth = app.add_subcommand("synth", "generate a synthetic cube");
    add_common(synth, args);

    auto* ingest = app.add_subcommand("ingest", "build a cube from CSV data");
    add_common(ingest, args);
    ingest->add_option("--crashes", crashes_path, "crash CSV")->required();
    ingest->add_option("--features", features_path,
                       "static feature CSV (road_length plus extras)");

    auto* train_ens =
        app.add_subcommand("train-ensemble", "train the windowed ensemble");
    add_common(train_ens, args);
    train_ens->add_option("--cube", cube_dir, "cube archive")->required();

    auto* train_base =
        app.add_subcommand("train-baseline", "train a baseline model");
    add_common(train_base, args);
    train_base
        ->add_option("--model", baseline_kind,
                     "one of lr | arima | convlstm-global")
        ->required();
    train_base->add_option("--cube", cube_dir, "cube archive")->required();

    auto* predict = app.add_subcommand(
        "predict", "one-step-ahead forecasts over the test weeks");
    add_common(predict, args);
    predict->add_option("--cube", cube_dir, "cube archive")->required();
    predict->add_option("--model", model_dir, "model archive")->required();
    predict->add_flag("--force", force, "skip the config hash check");

    auto* evaluate = app.add_subcommand(
        "evaluate", "score forecasts against a truth cube");
    add_common(evaluate, args);
    evaluate->add_option("--cube", cube_dir, "truth cube archive")->required();
    evaluate
        ->add_option("--forecast", forecast_paths,
                     "forecast CSV (repeatable)")
        ->required();
    evaluate->add_option("--labels", labels_path, "cluster labels CSV");

    auto* cluster =
        app.add_subcommand("cluster", "derive risk-zone clusters via DTW");
    add_common(cluster, args);
    cluster->add_option("--cube", cube_dir, "cube archive")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig rc = load_config(args);
        int workers = args.workers > 0
                          ? args.workers
                          : std::max(1u, std::thread::hardware_concurrency());

        if (*synth) {
            SpaceTimeCube cube =
                synth_cube(rc.grid, rc.weeks, rc.regimes, rc.seed);
            save_cube(args.out, cube);
            write_run_manifest(args.out, rc, "synth");
        } else if (*ingest) {
            GridSpec grid = rc.grid;
            SpaceTimeCube cube;
            if (!features_path.empty()) {
                FeatureTable table = load_features_csv(features_path, grid);
                grid.road_length_miles = table.road_length;
                cube = build_cube(load_crash_csv(crashes_path), grid,
                                  rc.weights, rc.weeks);
                cube.feature_names = table.names;
                cube.features = table.values;
            } else {
                cube = build_cube(load_crash_csv(crashes_path), grid,
                                  rc.weights, rc.weeks);
            }
            save_cube(args.out, cube);
            write_run_manifest(args.out, rc, "ingest");
        } else if (*train_ens) {
            SpaceTimeCube cube = load_cube(cube_dir);
            auto part = ensemble::partition(cube.grid, rc.window_width,
                                            rc.window_height, rc.stride_x,
                                            rc.stride_y);
            ensemble::EnsembleModel model;
            model.weight_eps = rc.weight_eps;
            model.mse_filter_multiple = rc.mse_filter_multiple;
            model.persistence_fallback = rc.persistence_fallback;
            {
                ensemble::EnsembleModel trained = ensemble::train_ensemble(
                    cube, rc.split(), part.windows, rc.train, rc.seed, workers);
                trained.weight_eps = model.weight_eps;
                trained.mse_filter_multiple = model.mse_filter_multiple;
                trained.persistence_fallback = model.persistence_fallback;
                model = std::move(trained);
            }
            ensemble::save_ensemble(args.out, model);
            write_run_manifest(args.out, rc, "train-ensemble");
        } else if (*train_base) {
            SpaceTimeCube cube = load_cube(cube_dir);
            SplitIndex split = rc.split();
            if (baseline_kind == "lr") {
                auto model = baselines::fit_lr(cube, split, rc.lr_lookback,
                                               rc.lr_ridge);
                baselines::save_lr(args.out, model);
            } else if (baseline_kind == "arima") {
                auto grid = baselines::fit_arima_grid(cube, split,
                                                      rc.arima_order);
                baselines::save_arima_grid(args.out, grid);
            } else if (baseline_kind == "convlstm-global") {
                convlstm::Region whole{0, 0, cube.grid.width, cube.grid.height};
                auto model =
                    convlstm::train_region(cube, whole, split, rc.train);
                convlstm::save_region_model(args.out, model);
            } else {
                throw std::runtime_error("unknown baseline: " + baseline_kind);
            }
            write_run_manifest(args.out, rc, "train-baseline " + baseline_kind);
        } else if (*predict) {
            SpaceTimeCube cube = load_cube(cube_dir);
            SplitIndex split = rc.split();
            std::string model_hash = read_manifest_hash(model_dir);
            if (!force && !model_hash.empty() && model_hash != rc.config_hash)
                throw std::runtime_error(
                    "model archive " + model_dir +
                    " was produced with a different config (hash " +
                    model_hash + "); pass --force to override");
            std::string kind = archive_model_kind(model_dir);
            evaluation::ForecastGrid grid;
            if (kind == "ensemble") {
                auto model = ensemble::load_ensemble(model_dir);
                grid = ensemble::predict_ensemble(model, cube, split.test_begin,
                                                  split.test_end);
            } else if (kind == "lr") {
                auto model = baselines::load_lr(model_dir);
                grid = predictions_to_grid(
                    cube, split.test_begin, split.test_end,
                    [&](int t) { return baselines::predict_lr(model, cube, t); });
            } else if (kind == "arima-grid") {
                auto model = baselines::load_arima_grid(model_dir);
                grid = predictions_to_grid(cube, split.test_begin,
                                           split.test_end, [&](int t) {
                    return baselines::predict_arima_grid(model, cube, t);
                });
            } else if (kind == "convlstm-region") {
                auto model = convlstm::load_region_model(model_dir);
                grid = predictions_to_grid(cube, split.test_begin,
                                           split.test_end, [&](int t) {
                    auto local = convlstm::predict_region(model, cube, t);
                    std::vector<double> full(cube.grid.cells(), kNull);
                    for (int y = 0; y < model.region.height; ++y)
                        for (int x = 0; x < model.region.width; ++x) {
                            int c = cube.grid.index(model.region.x0 + x,
                                                    model.region.y0 + y);
                            if (cube.grid.has_road(c))
                                full[c] = local[y * model.region.width + x];
                        }
                    return full;
                });
            } else {
                throw std::runtime_error(model_dir +
                                         ": unrecognized model archive");
            }
            fs::create_directories(args.out);
            evaluation::save_forecast_csv(
                (fs::path(args.out) / "forecast.csv").string(), grid);
            write_run_manifest(args.out, rc, "predict");
        } else if (*evaluate) {
            SpaceTimeCube cube = load_cube(cube_dir);
            evaluation::ClusterLabels labels;
            bool have_labels = !labels_path.empty();
            if (have_labels)
                labels = evaluation::load_labels_csv(labels_path, cube.grid);
            fs::create_directories(args.out);
            json reports = json::object();
            for (const auto& path : forecast_paths) {
                auto forecast = evaluation::load_forecast_csv(
                    path, cube.grid.width, cube.grid.height);
                auto report = evaluation::score(
                    forecast, cube, have_labels ? &labels : nullptr);
                report.metadata = {{"forecast", fs::path(path).filename().string()},
                                   {"config_hash", rc.config_hash},
                                   {"seed", rc.seed},
                                   {"tool_version", kToolVersion}};
                auto curve =
                    evaluation::crossk_evaluate(forecast, cube, rc.eval_radii);
                std::string name = fs::path(path).stem().string();
                evaluation::save_crossk_csv(
                    (fs::path(args.out) / ("crossk_" + name + ".csv")).string(),
                    curve);
                json entry = report.to_json();
                entry["crossk_weeks_used"] = curve.weeks_used;
                reports[name] = entry;
            }
            std::ofstream out(fs::path(args.out) / "report.json");
            out << reports.dump(2) << "\n";
            write_run_manifest(args.out, rc, "evaluate");
        } else if (*cluster) {
            SpaceTimeCube cube = load_cube(cube_dir);
            auto labels = evaluation::cluster_dtw(cube, rc.split(),
                                                  rc.cluster_count, rc.seed);
            fs::create_directories(args.out);
            evaluation::save_labels_csv(
                (fs::path(args.out) / "labels.csv").string(), labels,
                cube.grid);
            write_run_manifest(args.out, rc, "cluster");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
