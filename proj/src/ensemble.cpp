#include "gridcast/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace gridcast::ensemble {

namespace fs = std::filesystem;
using nlohmann::json;

Partition partition(const GridSpec& grid, int window_w, int window_h,
                    int stride_x, int stride_y) {
    if (window_w < 1 || window_h < 1 || stride_x < 1 || stride_y < 1)
        throw std::invalid_argument("window and stride must be >= 1");
    Partition part;
    for (int y0 = 0; y0 < grid.height; y0 += stride_y)
        for (int x0 = 0; x0 < grid.width; x0 += stride_x)
            part.windows.push_back({x0, y0,
                                    std::min(window_w, grid.width - x0),
                                    std::min(window_h, grid.height - y0)});
    std::vector<bool> covered(grid.cells(), false);
    for (const Window& w : part.windows)
        for (int y = w.y0; y < w.y0 + w.height; ++y)
            for (int x = w.x0; x < w.x0 + w.width; ++x)
                covered[grid.index(x, y)] = true;
    for (int c = 0; c < grid.cells(); ++c)
        if (!covered[c]) part.uncovered_cells.push_back(c);
    return part;
}

EnsembleModel train_ensemble(const SpaceTimeCube& cube, const SplitIndex& split,
                             const std::vector<Window>& windows,
                             const convlstm::TrainConfig& cfg,
                             std::uint64_t seed_base, int workers) {
    if (windows.empty())
        throw std::invalid_argument("train_ensemble: no windows");
    workers = std::max(1, workers);

    std::vector<convlstm::RegionModel> trained(windows.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;
    auto work = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= windows.size() || failed.load()) return;
            const Window& w = windows[i];
            convlstm::TrainConfig wcfg = cfg;
            wcfg.seed = seed_base + i;
            try {
                trained[i] = convlstm::train_region(
                    cube, {w.x0, w.y0, w.width, w.height}, split, wcfg);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                failure = "window " + std::to_string(i) + ": " + e.what();
                failed.store(true);
                return;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failed.load()) throw std::runtime_error("train_ensemble: " + failure);

    EnsembleModel model;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (trained[i].skipped) {
            model.skipped_windows.push_back(static_cast<int>(i));
            continue;
        }
        WindowModel wm;
        wm.window = windows[i];
        wm.model = std::move(trained[i]);
        wm.weight = 1.0 / (wm.model.validation_mse + model.weight_eps);
        model.models.push_back(std::move(wm));
    }
    if (model.models.empty())
        throw std::runtime_error("train_ensemble: every window is roadless");

    if (model.mse_filter_multiple > 0.0 && model.models.size() > 1) {
        std::vector<double> mses;
        for (const auto& wm : model.models)
            mses.push_back(wm.model.validation_mse);
        std::sort(mses.begin(), mses.end());
        double median = mses[mses.size() / 2];
        double cutoff = model.mse_filter_multiple * median;
        std::erase_if(model.models, [&](const WindowModel& wm) {
            return wm.model.validation_mse > cutoff;
        });
    }
    return model;
}

std::vector<double> combine(const EnsembleModel& model,
                            const std::vector<std::vector<double>>& predictions,
                            const GridSpec& grid) {
    if (predictions.size() != model.models.size())
        throw std::invalid_argument("combine: one prediction per model required");
    std::vector<double> out(grid.cells(), kNull);
    std::vector<double> num(grid.cells(), 0.0), den(grid.cells(), 0.0);
    for (std::size_t i = 0; i < model.models.size(); ++i) {
        const Window& w = model.models[i].window;
        double weight = model.models[i].weight;
        const auto& pred = predictions[i];
        for (int y = 0; y < w.height; ++y)
            for (int x = 0; x < w.width; ++x) {
                double v = pred[y * w.width + x];
                if (is_null(v)) continue;
                int c = grid.index(w.x0 + x, w.y0 + y);
                num[c] += weight * v;
                den[c] += weight;
            }
    }
    for (int c = 0; c < grid.cells(); ++c) {
        if (!grid.has_road(c)) continue;
        if (den[c] > 0.0) {
            out[c] = num[c] / den[c];  // normalizer over covering models only
        } else if (!model.persistence_fallback) {
            throw std::runtime_error(
                "combine: cell (" + std::to_string(c % grid.width) + "," +
                std::to_string(c / grid.width) +
                ") covered by no model and fallback disabled");
        }
        // fallback cells stay null here; predict_ensemble fills them
    }
    return out;
}

evaluation::ForecastGrid predict_ensemble(const EnsembleModel& model,
                                          const SpaceTimeCube& cube,
                                          int week_begin, int week_end) {
    evaluation::ForecastGrid grid;
    grid.width = cube.grid.width;
    grid.height = cube.grid.height;
    grid.week_begin = week_begin;
    grid.week_end = week_end;
    grid.values.assign(static_cast<std::size_t>(grid.cells()) * grid.weeks(),
                       kNull);
    std::vector<bool> covered(cube.grid.cells(), false);
    for (const auto& wm : model.models)
        for (int y = wm.window.y0; y < wm.window.y0 + wm.window.height; ++y)
            for (int x = wm.window.x0; x < wm.window.x0 + wm.window.width; ++x)
                covered[cube.grid.index(x, y)] = true;

    for (int t = week_begin; t < week_end; ++t) {
        std::vector<std::vector<double>> predictions;
        predictions.reserve(model.models.size());
        for (const auto& wm : model.models)
            predictions.push_back(convlstm::predict_region(wm.model, cube, t));
        std::vector<double> merged = combine(model, predictions, cube.grid);
        for (int c = 0; c < cube.grid.cells(); ++c) {
            if (!cube.grid.has_road(c)) continue;
            if (!covered[c] && model.persistence_fallback && t > 0)
                merged[c] = cube.at(c, t - 1);
            grid.at(c, t) = merged[c];
        }
    }
    return grid;
}

void save_ensemble(const std::string& dir, const EnsembleModel& model) {
    fs::create_directories(dir);
    json windows = json::array();
    for (std::size_t i = 0; i < model.models.size(); ++i) {
        const auto& wm = model.models[i];
        char sub[32];
        std::snprintf(sub, sizeof(sub), "model_%03zu", i);
        windows.push_back({{"x0", wm.window.x0},
                           {"y0", wm.window.y0},
                           {"width", wm.window.width},
                           {"height", wm.window.height},
                           {"weight", wm.weight},
                           {"dir", sub}});
        convlstm::save_region_model((fs::path(dir) / sub).string(), wm.model);
    }
    json manifest = {{"format", "gridcast-ensemble"},
                     {"version", 1},
                     {"models", windows},
                     {"skipped_windows", model.skipped_windows},
                     {"weight_eps", model.weight_eps},
                     {"mse_filter_multiple", model.mse_filter_multiple},
                     {"persistence_fallback", model.persistence_fallback}};
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

EnsembleModel load_ensemble(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot open " + dir + "/manifest.json");
    json manifest = json::parse(mf);
    if (manifest.value("format", "") != "gridcast-ensemble")
        throw std::runtime_error(dir + ": not an ensemble archive");
    EnsembleModel model;
    model.skipped_windows =
        manifest.at("skipped_windows").get<std::vector<int>>();
    model.weight_eps = manifest.at("weight_eps").get<double>();
    model.mse_filter_multiple = manifest.at("mse_filter_multiple").get<double>();
    model.persistence_fallback = manifest.at("persistence_fallback").get<bool>();
    for (const auto& e : manifest.at("models")) {
        WindowModel wm;
        wm.window = {e.at("x0").get<int>(), e.at("y0").get<int>(),
                     e.at("width").get<int>(), e.at("height").get<int>()};
        wm.weight = e.at("weight").get<double>();
        wm.model = convlstm::load_region_model(
            (fs::path(dir) / e.at("dir").get<std::string>()).string());
        model.models.push_back(std::move(wm));
    }
    return model;
}

}  // namespace gridcast::ensemble
