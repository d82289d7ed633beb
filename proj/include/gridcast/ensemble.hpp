#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/convlstm.hpp"
#include "gridcast/cube.hpp"
#include "gridcast/evaluation.hpp"

// Overlapping spatial windows, per-window ConvLSTM training, and the
// weighted-average combiner over the models covering each cell.
namespace gridcast::ensemble {

struct Window {
    int x0 = 0, y0 = 0;
    int width = 0, height = 0;  // already clipped to the grid

    bool covers(int x, int y) const {
        return x >= x0 && x < x0 + width && y >= y0 && y < y0 + height;
    }
};

struct Partition {
    std::vector<Window> windows;
    std::vector<int> uncovered_cells;  // covered by zero windows
};

// Window origins at integer multiples of the stride, kept while the origin
// is strictly inside the grid; boundary windows are clipped, not dropped.
Partition partition(const GridSpec& grid, int window_w, int window_h,
                    int stride_x, int stride_y);

struct WindowModel {
    Window window;
    convlstm::RegionModel model;
    double weight = 0.0;  // 1 / (validation_mse + eps)
};

struct EnsembleModel {
    std::vector<WindowModel> models;
    std::vector<int> skipped_windows;  // indices into the original partition
    double weight_eps = 1e-6;
    // optional skill filter: drop models whose validation MSE exceeds
    // `mse_filter_multiple` x median (0 disables)
    double mse_filter_multiple = 0.0;
    bool persistence_fallback = true;
};

// One train_region per window (seed = seed_base + window index), optionally
// across a worker pool; results are identical at any worker count.
EnsembleModel train_ensemble(const SpaceTimeCube& cube, const SplitIndex& split,
                             const std::vector<Window>& windows,
                             const convlstm::TrainConfig& cfg,
                             std::uint64_t seed_base, int workers = 1);

// Weighted average over covering models only; uncovered road cells fall back
// to persistence (last observed week) when enabled, otherwise error.
std::vector<double> combine(const EnsembleModel& model,
                            const std::vector<std::vector<double>>& predictions,
                            const GridSpec& grid);

evaluation::ForecastGrid predict_ensemble(const EnsembleModel& model,
                                          const SpaceTimeCube& cube,
                                          int week_begin, int week_end);

void save_ensemble(const std::string& dir, const EnsembleModel& model);
EnsembleModel load_ensemble(const std::string& dir);

}  // namespace gridcast::ensemble
