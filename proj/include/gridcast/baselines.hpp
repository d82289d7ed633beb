#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/cube.hpp"

// Reference forecasters: pooled ridge linear regression on lagged EPDO plus
// static features, and per-cell ARIMA fitted by conditional sum of squares
// with Nelder-Mead.
namespace gridcast::baselines {

struct LinearModel {
    int lookback = 8;
    int feature_count = 0;
    double ridge = 1e-6;
    // layout: [lag1..lagL, feature1..featureM, intercept]
    std::vector<double> coefficients;
};

// Pools samples over all road cells and training weeks; closed-form ridge
// solution. Throws when there are fewer samples than coefficients.
LinearModel fit_lr(const SpaceTimeCube& cube, const SplitIndex& split,
                   int lookback, double ridge = 1e-6);

// One-step-ahead forecast for `week` from true history; null cells stay
// null, predictions are clamped at zero.
std::vector<double> predict_lr(const LinearModel& model,
                               const SpaceTimeCube& cube, int week);

struct ArimaOrder {
    int p = 1, d = 0, q = 1;
};

struct ArimaModel {
    ArimaOrder order;
    std::vector<double> ar;  // phi_1..phi_p
    std::vector<double> ma;  // theta_1..theta_q
    double intercept = 0.0;
    double residual_variance = 0.0;
    bool mean_fallback = false;  // degenerate series, forecast = mean
    double fallback_mean = 0.0;
};

// Conditional-sum-of-squares fit: residual recursion with zero presample
// residuals, minimized by Nelder-Mead over (intercept, phi, theta).
// Constant or too-short series fall back to a flagged mean forecast.
ArimaModel fit_arima(const std::vector<double>& series, const ArimaOrder& order);

// Multi-step forecast from the end of the fitted series; inverts the d-fold
// differencing.
std::vector<double> forecast_arima(const ArimaModel& model,
                                   const std::vector<double>& series,
                                   int steps);

// One-step-ahead forecast of history[week] given true history[0..week).
double predict_arima_onestep(const ArimaModel& model,
                             const std::vector<double>& history, int week);

// Per-cell ARIMA over every road cell; null cells are skipped.
struct ArimaGrid {
    ArimaOrder order;
    std::vector<ArimaModel> models;  // one per cell; unused for null cells
    std::vector<bool> fitted;
};

ArimaGrid fit_arima_grid(const SpaceTimeCube& cube, const SplitIndex& split,
                         const ArimaOrder& order);
std::vector<double> predict_arima_grid(const ArimaGrid& grid,
                                       const SpaceTimeCube& cube, int week);

void save_lr(const std::string& dir, const LinearModel& model);
LinearModel load_lr(const std::string& dir);
void save_arima_grid(const std::string& dir, const ArimaGrid& grid);
ArimaGrid load_arima_grid(const std::string& dir);

}  // namespace gridcast::baselines
