#include "gridcast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "gridcast/archive.hpp"

namespace gridcast::baselines {

namespace {

// Cholesky solve of the (symmetric positive definite) normal equations;
// dimensions here are tiny (lags + features + 1).
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b,
                              int n) {
    for (int j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (int k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (d <= 0.0) throw std::runtime_error("normal equations not SPD");
        d = std::sqrt(d);
        a[j * n + j] = d;
        for (int i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / d;
        }
    }
    // forward then backward substitution
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
        b[i] = s / a[i * n + i];
    }
    return b;
}

}  // namespace

LinearModel fit_lr(const SpaceTimeCube& cube, const SplitIndex& split,
                   int lookback, double ridge) {
    if (lookback < 1) throw std::invalid_argument("lookback must be >= 1");
    int m = cube.feature_count();
    int dim = lookback + m + 1;
    std::vector<double> xtx(static_cast<std::size_t>(dim) * dim, 0.0);
    std::vector<double> xty(dim, 0.0);
    std::vector<double> x(dim);
    long samples = 0;
    for (int c = 0; c < cube.grid.cells(); ++c) {
        if (!cube.grid.has_road(c)) continue;
        for (int t = split.train_begin + lookback; t < split.train_end; ++t) {
            double y = cube.at(c, t);
            if (is_null(y)) continue;
            bool ok = true;
            for (int l = 0; l < lookback; ++l) {
                x[l] = cube.at(c, t - 1 - l);
                if (is_null(x[l])) ok = false;
            }
            if (!ok) continue;
            for (int k = 0; k < m; ++k) x[lookback + k] = cube.feature(k, c);
            x[dim - 1] = 1.0;
            for (int i = 0; i < dim; ++i) {
                xty[i] += x[i] * y;
                for (int j = 0; j <= i; ++j) xtx[i * dim + j] += x[i] * x[j];
            }
            ++samples;
        }
    }
    if (samples < dim)
        throw std::runtime_error("fit_lr: fewer samples than coefficients");
    for (int i = 0; i < dim; ++i) {
        xtx[i * dim + i] += ridge;
        for (int j = i + 1; j < dim; ++j) xtx[i * dim + j] = xtx[j * dim + i];
    }
    LinearModel model;
    model.lookback = lookback;
    model.feature_count = m;
    model.ridge = ridge;
    model.coefficients = solve_spd(std::move(xtx), std::move(xty), dim);
    return model;
}

std::vector<double> predict_lr(const LinearModel& model,
                               const SpaceTimeCube& cube, int week) {
    if (week < model.lookback)
        throw std::invalid_argument("predict_lr: not enough history");
    int dim = model.lookback + model.feature_count + 1;
    std::vector<double> out(cube.grid.cells(), kNull);
    for (int c = 0; c < cube.grid.cells(); ++c) {
        if (!cube.grid.has_road(c)) continue;
        double acc = model.coefficients[dim - 1];
        bool ok = true;
        for (int l = 0; l < model.lookback; ++l) {
            double v = cube.at(c, week - 1 - l);
            if (is_null(v)) { ok = false; break; }
            acc += model.coefficients[l] * v;
        }
        if (!ok) continue;
        for (int k = 0; k < model.feature_count; ++k)
            acc += model.coefficients[model.lookback + k] * cube.feature(k, c);
        out[c] = std::max(0.0, acc);
    }
    return out;
}

namespace {

std::vector<double> difference(std::vector<double> y, int d) {
    for (int r = 0; r < d; ++r) {
        for (std::size_t i = 0; i + 1 < y.size(); ++i) y[i] = y[i + 1] - y[i];
        y.pop_back();
    }
    return y;
}

// CSS objective: residual recursion with zero presample residuals, summed
// from t = p. Unstable parameter regions get a barrier value.
double css(const std::vector<double>& z, const ArimaOrder& order,
           const std::vector<double>& params, std::vector<double>* resid_out) {
    int p = order.p, q = order.q;
    double c = params[0];
    double abs_ar = 0.0, abs_ma = 0.0;
    for (int i = 0; i < p; ++i) abs_ar += std::abs(params[1 + i]);
    for (int j = 0; j < q; ++j) abs_ma += std::abs(params[1 + p + j]);
    if (abs_ar >= 1.0 || abs_ma >= 1.0)
        return 1e12 * (1.0 + abs_ar + abs_ma);
    int n = static_cast<int>(z.size());
    std::vector<double> e(n, 0.0);
    double sse = 0.0;
    for (int t = p; t < n; ++t) {
        double pred = c;
        for (int i = 0; i < p; ++i) pred += params[1 + i] * z[t - 1 - i];
        for (int j = 0; j < q; ++j)
            if (t - 1 - j >= p) pred += params[1 + p + j] * e[t - 1 - j];
        e[t] = z[t] - pred;
        sse += e[t] * e[t];
    }
    if (!std::isfinite(sse)) return 1e15;
    if (resid_out) *resid_out = std::move(e);
    return sse;
}

// Standard Nelder-Mead simplex; deterministic, small dimensions only.
std::vector<double> nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> start, double step, int max_iter) {
    int n = static_cast<int>(start.size());
    std::vector<std::vector<double>> simplex(n + 1, start);
    for (int i = 0; i < n; ++i) simplex[i + 1][i] += step;
    std::vector<double> fv(n + 1);
    for (int i = 0; i <= n; ++i) fv[i] = f(simplex[i]);

    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<int> idx(n + 1);
        for (int i = 0; i <= n; ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return fv[a] < fv[b]; });
        if (fv[idx[n]] - fv[idx[0]] <
            1e-12 * (1.0 + std::abs(fv[idx[0]])))
            break;
        std::vector<double> centroid(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) centroid[j] += simplex[idx[i]][j] / n;
        auto combine = [&](double coef) {
            std::vector<double> pt(n);
            for (int j = 0; j < n; ++j)
                pt[j] = centroid[j] + coef * (simplex[idx[n]][j] - centroid[j]);
            return pt;
        };
        auto reflected = combine(-alpha);
        double fr = f(reflected);
        if (fr < fv[idx[0]]) {
            auto expanded = combine(-gamma);
            double fe = f(expanded);
            if (fe < fr) {
                simplex[idx[n]] = expanded;
                fv[idx[n]] = fe;
            } else {
                simplex[idx[n]] = reflected;
                fv[idx[n]] = fr;
            }
        } else if (fr < fv[idx[n - 1]]) {
            simplex[idx[n]] = reflected;
            fv[idx[n]] = fr;
        } else {
            auto contracted = combine(fr < fv[idx[n]] ? -rho : rho);
            double fc = f(contracted);
            if (fc < std::min(fr, fv[idx[n]])) {
                simplex[idx[n]] = contracted;
                fv[idx[n]] = fc;
            } else {
                for (int i = 1; i <= n; ++i) {
                    for (int j = 0; j < n; ++j)
                        simplex[idx[i]][j] =
                            simplex[idx[0]][j] +
                            sigma * (simplex[idx[i]][j] - simplex[idx[0]][j]);
                    fv[idx[i]] = f(simplex[idx[i]]);
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (fv[i] < fv[best]) best = i;
    return simplex[best];
}

}  // namespace

ArimaModel fit_arima(const std::vector<double>& series,
                     const ArimaOrder& order) {
    if (order.p < 0 || order.d < 0 || order.q < 0)
        throw std::invalid_argument("ARIMA order components must be >= 0");
    ArimaModel model;
    model.order = order;
    model.ar.assign(order.p, 0.0);
    model.ma.assign(order.q, 0.0);

    auto fallback = [&]() {
        double mean = 0.0;
        for (double v : series) mean += v;
        model.mean_fallback = true;
        model.fallback_mean = series.empty() ? 0.0 : mean / series.size();
        return model;
    };

    if (static_cast<int>(series.size()) <= order.p + order.d + order.q + 2)
        return fallback();
    auto [mn, mx] = std::minmax_element(series.begin(), series.end());
    if (*mx - *mn < 1e-12) return fallback();

    std::vector<double> z = difference(series, order.d);
    int dim = 1 + order.p + order.q;

    if (order.p == 0 && order.q == 0) {
        // CSS minimum is the sample mean of the differenced series
        double c = 0.0;
        for (double v : z) c += v;
        model.intercept = c / z.size();
        std::vector<double> resid;
        model.residual_variance =
            css(z, order, {model.intercept}, &resid) / z.size();
        return model;
    }

    std::vector<double> start(dim, 0.1);
    start[0] = 0.0;
    for (double v : z) start[0] += v;
    start[0] /= z.size();
    auto objective = [&](const std::vector<double>& params) {
        return css(z, order, params, nullptr);
    };
    std::vector<double> best = nelder_mead(objective, start, 0.2, 400 * dim);
    std::vector<double> resid;
    double sse = css(z, order, best, &resid);
    if (!std::isfinite(sse) || sse >= 1e12) return fallback();

    model.intercept = best[0];
    for (int i = 0; i < order.p; ++i) model.ar[i] = best[1 + i];
    for (int j = 0; j < order.q; ++j) model.ma[j] = best[1 + order.p + j];
    int used = static_cast<int>(z.size()) - order.p;
    model.residual_variance = used > 0 ? sse / used : 0.0;
    return model;
}

std::vector<double> forecast_arima(const ArimaModel& model,
                                   const std::vector<double>& series,
                                   int steps) {
    if (steps < 1) return {};
    if (model.mean_fallback)
        return std::vector<double>(steps, model.fallback_mean);

    const ArimaOrder& o = model.order;
    std::vector<double> z = difference(series, o.d);
    std::vector<double> params(1 + o.p + o.q);
    params[0] = model.intercept;
    for (int i = 0; i < o.p; ++i) params[1 + i] = model.ar[i];
    for (int j = 0; j < o.q; ++j) params[1 + o.p + j] = model.ma[j];
    std::vector<double> resid;
    css(z, o, params, &resid);

    int n = static_cast<int>(z.size());
    std::vector<double> zx = z;       // observed then forecast values
    std::vector<double> ex = resid;   // residuals, zero for the future
    std::vector<double> zf(steps);
    for (int h = 0; h < steps; ++h) {
        double pred = model.intercept;
        for (int i = 0; i < o.p; ++i) {
            int idx = n + h - 1 - i;
            if (idx >= 0) pred += model.ar[i] * zx[idx];
        }
        for (int j = 0; j < o.q; ++j) {
            int idx = n + h - 1 - j;
            if (idx >= 0 && idx < n) pred += model.ma[j] * ex[idx];
        }
        zx.push_back(pred);
        ex.push_back(0.0);
        zf[h] = pred;
    }

    // invert the d-fold differencing by cumulative summation from the tail
    // of each level of the difference pyramid
    std::vector<std::vector<double>> levels{series};
    for (int r = 1; r <= o.d; ++r)
        levels.push_back(difference(series, r));
    std::vector<double> out = zf;
    for (int r = o.d - 1; r >= 0; --r) {
        double prev = levels[r].back();
        for (int h = 0; h < steps; ++h) {
            out[h] = prev + out[h];
            prev = out[h];
        }
    }
    return out;
}

double predict_arima_onestep(const ArimaModel& model,
                             const std::vector<double>& history, int week) {
    if (week < 1 || week > static_cast<int>(history.size()))
        throw std::invalid_argument("predict_arima_onestep: bad week");
    std::vector<double> prefix(history.begin(), history.begin() + week);
    if (static_cast<int>(prefix.size()) <= model.order.d)
        return model.mean_fallback ? model.fallback_mean : 0.0;
    return forecast_arima(model, prefix, 1)[0];
}

ArimaGrid fit_arima_grid(const SpaceTimeCube& cube, const SplitIndex& split,
                         const ArimaOrder& order) {
    ArimaGrid grid;
    grid.order = order;
    grid.models.resize(cube.grid.cells());
    grid.fitted.assign(cube.grid.cells(), false);
    for (int c = 0; c < cube.grid.cells(); ++c) {
        if (!cube.grid.has_road(c)) continue;
        std::vector<double> series(
            cube.series(c) + split.train_begin,
            cube.series(c) + split.train_end);
        grid.models[c] = fit_arima(series, order);
        grid.fitted[c] = true;
    }
    return grid;
}

std::vector<double> predict_arima_grid(const ArimaGrid& grid,
                                       const SpaceTimeCube& cube, int week) {
    std::vector<double> out(cube.grid.cells(), kNull);
    for (int c = 0; c < cube.grid.cells(); ++c) {
        if (!grid.fitted[c]) continue;
        std::vector<double> history(cube.series(c), cube.series(c) + cube.weeks);
        out[c] = std::max(0.0, predict_arima_onestep(grid.models[c], history, week));
    }
    return out;
}

void save_lr(const std::string& dir, const LinearModel& model) {
    TensorArchive archive;
    archive.add("coefficients",
                ad::Tensor({static_cast<int>(model.coefficients.size())},
                           model.coefficients));
    archive.meta = {{"model", "lr"},
                    {"lookback", model.lookback},
                    {"feature_count", model.feature_count},
                    {"ridge", model.ridge}};
    save_tensors(dir, archive);
}

LinearModel load_lr(const std::string& dir) {
    TensorArchive archive = load_tensors(dir);
    if (archive.meta.value("model", "") != "lr")
        throw std::runtime_error(dir + ": not an LR model archive");
    LinearModel model;
    model.lookback = archive.meta.at("lookback").get<int>();
    model.feature_count = archive.meta.at("feature_count").get<int>();
    model.ridge = archive.meta.at("ridge").get<double>();
    model.coefficients = archive.get("coefficients").vec();
    return model;
}

void save_arima_grid(const std::string& dir, const ArimaGrid& grid) {
    int n = static_cast<int>(grid.models.size());
    int row = 5 + grid.order.p + grid.order.q;
    ad::Tensor packed({n, row});
    for (int c = 0; c < n; ++c) {
        const ArimaModel& m = grid.models[c];
        double* r = packed.data() + c * row;
        r[0] = grid.fitted[c] ? 1.0 : 0.0;
        r[1] = m.mean_fallback ? 1.0 : 0.0;
        r[2] = m.intercept;
        r[3] = m.fallback_mean;
        r[4] = m.residual_variance;
        for (int i = 0; i < grid.order.p; ++i) r[5 + i] = i < (int)m.ar.size() ? m.ar[i] : 0.0;
        for (int j = 0; j < grid.order.q; ++j)
            r[5 + grid.order.p + j] = j < (int)m.ma.size() ? m.ma[j] : 0.0;
    }
    TensorArchive archive;
    archive.add("cells", packed);
    archive.meta = {{"model", "arima-grid"},
                    {"p", grid.order.p},
                    {"d", grid.order.d},
                    {"q", grid.order.q}};
    save_tensors(dir, archive);
}

ArimaGrid load_arima_grid(const std::string& dir) {
    TensorArchive archive = load_tensors(dir);
    if (archive.meta.value("model", "") != "arima-grid")
        throw std::runtime_error(dir + ": not an ARIMA grid archive");
    ArimaGrid grid;
    grid.order = {archive.meta.at("p").get<int>(),
                  archive.meta.at("d").get<int>(),
                  archive.meta.at("q").get<int>()};
    const ad::Tensor& packed = archive.get("cells");
    int n = packed.shape()[0];
    int row = packed.shape()[1];
    grid.models.resize(n);
    grid.fitted.assign(n, false);
    for (int c = 0; c < n; ++c) {
        const double* r = packed.data() + c * row;
        grid.fitted[c] = r[0] != 0.0;
        ArimaModel& m = grid.models[c];
        m.order = grid.order;
        m.mean_fallback = r[1] != 0.0;
        m.intercept = r[2];
        m.fallback_mean = r[3];
        m.residual_variance = r[4];
        m.ar.assign(r + 5, r + 5 + grid.order.p);
        m.ma.assign(r + 5 + grid.order.p, r + 5 + grid.order.p + grid.order.q);
    }
    return grid;
}

}  // namespace gridcast::baselines
