// Acceptance suite: one pass/fail line per criterion, exit 0 only when all
// pass. The synthetic benchmark (criterion 7) and the determinism pipeline
// (criterion 9) are the slow parts; everything else is sub-second.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gridcast/baselines.hpp"
#include "gridcast/convlstm.hpp"
#include "gridcast/cube.hpp"
#include "gridcast/ensemble.hpp"
#include "gridcast/evaluation.hpp"
#include "gridcast/rng.hpp"
#include "gridcast/tensor.hpp"

using namespace gridcast;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, const std::string& what, bool ok,
            const std::string& detail = "") {
    std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", criterion,
                what.c_str(), detail.empty() ? "" : " - ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

GridSpec make_grid(int w, int h, double road = 1.0, double cell = 5.0) {
    GridSpec g;
    g.width = w;
    g.height = h;
    g.cell_size_miles = cell;
    g.road_length_miles.assign(w * h, road);
    return g;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

// ---- criterion 1: gradient correctness over 5 seeds -----------------------

void criterion1() {
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    bool ok = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        auto params = convlstm::ConvLSTMParams::init(2, 2, 3, seed * 101);
        convlstm::ParamLeaves leaves(params);
        std::vector<ad::Tensor> frames(3, ad::Tensor({2, 4, 4}));
        for (auto& f : frames)
            for (int i = 0; i < f.size(); ++i) f[i] = rng.uniform(-1.0, 1.0);
        ad::Tensor truth({1, 4, 4});
        for (int i = 0; i < truth.size(); ++i) truth[i] = rng.uniform(0.0, 2.0);
        std::vector<bool> mask(16, true);

        auto run = [&]() {
            std::vector<ad::Value> inputs;
            for (auto& f : frames) inputs.push_back(ad::leaf(f));
            return ad::masked_mse(convlstm::forward_sequence(inputs, leaves),
                                  truth, mask);
        };
        leaves.zero_grad();
        ad::backward(run());
        double err = ad::grad_check([&]() { return run()->value[0]; },
                                    leaves.leaves, 1e-5);
        worst = std::max(worst, err);
        if (err >= 1e-4) ok = false;
    }
    double secs = elapsed_s(t0);
    char detail[128];
    std::snprintf(detail, sizeof(detail), "max rel err %.2e in %.1f s", worst,
                  secs);
    report(1, "ConvLSTM gradients vs finite differences", ok && secs < 30.0,
           detail);
}

// ---- criterion 2: gate-equation scalar oracles ----------------------------

void criterion2() {
    bool ok = true;
    auto p = convlstm::ConvLSTMParams::init(1, 2, 3, 1);
    for (auto* t : p.tensors())
        for (int i = 0; i < t->size(); ++i) (*t)[i] = 0.0;
    convlstm::ParamLeaves zero(p, false);
    auto x = ad::leaf(ad::Tensor({1, 3, 3}, std::vector<double>(9, 4.0)));
    auto s = convlstm::cell_step(x, convlstm::zero_state(2, 3, 3), zero);
    for (int i = 0; i < s.c->value.size(); ++i)
        if (s.c->value[i] != 0.0 || s.h->value[i] != 0.0) ok = false;

    auto q = convlstm::ConvLSTMParams::init(1, 1, 1, 1);
    for (auto* t : q.tensors())
        for (int i = 0; i < t->size(); ++i) (*t)[i] = 0.0;
    q.w_xi[0] = q.w_xf[0] = q.w_xo[0] = q.w_xc[0] = 1.0;
    convlstm::ParamLeaves leaves(q, false);
    auto x1 = ad::leaf(ad::Tensor({1, 1, 1}, {1.0}));
    auto s1 = convlstm::cell_step(x1, convlstm::zero_state(1, 1, 1), leaves);
    double gate = 1.0 / (1.0 + std::exp(-1.0));
    double c_ref = gate * std::tanh(1.0);
    double h_ref = gate * std::tanh(c_ref);
    if (std::abs(s1.c->value[0] - c_ref) > 1e-6) ok = false;
    if (std::abs(s1.h->value[0] - h_ref) > 1e-6) ok = false;
    if (std::abs(h_ref - 0.3696) > 1e-4) ok = false;  // the reference value
    char detail[64];
    std::snprintf(detail, sizeof(detail), "h_t = %.6f", s1.h->value[0]);
    report(2, "gate-equation scalar oracles", ok, detail);
}

// ---- criterion 3: combiner examples + properties --------------------------

ensemble::EnsembleModel stub(const std::vector<ensemble::Window>& windows,
                             const std::vector<double>& weights) {
    ensemble::EnsembleModel m;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        ensemble::WindowModel wm;
        wm.window = windows[i];
        wm.weight = weights[i];
        m.models.push_back(wm);
    }
    return m;
}

void criterion3() {
    bool ok = true;
    GridSpec g1 = make_grid(1, 1);
    auto one = ensemble::combine(stub({{0, 0, 1, 1}}, {17.0}), {{0.4}}, g1);
    if (std::abs(one[0] - 0.4) > 1e-12) ok = false;
    auto even = ensemble::combine(
        stub({{0, 0, 1, 1}, {0, 0, 1, 1}}, {1.0, 1.0}), {{0.2}, {0.6}}, g1);
    if (std::abs(even[0] - 0.4) > 1e-12) ok = false;
    auto skew = ensemble::combine(
        stub({{0, 0, 1, 1}, {0, 0, 1, 1}}, {1.0, 3.0}), {{0.2}, {0.6}}, g1);
    if (std::abs(skew[0] - 0.5) > 1e-12) ok = false;

    Rng rng(33);
    GridSpec g4 = make_grid(4, 4);
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        int n = 1 + static_cast<int>(rng.below(4));
        std::vector<ensemble::Window> windows;
        std::vector<double> weights;
        std::vector<std::vector<double>> preds;
        for (int i = 0; i < n; ++i) {
            int x0 = static_cast<int>(rng.below(3));
            int y0 = static_cast<int>(rng.below(3));
            int w = 1 + static_cast<int>(rng.below(4 - x0));
            int h = 1 + static_cast<int>(rng.below(4 - y0));
            windows.push_back({x0, y0, w, h});
            weights.push_back(rng.uniform(0.1, 5.0));
            std::vector<double> p(w * h);
            for (auto& v : p) v = rng.uniform(0.0, 3.0);
            preds.push_back(p);
        }
        double alpha = rng.uniform(0.01, 100.0);
        auto scaled = weights;
        for (auto& w : scaled) w *= alpha;
        auto a = ensemble::combine(stub(windows, weights), preds, g4);
        auto b = ensemble::combine(stub(windows, scaled), preds, g4);
        for (int c = 0; c < 16; ++c) {
            if (is_null(a[c])) {
                if (!is_null(b[c])) ok = false;
                continue;
            }
            if (std::abs(a[c] - b[c]) >
                1e-9 * std::max(1.0, std::abs(a[c])))
                ok = false;
            double lo = 1e300, hi = -1e300;
            int x = c % 4, y = c / 4;
            for (int i = 0; i < n; ++i)
                if (windows[i].covers(x, y)) {
                    double v = preds[i][(y - windows[i].y0) * windows[i].width +
                                        (x - windows[i].x0)];
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            if (a[c] < lo - 1e-9 || a[c] > hi + 1e-9) ok = false;
        }
    }
    report(3, "combiner examples, rescaling invariance, convexity", ok);
}

// ---- criterion 4: MSE/RMSE pair consistency -------------------------------

void criterion4() {
    const double pairs[][2] = {{0.103, 0.321},
                               {0.7259, 0.852},
                               {0.2948, 0.543},
                               {0.1096, 0.331}};
    bool ok = true;
    GridSpec grid = make_grid(1, 1);
    SpaceTimeCube truth;
    truth.grid = grid;
    truth.weeks = 2;
    for (auto& p : pairs) {
        // drive the reference MSE through the scoring routine: error
        // sqrt(mse) at the single cell yields exactly that MSE
        truth.target = {0.0, 0.0};
        evaluation::ForecastGrid f;
        f.width = f.height = 1;
        f.week_begin = 1;
        f.week_end = 2;
        f.values = {std::sqrt(p[0])};
        auto r = evaluation::score(f, truth);
        if (std::abs(r.all_regions.mse - p[0]) > 1e-12) ok = false;
        if (std::abs(r.all_regions.rmse - p[1]) > 5e-4) ok = false;
        if (std::abs(r.all_regions.rmse * r.all_regions.rmse -
                     r.all_regions.mse) > 1e-9)
            ok = false;
    }
    report(4, "reference MSE/RMSE pairs consistent through score()", ok);
}

// ---- criterion 5: split fidelity ------------------------------------------

void criterion5() {
    auto s = chronological_split(209, 52, 0.0);
    bool ok = s.train_weeks() == 157 && s.validation_weeks() == 0 &&
              s.test_weeks() == 52;
    report(5, "chronological_split(209, 52, 0) = 157/0/52", ok);
}

// ---- criterion 6: cross-K properties --------------------------------------

void criterion6() {
    bool ok = true;
    Rng rng(34);
    for (int trial = 0; trial < 100 && ok; ++trial) {
        std::vector<evaluation::Point> a, b;
        int na = 1 + static_cast<int>(rng.below(25));
        int nb = 1 + static_cast<int>(rng.below(25));
        for (int i = 0; i < na; ++i)
            a.push_back({rng.uniform(0.0, 40.0), rng.uniform(0.0, 40.0)});
        for (int i = 0; i < nb; ++i)
            b.push_back({rng.uniform(0.0, 40.0), rng.uniform(0.0, 40.0)});
        std::vector<double> radii;
        for (int r = 0; r <= 120; r += 4) radii.push_back(r);
        auto k = evaluation::cross_k(a, b, 1600.0, radii);
        for (std::size_t i = 1; i < k.size(); ++i)
            if (k[i] < k[i - 1]) ok = false;
        if (std::abs(k.back() - 1600.0) > 1e-9) ok = false;  // all pairs
    }
    auto k2 = evaluation::cross_k({{0.0, 0.0}}, {{3.0, 0.0}}, 100.0,
                                  {0, 1, 2, 3, 4, 5});
    if (k2[2] != 0.0 || k2[4] != 100.0) ok = false;
    report(6, "cross-K monotonicity, saturation, worked example", ok);
}

// ---- criteria 7 + 8: synthetic benchmark ----------------------------------

// Frozen fixtures: all-regions test MSE per model, generated once from this
// seed-pinned benchmark and checked exactly thereafter. NaN = not yet frozen.
constexpr double kFixtureEnsemble = 0.10637490469678525;
constexpr double kFixtureLr = 0.11936166017459629;
constexpr double kFixtureArima = 0.11939730095351139;
constexpr double kFixtureGlobal = 0.10727242260448032;

struct BenchmarkResult {
    SpaceTimeCube cube;
    SplitIndex split;
    double mse_ensemble = 0.0, mse_lr = 0.0, mse_arima = 0.0, mse_global = 0.0;
};

BenchmarkResult run_benchmark() {
    BenchmarkResult r;
    GridSpec grid = make_grid(32, 32);
    // three planted regimes: increasing-low, volatile-high, stable-low
    std::vector<Regime> regimes{{0, 0, 11, 32, 0.2, 0.004, 0.1, 0.05},
                                {11, 0, 11, 32, 3.0, 0.0, 1.0, 0.5},
                                {22, 0, 10, 32, 0.5, 0.0, 0.1, 0.05}};
    r.cube = synth_cube(grid, 209, regimes, 42);
    r.split = chronological_split(209, 52, 0.1);

    convlstm::TrainConfig cfg;
    cfg.lookback = 6;
    cfg.hidden_channels = 4;
    cfg.kernel_size = 3;
    cfg.epochs = 10;
    cfg.seed = 42;

    auto part = ensemble::partition(grid, 10, 10, 5, 5);
    auto model =
        ensemble::train_ensemble(r.cube, r.split, part.windows, cfg, 42, 1);
    auto forecast = ensemble::predict_ensemble(model, r.cube,
                                               r.split.test_begin,
                                               r.split.test_end);
    r.mse_ensemble = evaluation::score(forecast, r.cube).all_regions.mse;

    auto lr = baselines::fit_lr(r.cube, r.split, 8);
    evaluation::ForecastGrid lr_grid;
    lr_grid.width = lr_grid.height = 32;
    lr_grid.week_begin = r.split.test_begin;
    lr_grid.week_end = r.split.test_end;
    lr_grid.values.assign(static_cast<std::size_t>(1024) * 52, kNull);
    for (int t = r.split.test_begin; t < r.split.test_end; ++t) {
        auto pred = baselines::predict_lr(lr, r.cube, t);
        for (int c = 0; c < 1024; ++c) lr_grid.at(c, t) = pred[c];
    }
    r.mse_lr = evaluation::score(lr_grid, r.cube).all_regions.mse;

    auto ag = baselines::fit_arima_grid(r.cube, r.split, {1, 0, 1});
    evaluation::ForecastGrid ar_grid = lr_grid;
    for (int t = r.split.test_begin; t < r.split.test_end; ++t) {
        auto pred = baselines::predict_arima_grid(ag, r.cube, t);
        for (int c = 0; c < 1024; ++c) ar_grid.at(c, t) = pred[c];
    }
    r.mse_arima = evaluation::score(ar_grid, r.cube).all_regions.mse;

    auto global = convlstm::train_region(r.cube, {0, 0, 32, 32}, r.split, cfg);
    evaluation::ForecastGrid gl_grid = lr_grid;
    for (int t = r.split.test_begin; t < r.split.test_end; ++t) {
        auto pred = convlstm::predict_region(global, r.cube, t);
        for (int c = 0; c < 1024; ++c) gl_grid.at(c, t) = pred[c];
    }
    r.mse_global = evaluation::score(gl_grid, r.cube).all_regions.mse;
    return r;
}

void criterion7(const BenchmarkResult& r, double secs) {
    bool order = r.mse_ensemble < r.mse_lr && r.mse_ensemble < r.mse_arima &&
                 r.mse_ensemble <= r.mse_global;
    bool frozen = true;
    if (!std::isnan(kFixtureEnsemble)) {
        frozen = r.mse_ensemble == kFixtureEnsemble &&
                 r.mse_lr == kFixtureLr && r.mse_arima == kFixtureArima &&
                 r.mse_global == kFixtureGlobal;
    }
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "mse ensemble %.17g, lr %.17g, arima %.17g, global %.17g, "
                  "%.0f s",
                  r.mse_ensemble, r.mse_lr, r.mse_arima, r.mse_global, secs);
    report(7, "synthetic benchmark ordering + frozen fixtures",
           order && frozen && secs < 900.0, detail);
}

void criterion8(const BenchmarkResult& r) {
    bool ok = true;
    Rng rng(35);
    for (int trial = 0; trial < 500 && ok; ++trial) {
        std::vector<double> a(2 + rng.below(10)), b(2 + rng.below(10));
        for (auto& v : a) v = rng.uniform(-3.0, 3.0);
        for (auto& v : b) v = rng.uniform(-3.0, 3.0);
        double d = evaluation::dtw(a, b);
        if (d < 0.0) ok = false;
        if (std::abs(d - evaluation::dtw(b, a)) > 1e-12) ok = false;
        if (evaluation::dtw(a, a) != 0.0) ok = false;
        if (a.size() == b.size()) {
            double diag = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i)
                diag += std::abs(a[i] - b[i]);
            if (d > diag + 1e-12) ok = false;
        }
    }

    auto labels = evaluation::cluster_dtw(r.cube, r.split, 3, 42);
    // best label agreement with the planted regimes over all 6 permutations
    auto planted = [&](int c) {
        int x = c % 32;
        return x < 11 ? 0 : (x < 22 ? 1 : 2);
    };
    int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                       {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    int best = 0;
    for (auto& perm : perms) {
        int agree = 0;
        for (int c = 0; c < 1024; ++c)
            if (perm[labels.labels[c]] == planted(c)) ++agree;
        best = std::max(best, agree);
    }
    double frac = best / 1024.0;
    if (frac < 0.9) ok = false;
    char detail[64];
    std::snprintf(detail, sizeof(detail), "regime recovery %.1f%%",
                  100.0 * frac);
    report(8, "DTW axioms + k-medoids regime recovery", ok, detail);
}

// ---- criterion 9: CLI pipeline determinism --------------------------------

int run_cli(const std::string& args) {
    std::string cmd = std::string(GRIDCAST_CLI_PATH) + " " + args;
    return std::system(cmd.c_str());
}

bool tree_equal(const fs::path& a, const fs::path& b, std::string& diff) {
    std::map<std::string, fs::path> fa, fb;
    for (auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file())
            fa[fs::relative(e.path(), a).string()] = e.path();
    for (auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file())
            fb[fs::relative(e.path(), b).string()] = e.path();
    if (fa.size() != fb.size()) {
        diff = "file count differs";
        return false;
    }
    for (auto& [rel, pa] : fa) {
        auto it = fb.find(rel);
        if (it == fb.end()) {
            diff = rel + " missing";
            return false;
        }
        std::ifstream ia(pa, std::ios::binary), ib(it->second, std::ios::binary);
        std::stringstream sa, sb;
        sa << ia.rdbuf();
        sb << ib.rdbuf();
        if (sa.str() != sb.str()) {
            diff = rel + " differs";
            return false;
        }
    }
    return true;
}

void criterion9() {
    fs::path root = fs::temp_directory_path() / "gridcast_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    fs::path config = root / "run.conf";
    {
        std::ofstream out(config);
        out << "grid.width = 12\n"
               "grid.height = 12\n"
               "grid.cell_size_miles = 5\n"
               "cube.weeks = 48\n"
               "split.test_weeks = 8\n"
               "split.validation_fraction = 0.1\n"
               "train.lookback = 4\n"
               "train.hidden_channels = 2\n"
               "train.epochs = 2\n"
               "ensemble.window_width = 6\n"
               "ensemble.window_height = 6\n"
               "ensemble.stride_x = 4\n"
               "ensemble.stride_y = 4\n"
               "eval.clusters = 2\n"
               "seed = 7\n"
               "regime = 0,0,6,12,0.5,0.01,0.2,0.1\n"
               "regime = 6,0,6,12,2.0,0,0.8,0.3\n";
    }

    bool ok = true;
    std::string diff;
    for (const std::string& run : {"a", "b"}) {
        fs::path base = root / run;
        std::string workers = run == "a" ? "1" : "3";
        std::string c = " --config " + config.string();
        std::string w = " --workers " + workers;
        if (run_cli("synth" + c + " --out " + (base / "cube").string()) != 0 ||
            run_cli("train-ensemble" + c + w + " --cube " +
                    (base / "cube").string() + " --out " +
                    (base / "model").string()) != 0 ||
            run_cli("predict" + c + " --cube " + (base / "cube").string() +
                    " --model " + (base / "model").string() + " --out " +
                    (base / "forecast").string()) != 0 ||
            run_cli("evaluate" + c + " --cube " + (base / "cube").string() +
                    " --forecast " +
                    (base / "forecast" / "forecast.csv").string() + " --out " +
                    (base / "eval").string()) != 0 ||
            run_cli("cluster" + c + " --cube " + (base / "cube").string() +
                    " --out " + (base / "clusters").string()) != 0) {
            ok = false;
            diff = "CLI command failed (run " + run + ")";
            break;
        }
    }
    if (ok) ok = tree_equal(root / "a", root / "b", diff);
    report(9, "CLI pipeline byte-identical across worker counts", ok, diff);
    if (ok) fs::remove_all(root);
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    auto t0 = std::chrono::steady_clock::now();
    BenchmarkResult bench = run_benchmark();
    double secs = elapsed_s(t0);
    criterion7(bench, secs);
    criterion8(bench);
    criterion9();
    if (failures) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
