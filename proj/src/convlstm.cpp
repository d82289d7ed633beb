#include "gridcast/convlstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gridcast/archive.hpp"
#include "gridcast/rng.hpp"

namespace gridcast::convlstm {

namespace {

ad::Tensor uniform_kernel(std::vector<int> shape, int fan_in, Rng& rng) {
    ad::Tensor t(std::move(shape));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

ConvLSTMParams ConvLSTMParams::init(int in_channels, int hidden_channels,
                                    int kernel_size, std::uint64_t seed) {
    if (kernel_size % 2 == 0)
        throw std::invalid_argument("kernel size must be odd");
    ConvLSTMParams p;
    p.in_channels = in_channels;
    p.hidden_channels = hidden_channels;
    p.kernel_size = kernel_size;
    Rng rng(seed);
    int k = kernel_size;
    int fan_x = in_channels * k * k;
    int fan_h = hidden_channels * k * k;
    std::vector<int> xshape{hidden_channels, in_channels, k, k};
    std::vector<int> hshape{hidden_channels, hidden_channels, k, k};
    p.w_xi = uniform_kernel(xshape, fan_x, rng);
    p.w_hi = uniform_kernel(hshape, fan_h, rng);
    p.w_xf = uniform_kernel(xshape, fan_x, rng);
    p.w_hf = uniform_kernel(hshape, fan_h, rng);
    p.w_xo = uniform_kernel(xshape, fan_x, rng);
    p.w_ho = uniform_kernel(hshape, fan_h, rng);
    p.w_xc = uniform_kernel(xshape, fan_x, rng);
    p.w_hc = uniform_kernel(hshape, fan_h, rng);
    p.b_i = ad::Tensor({hidden_channels}, 0.0);
    p.b_f = ad::Tensor({hidden_channels}, 1.0);
    p.b_o = ad::Tensor({hidden_channels}, 0.0);
    p.b_c = ad::Tensor({hidden_channels}, 0.0);
    p.w_read = uniform_kernel({1, hidden_channels, 1, 1}, hidden_channels, rng);
    p.b_read = ad::Tensor({1}, 0.0);
    return p;
}

const std::vector<std::string>& ConvLSTMParams::tensor_names() {
    static const std::vector<std::string> names = {
        "w_xi", "w_hi", "w_xf", "w_hf", "w_xo", "w_ho", "w_xc", "w_hc",
        "b_i",  "b_f",  "b_o",  "b_c",  "w_read", "b_read"};
    return names;
}

std::vector<ad::Tensor*> ConvLSTMParams::tensors() {
    return {&w_xi, &w_hi, &w_xf, &w_hf, &w_xo, &w_ho, &w_xc, &w_hc,
            &b_i,  &b_f,  &b_o,  &b_c,  &w_read, &b_read};
}

std::vector<const ad::Tensor*> ConvLSTMParams::tensors() const {
    return {&w_xi, &w_hi, &w_xf, &w_hf, &w_xo, &w_ho, &w_xc, &w_hc,
            &b_i,  &b_f,  &b_o,  &b_c,  &w_read, &b_read};
}

ParamLeaves::ParamLeaves(const ConvLSTMParams& p, bool requires_grad) {
    for (const ad::Tensor* t : p.tensors())
        leaves.push_back(ad::leaf(*t, requires_grad));
}

void ParamLeaves::store(ConvLSTMParams& p) const {
    auto dst = p.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = leaves[i]->value;
}

void ParamLeaves::zero_grad() {
    for (auto& l : leaves) l->zero_grad();
}

namespace {

// indices into ParamLeaves::leaves, matching tensor_names()
enum PIdx {
    kWxi, kWhi, kWxf, kWhf, kWxo, kWho, kWxc, kWhc,
    kBi, kBf, kBo, kBc, kWread, kBread
};

}  // namespace

CellState zero_state(int hidden_channels, int height, int width) {
    ad::Tensor z({hidden_channels, height, width});
    return {ad::constant(z), ad::constant(z)};
}

CellState cell_step(const ad::Value& x, const CellState& prev,
                    const ParamLeaves& p) {
    const auto& L = p.leaves;
    auto gate_pre = [&](PIdx wx, PIdx wh, PIdx b) {
        return ad::add(ad::conv2d_same(x, L[wx], L[b]),
                       ad::conv2d_same(prev.h, L[wh]));
    };
    ad::Value i = ad::sigmoid(gate_pre(kWxi, kWhi, kBi));
    ad::Value f = ad::sigmoid(gate_pre(kWxf, kWhf, kBf));
    ad::Value o = ad::sigmoid(gate_pre(kWxo, kWho, kBo));
    ad::Value g = ad::tanh(gate_pre(kWxc, kWhc, kBc));
    ad::Value c = ad::add(ad::hadamard(f, prev.c), ad::hadamard(i, g));
    ad::Value h = ad::hadamard(o, ad::tanh(c));
    return {h, c};
}

ad::Value forward_sequence(const std::vector<ad::Value>& inputs,
                           const ParamLeaves& p) {
    if (inputs.empty())
        throw std::invalid_argument("forward_sequence: empty input sequence");
    const auto& shape = inputs.front()->value.shape();
    int hidden = p.leaves[kBi]->value.size();
    CellState state = zero_state(hidden, shape[1], shape[2]);
    for (const auto& x : inputs) state = cell_step(x, state, p);
    return ad::softplus(
        ad::conv2d_same(state.h, p.leaves[kWread], p.leaves[kBread]));
}

double masked_mse(const std::vector<double>& pred,
                  const std::vector<double>& truth,
                  const std::vector<bool>& mask) {
    if (pred.size() != truth.size() || pred.size() != mask.size())
        throw std::invalid_argument("masked_mse: size mismatch");
    double acc = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i] || is_null(truth[i])) continue;
        double e = pred[i] - truth[i];
        acc += e * e;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("masked_mse: empty mask");
    return acc / count;
}

namespace {

struct RegionView {
    Region region;
    int weeks = 0;
    int channels = 0;  // 1 + feature count
    std::vector<bool> mask;           // road cells in the region
    std::vector<double> raw;          // EPDO per (cell, week), region-local
    std::vector<ad::Value> frames;    // per-week scaled input [C,H,W]
    double target_mean = 0.0;
    double target_scale = 1.0;
    std::vector<double> feature_mean, feature_std;

    int cells() const { return region.width * region.height; }
    double raw_at(int c, int t) const { return raw[c * weeks + t]; }
};

RegionView make_view(const SpaceTimeCube& cube, const Region& region,
                     const SplitIndex& split) {
    if (region.x0 < 0 || region.y0 < 0 || region.width < 1 ||
        region.height < 1 || region.x0 + region.width > cube.grid.width ||
        region.y0 + region.height > cube.grid.height)
        throw std::invalid_argument("region outside grid");

    RegionView v;
    v.region = region;
    v.weeks = cube.weeks;
    v.mask.resize(v.cells());
    v.raw.resize(static_cast<std::size_t>(v.cells()) * cube.weeks);
    for (int y = 0; y < region.height; ++y)
        for (int x = 0; x < region.width; ++x) {
            int local = y * region.width + x;
            int global = cube.grid.index(region.x0 + x, region.y0 + y);
            v.mask[local] = cube.grid.has_road(global);
            for (int t = 0; t < cube.weeks; ++t)
                v.raw[local * cube.weeks + t] = cube.at(global, t);
        }

    // target scaling statistics over road cells x training weeks
    double sum = 0.0, sumsq = 0.0;
    long count = 0;
    for (int c = 0; c < v.cells(); ++c) {
        if (!v.mask[c]) continue;
        for (int t = split.train_begin; t < split.train_end; ++t) {
            double val = v.raw_at(c, t);
            if (is_null(val)) continue;
            sum += val;
            sumsq += val * val;
            ++count;
        }
    }
    if (count > 0) {
        v.target_mean = sum / count;
        double var = std::max(0.0, sumsq / count - v.target_mean * v.target_mean);
        v.target_scale = std::sqrt(var);
    }
    if (v.target_scale < 1e-9)
        v.target_scale = std::max(std::abs(v.target_mean), 1.0);

    // static feature normalization over road cells
    int m = cube.feature_count();
    v.channels = 1 + m;
    v.feature_mean.assign(m, 0.0);
    v.feature_std.assign(m, 1.0);
    int roads = static_cast<int>(std::count(v.mask.begin(), v.mask.end(), true));
    for (int k = 0; k < m; ++k) {
        if (roads == 0) break;
        double fsum = 0.0, fsumsq = 0.0;
        for (int y = 0; y < region.height; ++y)
            for (int x = 0; x < region.width; ++x) {
                int local = y * region.width + x;
                if (!v.mask[local]) continue;
                double f = cube.feature(
                    k, cube.grid.index(region.x0 + x, region.y0 + y));
                fsum += f;
                fsumsq += f * f;
            }
        v.feature_mean[k] = fsum / roads;
        double var = std::max(0.0, fsumsq / roads -
                                       v.feature_mean[k] * v.feature_mean[k]);
        v.feature_std[k] = std::sqrt(var) < 1e-9 ? 1.0 : std::sqrt(var);
    }

    // precompute per-week input frames: channel 0 is the standardized EPDO
    // history (nulls fed as 0), remaining channels the normalized statics
    int plane = v.cells();
    ad::Tensor statics({std::max(1, m), region.height, region.width});
    for (int k = 0; k < m; ++k)
        for (int y = 0; y < region.height; ++y)
            for (int x = 0; x < region.width; ++x) {
                int local = y * region.width + x;
                double f = v.mask[local]
                               ? (cube.feature(k, cube.grid.index(region.x0 + x,
                                                                  region.y0 + y)) -
                                  v.feature_mean[k]) /
                                     v.feature_std[k]
                               : 0.0;
                statics[k * plane + local] = f;
            }
    v.frames.reserve(cube.weeks);
    for (int t = 0; t < cube.weeks; ++t) {
        ad::Tensor frame({v.channels, region.height, region.width});
        for (int c = 0; c < plane; ++c) {
            double val = v.raw_at(c, t);
            frame[c] = (v.mask[c] && !is_null(val))
                           ? (val - v.target_mean) / v.target_scale
                           : 0.0;
        }
        for (int k = 0; k < m; ++k)
            for (int c = 0; c < plane; ++c)
                frame[(k + 1) * plane + c] = statics[k * plane + c];
        v.frames.push_back(ad::constant(std::move(frame)));
    }
    return v;
}

// targets are trained on the nonnegative y/scale axis so the softplus
// readout can represent them; un-scaling is a single multiply
ad::Tensor scaled_target(const RegionView& v, int week) {
    ad::Tensor t({1, v.region.height, v.region.width});
    for (int c = 0; c < v.cells(); ++c) {
        double val = v.raw_at(c, week);
        t[c] = is_null(val) ? kNull : val / v.target_scale;
    }
    return t;
}

struct Adam {
    double lr, beta1, beta2, eps;
    long step = 0;
    std::vector<std::vector<double>> m, v;

    Adam(const TrainConfig& cfg, const ParamLeaves& leaves)
        : lr(cfg.learning_rate), beta1(cfg.beta1), beta2(cfg.beta2),
          eps(cfg.adam_eps) {
        for (const auto& l : leaves.leaves) {
            m.emplace_back(l->value.size(), 0.0);
            v.emplace_back(l->value.size(), 0.0);
        }
    }

    void update(ParamLeaves& leaves) {
        ++step;
        double bc1 = 1.0 - std::pow(beta1, step);
        double bc2 = 1.0 - std::pow(beta2, step);
        for (std::size_t p = 0; p < leaves.leaves.size(); ++p) {
            auto& node = *leaves.leaves[p];
            if (!node.grad_ready) continue;
            for (int i = 0; i < node.value.size(); ++i) {
                double g = node.grad[i];
                m[p][i] = beta1 * m[p][i] + (1.0 - beta1) * g;
                v[p][i] = beta2 * v[p][i] + (1.0 - beta2) * g * g;
                double mhat = m[p][i] / bc1;
                double vhat = v[p][i] / bc2;
                node.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

std::vector<double> predict_view(const RegionView& v, const ParamLeaves& leaves,
                                 int week, int lookback) {
    if (week < lookback)
        throw std::invalid_argument("not enough history to predict week " +
                                    std::to_string(week));
    std::vector<ad::Value> inputs(v.frames.begin() + (week - lookback),
                                  v.frames.begin() + week);
    ad::Value out = forward_sequence(inputs, leaves);
    std::vector<double> pred(v.cells());
    for (int c = 0; c < v.cells(); ++c)
        pred[c] = std::max(0.0, out->value[c] * v.target_scale);
    return pred;
}

double onestep_mse(const RegionView& v, const ParamLeaves& leaves, int begin,
                   int end, int lookback) {
    double acc = 0.0;
    long count = 0;
    for (int t = std::max(begin, lookback); t < end; ++t) {
        auto pred = predict_view(v, leaves, t, lookback);
        for (int c = 0; c < v.cells(); ++c) {
            double truth = v.raw_at(c, t);
            if (!v.mask[c] || is_null(truth)) continue;
            double e = pred[c] - truth;
            acc += e * e;
            ++count;
        }
    }
    return count > 0 ? acc / count
                     : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

RegionModel train_region(const SpaceTimeCube& cube, const Region& region,
                         const SplitIndex& split, const TrainConfig& cfg) {
    if (cfg.lookback < 1 || cfg.epochs < 1 || !(cfg.learning_rate > 0.0))
        throw std::invalid_argument("invalid training configuration");

    RegionView view = make_view(cube, region, split);
    RegionModel model;
    model.region = region;
    model.cfg = cfg;
    model.target_mean = view.target_mean;
    model.target_scale = view.target_scale;
    model.feature_mean = view.feature_mean;
    model.feature_std = view.feature_std;

    if (std::none_of(view.mask.begin(), view.mask.end(),
                     [](bool b) { return b; })) {
        model.skipped = true;
        return model;
    }

    std::vector<int> sample_weeks;
    for (int t = split.train_begin + cfg.lookback; t < split.train_end; ++t)
        sample_weeks.push_back(t);
    if (sample_weeks.empty())
        throw std::invalid_argument(
            "training range too short for the configured lookback");

    model.params = ConvLSTMParams::init(view.channels, cfg.hidden_channels,
                                        cfg.kernel_size, cfg.seed);
    ParamLeaves leaves(model.params);
    Adam adam(cfg, leaves);
    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order = sample_weeks;
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int t : order) {
            std::vector<ad::Value> inputs(
                view.frames.begin() + (t - cfg.lookback),
                view.frames.begin() + t);
            ad::Value pred = forward_sequence(inputs, leaves);
            ad::Value loss =
                ad::masked_mse(pred, scaled_target(view, t), view.mask);
            leaves.zero_grad();
            ad::backward(loss);
            adam.update(leaves);
            epoch_loss += loss->value[0];
        }
        model.epoch_loss.push_back(epoch_loss / order.size());
    }

    leaves.store(model.params);

    ParamLeaves frozen(model.params, /*requires_grad=*/false);
    double val = onestep_mse(view, frozen, split.validation_begin,
                             split.validation_end, cfg.lookback);
    if (std::isnan(val))  // no usable validation weeks; score on train range
        val = onestep_mse(view, frozen, split.train_begin, split.train_end,
                          cfg.lookback);
    model.validation_mse = val;
    return model;
}

std::vector<double> predict_region(const RegionModel& model,
                                   const SpaceTimeCube& cube, int week) {
    // rebuild the input frames with the stored scaling, then run the model
    SplitIndex dummy;  // statistics are not recomputed; use stored values
    dummy.train_begin = 0;
    dummy.train_end = 0;
    RegionView view = make_view(cube, model.region, dummy);
    view.target_mean = model.target_mean;
    view.target_scale = model.target_scale;
    view.feature_mean = model.feature_mean;
    view.feature_std = model.feature_std;
    // make_view computed frames with its own statistics; redo them with the
    // stored constants
    view.frames.clear();
    int plane = view.cells();
    int m = cube.feature_count();
    for (int t = 0; t < cube.weeks; ++t) {
        ad::Tensor frame({view.channels, model.region.height, model.region.width});
        for (int c = 0; c < plane; ++c) {
            double val = view.raw_at(c, t);
            frame[c] = (view.mask[c] && !is_null(val))
                           ? (val - model.target_mean) / model.target_scale
                           : 0.0;
        }
        for (int k = 0; k < m; ++k)
            for (int y = 0; y < model.region.height; ++y)
                for (int x = 0; x < model.region.width; ++x) {
                    int local = y * model.region.width + x;
                    double f =
                        view.mask[local]
                            ? (cube.feature(k, cube.grid.index(
                                                   model.region.x0 + x,
                                                   model.region.y0 + y)) -
                               model.feature_mean[k]) /
                                  model.feature_std[k]
                            : 0.0;
                    frame[(k + 1) * plane + local] = f;
                }
        view.frames.push_back(ad::constant(std::move(frame)));
    }
    ParamLeaves leaves(model.params, /*requires_grad=*/false);
    return predict_view(view, leaves, week, model.cfg.lookback);
}

void save_region_model(const std::string& dir, const RegionModel& model) {
    TensorArchive archive;
    if (!model.skipped) {
        const auto& names = ConvLSTMParams::tensor_names();
        auto tensors = model.params.tensors();
        for (std::size_t i = 0; i < names.size(); ++i)
            archive.add(names[i], *tensors[i]);
    }
    archive.meta = {
        {"model", "convlstm-region"},
        {"region", {{"x0", model.region.x0},
                    {"y0", model.region.y0},
                    {"width", model.region.width},
                    {"height", model.region.height}}},
        {"config", {{"lookback", model.cfg.lookback},
                    {"hidden_channels", model.cfg.hidden_channels},
                    {"kernel_size", model.cfg.kernel_size},
                    {"epochs", model.cfg.epochs},
                    {"learning_rate", model.cfg.learning_rate},
                    {"beta1", model.cfg.beta1},
                    {"beta2", model.cfg.beta2},
                    {"adam_eps", model.cfg.adam_eps},
                    {"seed", model.cfg.seed}}},
        {"target_mean", model.target_mean},
        {"target_scale", model.target_scale},
        {"feature_mean", model.feature_mean},
        {"feature_std", model.feature_std},
        {"validation_mse", model.validation_mse},
        {"skipped", model.skipped},
        {"in_channels", model.params.in_channels},
    };
    save_tensors(dir, archive);
}

RegionModel load_region_model(const std::string& dir) {
    TensorArchive archive = load_tensors(dir);
    const auto& meta = archive.meta;
    RegionModel model;
    model.region = {meta.at("region").at("x0").get<int>(),
                    meta.at("region").at("y0").get<int>(),
                    meta.at("region").at("width").get<int>(),
                    meta.at("region").at("height").get<int>()};
    const auto& c = meta.at("config");
    model.cfg.lookback = c.at("lookback").get<int>();
    model.cfg.hidden_channels = c.at("hidden_channels").get<int>();
    model.cfg.kernel_size = c.at("kernel_size").get<int>();
    model.cfg.epochs = c.at("epochs").get<int>();
    model.cfg.learning_rate = c.at("learning_rate").get<double>();
    model.cfg.beta1 = c.at("beta1").get<double>();
    model.cfg.beta2 = c.at("beta2").get<double>();
    model.cfg.adam_eps = c.at("adam_eps").get<double>();
    model.cfg.seed = c.at("seed").get<std::uint64_t>();
    model.target_mean = meta.at("target_mean").get<double>();
    model.target_scale = meta.at("target_scale").get<double>();
    model.feature_mean = meta.at("feature_mean").get<std::vector<double>>();
    model.feature_std = meta.at("feature_std").get<std::vector<double>>();
    model.validation_mse = meta.at("validation_mse").get<double>();
    model.skipped = meta.at("skipped").get<bool>();
    if (!model.skipped) {
        model.params.in_channels = meta.at("in_channels").get<int>();
        model.params.hidden_channels = model.cfg.hidden_channels;
        model.params.kernel_size = model.cfg.kernel_size;
        const auto& names = ConvLSTMParams::tensor_names();
        auto tensors = model.params.tensors();
        for (std::size_t i = 0; i < names.size(); ++i)
            *tensors[i] = archive.get(names[i]);
    }
    return model;
}

}  // namespace gridcast::convlstm
