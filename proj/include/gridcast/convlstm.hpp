#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcast/cube.hpp"
#include "gridcast/tensor.hpp"

// ConvLSTM cell, sequence unrolling, and the per-region trainer. One layer,
// gate equations without peepholes:
//   i = sigmoid(w_xi*X + w_hi*h + b_i)
//   f = sigmoid(w_xf*X + w_hf*h + b_f)
//   o = sigmoid(w_xo*X + w_ho*h + b_o)
//   C = f.C_prev + i.tanh(w_xc*X + w_hc*h + b_c)
//   h = o.tanh(C)
namespace gridcast::convlstm {

struct ConvLSTMParams {
    int in_channels = 0;
    int hidden_channels = 0;
    int kernel_size = 0;
    // x-to-state and state-to-state kernels per gate, plus biases, plus the
    // 1x1 readout mapping h_L to the single output channel
    ad::Tensor w_xi, w_hi, w_xf, w_hf, w_xo, w_ho, w_xc, w_hc;
    ad::Tensor b_i, b_f, b_o, b_c;
    ad::Tensor w_read, b_read;

    // uniform +-1/sqrt(fan_in) kernels, b_f = 1 (forget-gate bias trick),
    // other biases 0
    static ConvLSTMParams init(int in_channels, int hidden_channels,
                               int kernel_size, std::uint64_t seed);

    static const std::vector<std::string>& tensor_names();
    std::vector<ad::Tensor*> tensors();
    std::vector<const ad::Tensor*> tensors() const;
};

// Tape leaves for one set of parameters; reused across samples so Adam state
// and gradients line up by index.
struct ParamLeaves {
    std::vector<ad::Value> leaves;  // same order as tensor_names()

    explicit ParamLeaves(const ConvLSTMParams& p, bool requires_grad = true);
    void store(ConvLSTMParams& p) const;
    void zero_grad();
};

struct CellState {
    ad::Value h;
    ad::Value c;
};

CellState zero_state(int hidden_channels, int height, int width);
CellState cell_step(const ad::Value& x, const CellState& prev,
                    const ParamLeaves& p);

// Unrolls cell_step from zero state over the inputs, then applies the 1x1
// readout and softplus. Output shape [1,H,W], strictly positive.
ad::Value forward_sequence(const std::vector<ad::Value>& inputs,
                           const ParamLeaves& p);

// Plain (non-tape) masked MSE; ignores mask-false and null entries.
double masked_mse(const std::vector<double>& pred,
                  const std::vector<double>& truth,
                  const std::vector<bool>& mask);

struct TrainConfig {
    int lookback = 8;
    int hidden_channels = 8;
    int kernel_size = 3;
    int epochs = 30;
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
};

struct Region {
    int x0 = 0, y0 = 0, width = 0, height = 0;
};

struct RegionModel {
    Region region;
    TrainConfig cfg;
    ConvLSTMParams params;
    // input/target scaling, recorded so prediction is in EPDO units
    double target_mean = 0.0;
    double target_scale = 1.0;
    std::vector<double> feature_mean;
    std::vector<double> feature_std;
    double validation_mse = 0.0;
    bool skipped = false;  // region had no road cells
    std::vector<double> epoch_loss;  // mean training loss per epoch (scaled space)
};

// Trains one region on rolling (lookback -> next week) samples from the
// training range, per-sample Adam updates, seeded shuffling. Validation MSE
// is one-step-ahead on the validation weeks in EPDO units; when the split
// has no validation weeks it falls back to the same protocol on the
// training range.
RegionModel train_region(const SpaceTimeCube& cube, const Region& region,
                         const SplitIndex& split, const TrainConfig& cfg);

// One-step-ahead prediction for `week` from true history, in EPDO units
// (clamped at zero after un-scaling). Returns region.height x region.width
// values, row-major.
std::vector<double> predict_region(const RegionModel& model,
                                   const SpaceTimeCube& cube, int week);

void save_region_model(const std::string& dir, const RegionModel& model);
RegionModel load_region_model(const std::string& dir);

}  // namespace gridcast::convlstm
