#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

// Minimal dense-tensor engine with reverse-mode differentiation. Values are
// double precision throughout; gradients are recorded on a per-forward-pass
// tape and released when the graph goes away.
namespace gridcast::ad {

class Tensor {
 public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::vector<int> shape, std::vector<double> data);

    const std::vector<int>& shape() const { return shape_; }
    int size() const { return static_cast<int>(data_.size()); }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int i) { return data_[i]; }
    double operator[](int i) const { return data_[i]; }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

struct Node;
using Value = std::shared_ptr<Node>;

// One tape entry. `value` is the forward result; `grad` is lazily allocated
// by backward(); `backfn` scatters this node's grad into its parents.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<Value> parents;
    std::function<void(Node&)> backfn;

    void ensure_grad();
    void zero_grad();
};

Value leaf(Tensor t, bool requires_grad = false);
Value constant(Tensor t);

// Same-padding 2-D convolution. input [C_in,H,W], kernel [C_out,C_in,k,k]
// with k odd, optional bias [C_out]; output [C_out,H,W].
Value conv2d_same(const Value& input, const Value& kernel, const Value& bias);
Value conv2d_same(const Value& input, const Value& kernel);

Value add(const Value& a, const Value& b);
Value hadamard(const Value& a, const Value& b);
Value sigmoid(const Value& x);
Value tanh(const Value& x);
Value softplus(const Value& x);
Value sum(const Value& x);  // scalar [1]

// Mean squared error over entries where mask is true and truth is finite.
// Throws if no entry qualifies.
Value masked_mse(const Value& pred, const Tensor& truth,
                 const std::vector<bool>& mask);

// Reverse sweep from a scalar loss. Accumulates into each tracked tensor's
// grad; call zero_grad on leaves between passes to reset.
void backward(const Value& loss);

// Max relative error between analytic leaf gradients and central finite
// differences of `f` (which must recompute the forward loss from the current
// leaf contents). Perturbs leaf data in place and restores it.
double grad_check(const std::function<double()>& f,
                  const std::vector<Value>& leaves, double eps);

}  // namespace gridcast::ad
