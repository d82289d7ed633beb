#include "gridcast/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <unordered_set>

#include "gridcast/kernels.hpp"

namespace gridcast::ad {

namespace {

int shape_product(const std::vector<int>& shape) {
    int n = 1;
    for (int e : shape) {
        if (e <= 0) throw std::invalid_argument("tensor extents must be positive");
        n *= e;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int>(data_.size()) != shape_product(shape_))
        throw std::invalid_argument("tensor data length does not match shape");
}

void Node::ensure_grad() {
    if (!grad_ready) {
        grad = Tensor(value.shape());
        grad_ready = true;
    }
}

void Node::zero_grad() {
    if (grad_ready)
        std::fill(grad.vec().begin(), grad.vec().end(), 0.0);
}

Value leaf(Tensor t, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return n;
}

Value constant(Tensor t) { return leaf(std::move(t), false); }

namespace {

Value make_op(Tensor value, std::vector<Value> parents,
              std::function<void(Node&)> backfn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backfn = std::move(backfn);
    return n;
}

struct ConvDims {
    int cin, h, w, cout, k, r;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel) {
    const auto& is = input.shape();
    const auto& ks = kernel.shape();
    if (is.size() != 3 || ks.size() != 4)
        throw std::invalid_argument("conv2d_same expects input [C,H,W] and kernel [O,C,k,k]");
    ConvDims d{is[0], is[1], is[2], ks[0], ks[2], 0};
    if (ks[3] != d.k) throw std::invalid_argument("conv2d_same kernel must be square");
    if (d.k % 2 == 0) throw std::invalid_argument("conv2d_same kernel size must be odd");
    if (ks[1] != d.cin) throw std::invalid_argument("conv2d_same channel mismatch");
    d.r = d.k / 2;
    return d;
}

// out[o,y,x] += w * in[c, y+oy, x+ox] over the in-range band, as a series of
// row axpys (the SIMD hot loop).
void accumulate_shifted(double w, const double* in_plane, double* out_plane,
                        int h, int wd, int oy, int ox) {
    int y0 = std::max(0, -oy), y1 = std::min(h, h - oy);
    int x0 = std::max(0, -ox), x1 = std::min(wd, wd - ox);
    if (x1 <= x0) return;
    std::size_t len = static_cast<std::size_t>(x1 - x0);
    for (int y = y0; y < y1; ++y)
        kernels::axpy(w, in_plane + (y + oy) * wd + (x0 + ox),
                      out_plane + y * wd + x0, len);
}

// dot of the same shifted band, scalar on purpose: reductions stay in one
// fixed order so every backend gives identical results.
double dot_shifted(const double* a_plane, const double* b_plane, int h, int wd,
                   int oy, int ox) {
    int y0 = std::max(0, -oy), y1 = std::min(h, h - oy);
    int x0 = std::max(0, -ox), x1 = std::min(wd, wd - ox);
    double acc = 0.0;
    for (int y = y0; y < y1; ++y) {
        const double* a = a_plane + (y + oy) * wd + (x0 + ox);
        const double* b = b_plane + y * wd + x0;
        for (int x = 0; x < x1 - x0; ++x) acc += a[x] * b[x];
    }
    return acc;
}

}  // namespace

Value conv2d_same(const Value& input, const Value& kernel, const Value& bias) {
    ConvDims d = conv_dims(input->value, kernel->value);
    if (bias && bias->value.size() != d.cout)
        throw std::invalid_argument("conv2d_same bias size must equal output channels");

    Tensor out({d.cout, d.h, d.w});
    const int plane = d.h * d.w;
    const double* in = input->value.data();
    const double* kw = kernel->value.data();
    for (int o = 0; o < d.cout; ++o) {
        double* op = out.data() + o * plane;
        if (bias) {
            double b = bias->value[o];
            for (int i = 0; i < plane; ++i) op[i] = b;
        }
        for (int c = 0; c < d.cin; ++c) {
            const double* ip = in + c * plane;
            const double* kp = kw + ((o * d.cin) + c) * d.k * d.k;
            for (int ky = 0; ky < d.k; ++ky)
                for (int kx = 0; kx < d.k; ++kx)
                    accumulate_shifted(kp[ky * d.k + kx], ip, op, d.h, d.w,
                                       ky - d.r, kx - d.r);
        }
    }

    std::vector<Value> parents{input, kernel};
    if (bias) parents.push_back(bias);
    return make_op(std::move(out), std::move(parents), [d](Node& n) {
        const int plane = d.h * d.w;
        Node& in_n = *n.parents[0];
        Node& k_n = *n.parents[1];
        const double* gout = n.grad.data();
        if (in_n.requires_grad) {
            in_n.ensure_grad();
            const double* kw = k_n.value.data();
            for (int o = 0; o < d.cout; ++o) {
                const double* gp = gout + o * plane;
                for (int c = 0; c < d.cin; ++c) {
                    double* gip = in_n.grad.data() + c * plane;
                    const double* kp = kw + ((o * d.cin) + c) * d.k * d.k;
                    // transpose of the forward scatter: shift by -offset
                    for (int ky = 0; ky < d.k; ++ky)
                        for (int kx = 0; kx < d.k; ++kx)
                            accumulate_shifted(kp[ky * d.k + kx], gp, gip, d.h,
                                               d.w, d.r - ky, d.r - kx);
                }
            }
        }
        if (k_n.requires_grad) {
            k_n.ensure_grad();
            const double* in = in_n.value.data();
            for (int o = 0; o < d.cout; ++o) {
                const double* gp = gout + o * plane;
                for (int c = 0; c < d.cin; ++c) {
                    const double* ip = in + c * plane;
                    double* gkp = k_n.grad.data() + ((o * d.cin) + c) * d.k * d.k;
                    for (int ky = 0; ky < d.k; ++ky)
                        for (int kx = 0; kx < d.k; ++kx)
                            gkp[ky * d.k + kx] += dot_shifted(
                                ip, gp, d.h, d.w, ky - d.r, kx - d.r);
                }
            }
        }
        if (n.parents.size() == 3 && n.parents[2]->requires_grad) {
            Node& b_n = *n.parents[2];
            b_n.ensure_grad();
            for (int o = 0; o < d.cout; ++o) {
                double acc = 0.0;
                const double* gp = gout + o * plane;
                for (int i = 0; i < plane; ++i) acc += gp[i];
                b_n.grad[o] += acc;
            }
        }
    });
}

Value conv2d_same(const Value& input, const Value& kernel) {
    return conv2d_same(input, kernel, nullptr);
}

Value add(const Value& a, const Value& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("add: shape mismatch");
    Tensor out(a->value.shape());
    kernels::add(a->value.data(), b->value.data(), out.data(), out.size());
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int p = 0; p < 2; ++p) {
            Node& pn = *n.parents[p];
            if (!pn.requires_grad) continue;
            pn.ensure_grad();
            kernels::axpy(1.0, n.grad.data(), pn.grad.data(), n.grad.size());
        }
    });
}

Value hadamard(const Value& a, const Value& b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("hadamard: shape mismatch");
    Tensor out(a->value.shape());
    kernels::mul(a->value.data(), b->value.data(), out.data(), out.size());
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node& an = *n.parents[0];
        Node& bn = *n.parents[1];
        if (an.requires_grad) {
            an.ensure_grad();
            kernels::mul_add(bn.value.data(), n.grad.data(), an.grad.data(),
                             n.grad.size());
        }
        if (bn.requires_grad) {
            bn.ensure_grad();
            kernels::mul_add(an.value.data(), n.grad.data(), bn.grad.data(),
                             n.grad.size());
        }
    });
}

Value sigmoid(const Value& x) {
    Tensor out(x->value.shape());
    for (int i = 0; i < out.size(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
    return make_op(std::move(out), {x}, [](Node& n) {
        Node& xn = *n.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        for (int i = 0; i < n.grad.size(); ++i) {
            double s = n.value[i];
            xn.grad[i] += s * (1.0 - s) * n.grad[i];
        }
    });
}

Value tanh(const Value& x) {
    Tensor out(x->value.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = std::tanh(x->value[i]);
    return make_op(std::move(out), {x}, [](Node& n) {
        Node& xn = *n.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        for (int i = 0; i < n.grad.size(); ++i)
            xn.grad[i] += (1.0 - n.value[i] * n.value[i]) * n.grad[i];
    });
}

Value softplus(const Value& x) {
    Tensor out(x->value.shape());
    for (int i = 0; i < out.size(); ++i) {
        double v = x->value[i];
        out[i] = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    }
    return make_op(std::move(out), {x}, [](Node& n) {
        Node& xn = *n.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        for (int i = 0; i < n.grad.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-xn.value[i]));
            xn.grad[i] += s * n.grad[i];
        }
    });
}

Value sum(const Value& x) {
    double acc = 0.0;
    for (int i = 0; i < x->value.size(); ++i) acc += x->value[i];
    return make_op(Tensor({1}, {acc}), {x}, [](Node& n) {
        Node& xn = *n.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        double g = n.grad[0];
        for (int i = 0; i < xn.grad.size(); ++i) xn.grad[i] += g;
    });
}

Value masked_mse(const Value& pred, const Tensor& truth,
                 const std::vector<bool>& mask) {
    if (!pred->value.same_shape(truth) ||
        mask.size() != static_cast<std::size_t>(truth.size()))
        throw std::invalid_argument("masked_mse: shape mismatch");
    int count = 0;
    double acc = 0.0;
    for (int i = 0; i < truth.size(); ++i) {
        if (!mask[i] || !std::isfinite(truth[i])) continue;
        double e = pred->value[i] - truth[i];
        acc += e * e;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("masked_mse: empty mask");
    auto tshared = std::make_shared<Tensor>(truth);
    auto mshared = std::make_shared<std::vector<bool>>(mask);
    return make_op(Tensor({1}, {acc / count}), {pred},
                   [tshared, mshared, count](Node& n) {
        Node& pn = *n.parents[0];
        if (!pn.requires_grad) return;
        pn.ensure_grad();
        const Tensor& t = *tshared;
        double g = 2.0 * n.grad[0] / count;
        for (int i = 0; i < t.size(); ++i) {
            if (!(*mshared)[i] || !std::isfinite(t[i])) continue;
            pn.grad[i] += g * (pn.value[i] - t[i]);
        }
    });
}

void backward(const Value& loss) {
    if (loss->value.size() != 1)
        throw std::invalid_argument("backward requires a scalar loss");
    // post-order DFS, then run backfns in reverse topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && visited.insert(p).second)
                stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backfn && n->grad_ready) n->backfn(*n);
    }
}

double grad_check(const std::function<double()>& f,
                  const std::vector<Value>& leaves, double eps) {
    if (!(eps > 0.0 && eps <= 1e-3))
        throw std::invalid_argument("grad_check: eps must be in (0, 1e-3]");
    double worst = 0.0;
    for (const auto& l : leaves) {
        for (int i = 0; i < l->value.size(); ++i) {
            double analytic = l->grad_ready ? l->grad[i] : 0.0;
            double saved = l->value[i];
            l->value[i] = saved + eps;
            double up = f();
            l->value[i] = saved - eps;
            double down = f();
            l->value[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw std::runtime_error("grad_check: non-finite objective");
            double numeric = (up - down) / (2.0 * eps);
            double rel = std::abs(analytic - numeric) /
                         std::max(1.0, std::abs(analytic));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace gridcast::ad
