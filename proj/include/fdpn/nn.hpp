// Sequence-model building blocks with explicit forward/backward passes:
// dense layers, same-padded 1-D convolution and average pooling over the
// frame axis, layer normalization, and the Adam optimizer. Sequences are
// [L, D] tensors (L frames, D channels); batching is a loop over videos.
//
// Forward caches whatever backward needs; backward accumulates parameter
// gradients and returns the input gradient.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/rng.hpp"
#include "fdpn/tensor.hpp"
#include "fdpn/tensor_io.hpp"

namespace fdpn::nn {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter(std::string n, std::vector<Index> shape)
        : name(std::move(n)), value(shape), grad(shape) {}

    void zero_grad() { grad.fill(0.0); }
};

// y = x W^T + b with x [L, in], W [out, in], b [out].
class Linear {
public:
    Linear(std::string name, Index in, Index out)
        : in_(in), out_(out), weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {}

    void init_uniform(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
        for (Index i = 0; i < weight.value.size(); ++i)
            weight.value[i] = rng.uniform(-bound, bound);
        bias.value.fill(0.0);
    }

    void init_zero() {
        weight.value.fill(0.0);
        bias.value.fill(0.0);
    }

    Tensor forward(const Tensor& x) {
        if (x.rank() != 2 || x.dim(1) != in_)
            throw ShapeError("linear input " + x.shape_string() + " expected [L," +
                             std::to_string(in_) + "]");
        cache_x_ = x;
        const Index L = x.dim(0);
        Tensor y({L, out_});
        const double* w = weight.value.data();
        for (Index l = 0; l < L; ++l) {
            const double* xr = x.data() + l * in_;
            double* yr = y.data() + l * out_;
            for (Index o = 0; o < out_; ++o) {
                double acc = bias.value[o];
                const double* wr = w + o * in_;
                for (Index i = 0; i < in_; ++i) acc += wr[i] * xr[i];
                yr[o] = acc;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const Index L = cache_x_.dim(0);
        if (dy.rank() != 2 || dy.dim(0) != L || dy.dim(1) != out_)
            throw ShapeError("linear backward shape mismatch");
        Tensor dx({L, in_});
        double* dw = weight.grad.data();
        for (Index l = 0; l < L; ++l) {
            const double* xr = cache_x_.data() + l * in_;
            const double* dyr = dy.data() + l * out_;
            double* dxr = dx.data() + l * in_;
            for (Index o = 0; o < out_; ++o) {
                const double g = dyr[o];
                bias.grad[o] += g;
                const double* wr = weight.value.data() + o * in_;
                double* dwr = dw + o * in_;
                for (Index i = 0; i < in_; ++i) {
                    dwr[i] += g * xr[i];
                    dxr[i] += g * wr[i];
                }
            }
        }
        return dx;
    }

    std::vector<Parameter*> params() { return {&weight, &bias}; }

    Index in_, out_;
    Parameter weight, bias;

private:
    Tensor cache_x_;
};

// Same-padded 1-D convolution along the frame axis: x [L, Cin] -> [L, Cout],
// odd kernel, zero padding at the sequence edges.
class Conv1dSame {
public:
    Conv1dSame(std::string name, Index in, Index out, Index kernel)
        : in_(in),
          out_(out),
          kernel_(kernel),
          weight(name + ".weight", {out, kernel, in}),
          bias(name + ".bias", {out}) {
        if (kernel_ < 1 || kernel_ % 2 == 0) throw ArgumentError("conv kernel must be odd");
    }

    void init_uniform(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * kernel_));
        for (Index i = 0; i < weight.value.size(); ++i)
            weight.value[i] = rng.uniform(-bound, bound);
        bias.value.fill(0.0);
    }

    Tensor forward(const Tensor& x) {
        if (x.rank() != 2 || x.dim(1) != in_) throw ShapeError("conv input shape mismatch");
        cache_x_ = x;
        const Index L = x.dim(0), half = kernel_ / 2;
        Tensor y({L, out_});
        for (Index l = 0; l < L; ++l) {
            double* yr = y.data() + l * out_;
            for (Index o = 0; o < out_; ++o) yr[o] = bias.value[o];
            for (Index k = 0; k < kernel_; ++k) {
                const Index src = l + k - half;
                if (src < 0 || src >= L) continue;
                const double* xr = x.data() + src * in_;
                for (Index o = 0; o < out_; ++o) {
                    const double* wr = weight.value.data() + (o * kernel_ + k) * in_;
                    double acc = 0.0;
                    for (Index i = 0; i < in_; ++i) acc += wr[i] * xr[i];
                    yr[o] += acc;
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const Index L = cache_x_.dim(0), half = kernel_ / 2;
        if (dy.rank() != 2 || dy.dim(0) != L || dy.dim(1) != out_)
            throw ShapeError("conv backward shape mismatch");
        Tensor dx({L, in_});
        for (Index l = 0; l < L; ++l) {
            const double* dyr = dy.data() + l * out_;
            for (Index o = 0; o < out_; ++o) bias.grad[o] += dyr[o];
            for (Index k = 0; k < kernel_; ++k) {
                const Index src = l + k - half;
                if (src < 0 || src >= L) continue;
                const double* xr = cache_x_.data() + src * in_;
                double* dxr = dx.data() + src * in_;
                for (Index o = 0; o < out_; ++o) {
                    const double g = dyr[o];
                    double* dwr = weight.grad.data() + (o * kernel_ + k) * in_;
                    const double* wr = weight.value.data() + (o * kernel_ + k) * in_;
                    for (Index i = 0; i < in_; ++i) {
                        dwr[i] += g * xr[i];
                        dxr[i] += g * wr[i];
                    }
                }
            }
        }
        return dx;
    }

    std::vector<Parameter*> params() { return {&weight, &bias}; }

    Index in_, out_, kernel_;
    Parameter weight, bias;

private:
    Tensor cache_x_;
};

// Mean over an odd window along the frame axis, zero-padded, fixed divisor.
class AvgPoolSame {
public:
    explicit AvgPoolSame(Index window) : window_(window) {
        if (window_ < 1 || window_ % 2 == 0) throw ArgumentError("pool window must be odd");
    }

    Tensor forward(const Tensor& x) const { return pool(x); }
    Tensor backward(const Tensor& dy) const { return pool(dy); }

private:
    // Self-adjoint: the same windowed mean implements both directions.
    Tensor pool(const Tensor& x) const {
        if (x.rank() != 2) throw ShapeError("pool input must be [L, D]");
        const Index L = x.dim(0), D = x.dim(1), half = window_ / 2;
        Tensor y({L, D});
        const double inv = 1.0 / static_cast<double>(window_);
        for (Index l = 0; l < L; ++l) {
            double* yr = y.data() + l * D;
            for (Index k = -half; k <= half; ++k) {
                const Index src = l + k;
                if (src < 0 || src >= L) continue;
                const double* xr = x.data() + src * D;
                for (Index d = 0; d < D; ++d) yr[d] += xr[d];
            }
            for (Index d = 0; d < D; ++d) yr[d] *= inv;
        }
        return y;
    }

    Index window_;
};

// Per-row normalization over channels with learned gain and bias.
class LayerNorm {
public:
    LayerNorm(std::string name, Index dim)
        : dim_(dim), gain(name + ".gain", {dim}), shift(name + ".shift", {dim}) {
        gain.value.fill(1.0);
    }

    Tensor forward(const Tensor& x) {
        if (x.rank() != 2 || x.dim(1) != dim_) throw ShapeError("layernorm input shape mismatch");
        const Index L = x.dim(0);
        cache_xhat_ = Tensor({L, dim_});
        cache_inv_sigma_ = Tensor({L});
        Tensor y({L, dim_});
        for (Index l = 0; l < L; ++l) {
            const double* xr = x.data() + l * dim_;
            double mean = 0.0;
            for (Index d = 0; d < dim_; ++d) mean += xr[d];
            mean /= static_cast<double>(dim_);
            double var = 0.0;
            for (Index d = 0; d < dim_; ++d) {
                const double c = xr[d] - mean;
                var += c * c;
            }
            var /= static_cast<double>(dim_);
            const double inv_sigma = 1.0 / std::sqrt(var + kEps);
            cache_inv_sigma_[l] = inv_sigma;
            double* xh = cache_xhat_.data() + l * dim_;
            double* yr = y.data() + l * dim_;
            for (Index d = 0; d < dim_; ++d) {
                xh[d] = (xr[d] - mean) * inv_sigma;
                yr[d] = gain.value[d] * xh[d] + shift.value[d];
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const Index L = cache_xhat_.dim(0);
        if (dy.rank() != 2 || dy.dim(0) != L || dy.dim(1) != dim_)
            throw ShapeError("layernorm backward shape mismatch");
        Tensor dx({L, dim_});
        for (Index l = 0; l < L; ++l) {
            const double* dyr = dy.data() + l * dim_;
            const double* xh = cache_xhat_.data() + l * dim_;
            double mean_dyh = 0.0, mean_dyh_xh = 0.0;
            for (Index d = 0; d < dim_; ++d) {
                const double dyh = dyr[d] * gain.value[d];
                mean_dyh += dyh;
                mean_dyh_xh += dyh * xh[d];
                gain.grad[d] += dyr[d] * xh[d];
                shift.grad[d] += dyr[d];
            }
            mean_dyh /= static_cast<double>(dim_);
            mean_dyh_xh /= static_cast<double>(dim_);
            const double inv_sigma = cache_inv_sigma_[l];
            double* dxr = dx.data() + l * dim_;
            for (Index d = 0; d < dim_; ++d) {
                const double dyh = dyr[d] * gain.value[d];
                dxr[d] = inv_sigma * (dyh - mean_dyh - xh[d] * mean_dyh_xh);
            }
        }
        return dx;
    }

    std::vector<Parameter*> params() { return {&gain, &shift}; }

    static constexpr double kEps = 1e-5;
    Index dim_;
    Parameter gain, shift;

private:
    Tensor cache_xhat_;
    Tensor cache_inv_sigma_;
};

class Relu {
public:
    Tensor forward(const Tensor& x) {
        cache_x_ = x;
        Tensor y = x;
        for (Index i = 0; i < y.size(); ++i)
            if (y[i] < 0.0) y[i] = 0.0;
        return y;
    }
    Tensor backward(const Tensor& dy) const {
        Tensor dx = dy;
        for (Index i = 0; i < dx.size(); ++i)
            if (cache_x_[i] <= 0.0) dx[i] = 0.0;
        return dx;
    }

private:
    Tensor cache_x_;
};

class Sigmoid {
public:
    Tensor forward(const Tensor& x) {
        cache_y_ = x;
        for (Index i = 0; i < cache_y_.size(); ++i)
            cache_y_[i] = 1.0 / (1.0 + std::exp(-cache_y_[i]));
        return cache_y_;
    }
    Tensor backward(const Tensor& dy) const {
        Tensor dx = dy;
        for (Index i = 0; i < dx.size(); ++i) dx[i] *= cache_y_[i] * (1.0 - cache_y_[i]);
        return dx;
    }

private:
    Tensor cache_y_;
};

// One sequence block: token mixing by windowed average pooling with a
// residual, a pointwise channel MLP with a residual, then layer norm.
class MixerBlock {
public:
    MixerBlock(const std::string& name, Index dim, Index window, Index expansion)
        : pool_(window),
          fc1_(name + ".mlp.fc1", dim, dim * expansion),
          fc2_(name + ".mlp.fc2", dim * expansion, dim),
          ln_(name + ".ln", dim) {}

    void init(Rng& rng) {
        fc1_.init_uniform(rng);
        fc2_.init_uniform(rng);
    }

    Tensor forward(const Tensor& x) {
        Tensor z = pool_.forward(x);
        for (Index i = 0; i < z.size(); ++i) z[i] += x[i];
        Tensor m = fc2_.forward(relu_.forward(fc1_.forward(z)));
        for (Index i = 0; i < m.size(); ++i) m[i] += z[i];
        return ln_.forward(m);
    }

    Tensor backward(const Tensor& dy) {
        Tensor dm = ln_.backward(dy);
        Tensor dz = fc1_.backward(relu_.backward(fc2_.backward(dm)));
        for (Index i = 0; i < dz.size(); ++i) dz[i] += dm[i];
        Tensor dx = pool_.backward(dz);
        for (Index i = 0; i < dx.size(); ++i) dx[i] += dz[i];
        return dx;
    }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out = fc1_.params();
        for (Parameter* p : fc2_.params()) out.push_back(p);
        for (Parameter* p : ln_.params()) out.push_back(p);
        return out;
    }

private:
    AvgPoolSame pool_;
    Linear fc1_, fc2_;
    Relu relu_;
    LayerNorm ln_;
};

class Adam {
public:
    explicit Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (Parameter* p : params_)
            slots_.push_back({Tensor(p->value.shape()), Tensor(p->value.shape())});
    }

    void zero_grad() {
        for (Parameter* p : params_) p->zero_grad();
    }

    // Values and moments are rounded through float32 after each update so a
    // checkpoint restores the exact in-memory state.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t j = 0; j < params_.size(); ++j) {
            Parameter* p = params_[j];
            Tensor& m = slots_[j].m;
            Tensor& v = slots_[j].v;
            for (Index i = 0; i < p->value.size(); ++i) {
                const double g = p->grad[i];
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
            quantize_f32(p->value);
            quantize_f32(m);
            quantize_f32(v);
        }
    }

    std::int64_t step_count() const { return t_; }

    void save_state(Checkpoint& ckpt) const {
        ckpt.metadata["adam_t"] = std::to_string(t_);
        for (std::size_t j = 0; j < params_.size(); ++j) {
            ckpt.add("adam.m." + params_[j]->name, slots_[j].m);
            ckpt.add("adam.v." + params_[j]->name, slots_[j].v);
        }
    }

    void load_state(const Checkpoint& ckpt) {
        t_ = std::stoll(ckpt.meta("adam_t"));
        for (std::size_t j = 0; j < params_.size(); ++j) {
            Tensor m = ckpt.tensor("adam.m." + params_[j]->name);
            Tensor v = ckpt.tensor("adam.v." + params_[j]->name);
            if (!m.same_shape(slots_[j].m) || !v.same_shape(slots_[j].v))
                throw FormatError("optimizer state shape mismatch for " + params_[j]->name);
            slots_[j].m = std::move(m);
            slots_[j].v = std::move(v);
        }
    }

private:
    struct Slot {
        Tensor m, v;
    };
    std::vector<Parameter*> params_;
    std::vector<Slot> slots_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

inline void save_params(Checkpoint& ckpt, const std::vector<Parameter*>& params) {
    for (const Parameter* p : params) ckpt.add(p->name, p->value);
}

inline void load_params(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
    for (Parameter* p : params) {
        Tensor t = ckpt.tensor(p->name);
        if (!t.same_shape(p->value))
            throw FormatError("checkpoint tensor '" + p->name + "' has shape " + t.shape_string() +
                              ", expected " + p->value.shape_string());
        p->value = std::move(t);
    }
}

}  // namespace fdpn::nn
