// Frame-level scoring: fusing per-frame features with broadcast snippet
// features, and the frame score network — a pooling token-mixer stack over
// the flattened frame axis, a 1-D convolution, and a logistic head. The
// flattened axis preserves temporal order, so the receptive field crosses
// snippet boundaries.

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/nn.hpp"
#include "fdpn/tensor.hpp"

namespace fdpn {

// Concatenates each frame's features with its snippet's vector repeated
// across the snippet's N frame slots: [T, N, Cf] + [T, Cs] -> [T, N, Cf+Cs],
// frame channels first.
inline Tensor fuse_features(const Tensor& frame_feats, const Tensor& snippet_feats) {
    if (frame_feats.rank() != 3) throw ShapeError("frame features must be [T, N, C]");
    if (snippet_feats.rank() != 2) throw ShapeError("snippet features must be [T, C]");
    if (frame_feats.dim(0) != snippet_feats.dim(0))
        throw ShapeError("frame/snippet feature snippet counts differ: " +
                         frame_feats.shape_string() + " vs " + snippet_feats.shape_string());
    const Index T = frame_feats.dim(0), N = frame_feats.dim(1);
    const Index Cf = frame_feats.dim(2), Cs = snippet_feats.dim(1);
    Tensor out({T, N, Cf + Cs});
    for (Index t = 0; t < T; ++t) {
        const double* snip = snippet_feats.data() + t * Cs;
        for (Index n = 0; n < N; ++n) {
            double* dst = out.data() + (t * N + n) * (Cf + Cs);
            const double* src = frame_feats.data() + (t * N + n) * Cf;
            for (Index c = 0; c < Cf; ++c) dst[c] = src[c];
            for (Index c = 0; c < Cs; ++c) dst[Cf + c] = snip[c];
        }
    }
    return out;
}

// Adjoint of fuse_features: splits a fused gradient into the frame part and
// the snippet part (summed over the N broadcast copies).
inline std::pair<Tensor, Tensor> split_fused_grad(const Tensor& dfused, Index frame_channels) {
    if (dfused.rank() != 3) throw ShapeError("fused gradient must be [T, N, C]");
    const Index T = dfused.dim(0), N = dfused.dim(1), C = dfused.dim(2);
    const Index Cs = C - frame_channels;
    if (Cs <= 0) throw ShapeError("fused gradient narrower than the frame channels");
    Tensor dframe({T, N, frame_channels});
    Tensor dsnip({T, Cs});
    for (Index t = 0; t < T; ++t) {
        double* ds = dsnip.data() + t * Cs;
        for (Index n = 0; n < N; ++n) {
            const double* src = dfused.data() + (t * N + n) * C;
            double* df = dframe.data() + (t * N + n) * frame_channels;
            for (Index c = 0; c < frame_channels; ++c) df[c] = src[c];
            for (Index c = 0; c < Cs; ++c) ds[c] += src[frame_channels + c];
        }
    }
    return {std::move(dframe), std::move(dsnip)};
}

struct StackConfig {
    Index dim = 64;
    Index blocks = 2;
    Index pool_window = 5;
    Index mlp_expansion = 2;
    Index conv_kernel = 3;

    void validate() const {
        if (dim < 1 || blocks < 1 || mlp_expansion < 1)
            throw ArgumentError("stack dims must be positive");
        if (pool_window < 1 || pool_window % 2 == 0)
            throw ArgumentError("pool window must be odd");
        if (conv_kernel < 1 || conv_kernel % 2 == 0)
            throw ArgumentError("conv kernel must be odd");
    }
};

// Shared trunk of the frame and direction networks.
class SequenceStack {
public:
    SequenceStack(const std::string& name, const StackConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        for (Index b = 0; b < cfg.blocks; ++b)
            blocks_.emplace_back(name + ".block" + std::to_string(b), cfg.dim, cfg.pool_window,
                                 cfg.mlp_expansion);
        conv_ = std::make_unique<nn::Conv1dSame>(name + ".conv", cfg.dim, cfg.dim, cfg.conv_kernel);
    }

    void init(Rng& rng) {
        for (auto& b : blocks_) b.init(rng);
        conv_->init_uniform(rng);
    }

    Tensor forward(const Tensor& x) {
        Tensor h = x;
        for (auto& b : blocks_) h = b.forward(h);
        return relu_.forward(conv_->forward(h));
    }

    Tensor backward(const Tensor& dy) {
        Tensor d = conv_->backward(relu_.backward(dy));
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
        return d;
    }

    std::vector<nn::Parameter*> params() {
        std::vector<nn::Parameter*> out;
        for (auto& b : blocks_)
            for (nn::Parameter* p : b.params()) out.push_back(p);
        for (nn::Parameter* p : conv_->params()) out.push_back(p);
        return out;
    }

    const StackConfig& config() const { return cfg_; }

private:
    StackConfig cfg_;
    std::vector<nn::MixerBlock> blocks_;
    std::unique_ptr<nn::Conv1dSame> conv_;
    nn::Relu relu_;
};

// Frame score network: stack -> zero-initialized logistic head, so an
// untrained network scores every frame 0.5.
class FrameScoreNet {
public:
    explicit FrameScoreNet(const StackConfig& cfg)
        : stack_("fps", cfg), head_("fps.head", cfg.dim, 1) {
        head_.init_zero();
    }

    void init(Rng& rng) {
        stack_.init(rng);
        head_.init_zero();
        for (nn::Parameter* p : params()) quantize_f32(p->value);
    }

    // x: [L, D] -> frame scores [L] in (0,1).
    Tensor forward(const Tensor& x) {
        Tensor s = sig_.forward(head_.forward(stack_.forward(x)));
        return s.reshaped({s.dim(0)});
    }

    // dscores: [L] -> input gradient [L, D].
    Tensor backward(const Tensor& dscores) {
        Tensor d = head_.backward(sig_.backward(dscores.reshaped({dscores.size(), 1})));
        return stack_.backward(d);
    }

    std::vector<nn::Parameter*> params() {
        std::vector<nn::Parameter*> out = stack_.params();
        for (nn::Parameter* p : head_.params()) out.push_back(p);
        return out;
    }

    const StackConfig& config() const { return stack_.config(); }

private:
    SequenceStack stack_;
    nn::Linear head_;
    nn::Sigmoid sig_;
};

}  // namespace fdpn
