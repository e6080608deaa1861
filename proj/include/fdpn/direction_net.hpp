// Direction prediction: a sequence stack emits per-frame 3-way logits which
// are softmaxed, refined by the frame's saliency-thirds distribution, and
// mean-pooled over frames into one video-level direction distribution.
//
// Refinement operators: `product` multiplies the two distributions
// elementwise and renormalizes (so uniform saliency is the identity);
// `additive` averages them. Ablation modes run the network alone (uniform
// saliency injected) or the saliency thirds alone.

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/frame_net.hpp"
#include "fdpn/nn.hpp"
#include "fdpn/tensor.hpp"

namespace fdpn {

enum class DpsMode { network_only, saliency_only, combined };
enum class DpsFusion { product, additive };

inline DpsMode dps_mode_from_string(const std::string& s) {
    if (s == "network_only") return DpsMode::network_only;
    if (s == "saliency_only") return DpsMode::saliency_only;
    if (s == "combined") return DpsMode::combined;
    throw ArgumentError("unknown dps mode '" + s + "'");
}

class DirectionNet {
public:
    explicit DirectionNet(const StackConfig& cfg)
        : stack_("dps", cfg), head_("dps.head", cfg.dim, 3) {
        head_.init_zero();
    }

    void init(Rng& rng) {
        stack_.init(rng);
        head_.init_zero();
        for (nn::Parameter* p : params()) quantize_f32(p->value);
    }

    // x: [L, D] fused direction features; thirds: [L, 3] per-frame saliency
    // distributions. Returns the video-level distribution.
    std::array<double, 3> forward(const Tensor& x, const Tensor& thirds, DpsMode mode,
                                  DpsFusion fusion = DpsFusion::product) {
        if (thirds.rank() != 2 || thirds.dim(1) != 3)
            throw ShapeError("saliency thirds must be [L, 3]");
        mode_ = mode;
        fusion_ = fusion;
        if (mode == DpsMode::saliency_only) {
            std::array<double, 3> p{};
            const Index L = thirds.dim(0);
            for (Index l = 0; l < L; ++l)
                for (Index k = 0; k < 3; ++k) p[static_cast<std::size_t>(k)] += thirds.at(l, k);
            for (double& v : p) v /= static_cast<double>(L);
            return p;
        }
        if (x.rank() != 2 || x.dim(0) != thirds.dim(0))
            throw ShapeError("direction features and thirds disagree on frame count");
        const Index L = x.dim(0);
        Tensor logits = head_.forward(stack_.forward(x));
        soft_ = Tensor({L, 3});
        refined_ = Tensor({L, 3});
        denom_ = Tensor({L});
        thirds_ = thirds;
        std::array<double, 3> p{};
        for (Index l = 0; l < L; ++l) {
            const double* z = logits.data() + l * 3;
            const double m = std::max({z[0], z[1], z[2]});
            double zsum = 0.0;
            for (Index k = 0; k < 3; ++k) {
                soft_.at(l, k) = std::exp(z[k] - m);
                zsum += soft_.at(l, k);
            }
            for (Index k = 0; k < 3; ++k) soft_.at(l, k) /= zsum;
            if (mode == DpsMode::network_only) {
                for (Index k = 0; k < 3; ++k) refined_.at(l, k) = soft_.at(l, k);
                denom_[l] = 1.0;
            } else if (fusion == DpsFusion::product) {
                double d = 0.0;
                for (Index k = 0; k < 3; ++k) d += soft_.at(l, k) * thirds.at(l, k);
                denom_[l] = d;
                for (Index k = 0; k < 3; ++k)
                    refined_.at(l, k) = soft_.at(l, k) * thirds.at(l, k) / d;
            } else {
                for (Index k = 0; k < 3; ++k)
                    refined_.at(l, k) = 0.5 * (soft_.at(l, k) + thirds.at(l, k));
            }
            for (Index k = 0; k < 3; ++k)
                p[static_cast<std::size_t>(k)] += refined_.at(l, k) / static_cast<double>(L);
        }
        return p;
    }

    // dprob: gradient at the video-level distribution. Returns d/dx.
    // saliency_only involves no network, so the input gradient is zero.
    Tensor backward(const std::array<double, 3>& dprob) {
        if (mode_ == DpsMode::saliency_only)
            throw ArgumentError("saliency_only mode has no trainable path");
        const Index L = soft_.dim(0);
        Tensor dlogits({L, 3});
        for (Index l = 0; l < L; ++l) {
            std::array<double, 3> dq;
            for (Index k = 0; k < 3; ++k)
                dq[static_cast<std::size_t>(k)] =
                    dprob[static_cast<std::size_t>(k)] / static_cast<double>(L);
            std::array<double, 3> gs{};
            if (mode_ == DpsMode::network_only) {
                double dot = 0.0;
                for (Index k = 0; k < 3; ++k)
                    dot += dq[static_cast<std::size_t>(k)] * refined_.at(l, k);
                for (Index k = 0; k < 3; ++k)
                    gs[static_cast<std::size_t>(k)] = dq[static_cast<std::size_t>(k)] - dot;
            } else if (fusion_ == DpsFusion::product) {
                double dot = 0.0;
                for (Index k = 0; k < 3; ++k)
                    dot += dq[static_cast<std::size_t>(k)] * refined_.at(l, k);
                for (Index k = 0; k < 3; ++k)
                    gs[static_cast<std::size_t>(k)] =
                        thirds_.at(l, k) * (dq[static_cast<std::size_t>(k)] - dot) / denom_[l];
            } else {
                for (Index k = 0; k < 3; ++k)
                    gs[static_cast<std::size_t>(k)] = 0.5 * dq[static_cast<std::size_t>(k)];
            }
            // Softmax backward.
            double gdot = 0.0;
            for (Index k = 0; k < 3; ++k) gdot += gs[static_cast<std::size_t>(k)] * soft_.at(l, k);
            for (Index k = 0; k < 3; ++k)
                dlogits.at(l, k) = soft_.at(l, k) * (gs[static_cast<std::size_t>(k)] - gdot);
        }
        return stack_.backward(head_.backward(dlogits));
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
    DpsMode mode_ = DpsMode::combined;
    DpsFusion fusion_ = DpsFusion::product;
    Tensor soft_, refined_, denom_, thirds_;
};

// Spec'd ablation entry point: one call, one mode.
inline std::array<double, 3> predict_direction(DirectionNet& net, const Tensor& features,
                                               const Tensor& thirds, DpsMode mode,
                                               DpsFusion fusion = DpsFusion::product) {
    return net.forward(features, thirds, mode, fusion);
}

}  // namespace fdpn
