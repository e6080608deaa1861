// Training objectives: binary focal loss on frame scores vs pseudo labels,
// top-R frame ranking loss on positive/negative pairs, first-difference
// smoothness, 3-way direction focal loss, and their weighted sum. Each loss
// ships with its analytic gradient; the test suite checks every gradient
// against central finite differences.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/tensor.hpp"

namespace fdpn {

struct LossConfig {
    double gamma = 2.0;       // focusing parameter shared by both focal losses
    double lambda1 = 1.0;     // ranking weight
    double lambda2 = 1.6e-3;  // smoothness weight
    double lambda3 = 0.3;     // direction weight
    Index rank_r = 48;        // top frames paired by the ranking loss
    double eps = 1e-7;        // log clamp

    void validate() const {
        if (gamma < 0.0) throw ArgumentError("gamma must be >= 0");
        if (rank_r < 1) throw ArgumentError("rank_r must be >= 1");
        if (!(eps > 0.0 && eps <= 1e-3)) throw ArgumentError("eps must be in (0, 1e-3]");
    }
};

namespace detail {

inline double clamp_score(double s, double eps) { return std::clamp(s, eps, 1.0 - eps); }

// d(focal element)/d(score), for label in {0,1}; zero where the clamp is active.
inline double focal_element_grad(double label, double s, double gamma, double eps) {
    if (s <= eps || s >= 1.0 - eps) return 0.0;
    if (label != 0.0) {
        const double pw = gamma == 0.0 ? 0.0 : gamma * std::pow(1.0 - s, gamma - 1.0);
        return pw * std::log(s) - std::pow(1.0 - s, gamma) / s;
    }
    const double pw = gamma == 0.0 ? 0.0 : gamma * std::pow(s, gamma - 1.0);
    return -pw * std::log(1.0 - s) + std::pow(s, gamma) / (1.0 - s);
}

// Indices of the top r values, descending, ties toward the lower index.
inline std::vector<Index> top_indices(const Tensor& scores, Index r) {
    std::vector<Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    order.resize(static_cast<std::size_t>(r));
    return order;
}

}  // namespace detail

// Mean over all elements of -P(1-S)^g log S - (1-P) S^g log(1-S), with S
// clamped to [eps, 1-eps].
inline double binary_focal_loss(const Tensor& labels, const Tensor& scores, double gamma,
                                double eps = 1e-7) {
    if (!labels.same_shape(scores))
        throw ShapeError("focal loss labels " + labels.shape_string() + " vs scores " +
                         scores.shape_string());
    if (labels.size() == 0) throw ArgumentError("focal loss over empty tensors");
    double total = 0.0;
    for (Index i = 0; i < scores.size(); ++i) {
        const double s = detail::clamp_score(scores[i], eps);
        if (labels[i] != 0.0)
            total += -std::pow(1.0 - s, gamma) * std::log(s);
        else
            total += -std::pow(s, gamma) * std::log(1.0 - s);
    }
    return total / static_cast<double>(scores.size());
}

inline Tensor binary_focal_loss_grad(const Tensor& labels, const Tensor& scores, double gamma,
                                     double eps = 1e-7) {
    if (!labels.same_shape(scores))
        throw ShapeError("focal loss labels/scores shape mismatch");
    Tensor g(scores.shape());
    const double scale = 1.0 / static_cast<double>(scores.size());
    for (Index i = 0; i < scores.size(); ++i)
        g[i] = scale * detail::focal_element_grad(labels[i], scores[i], gamma, eps);
    return g;
}

// Sorts both videos' frame scores descending, pairs rank-wise, and averages
// 1 - S+_r + S-_r over the top R ranks. No hinge unless `hinged`.
inline double frame_ranking_loss(const Tensor& pos_scores, const Tensor& neg_scores, Index r,
                                 bool hinged = false) {
    if (r < 1) throw ArgumentError("ranking loss needs r >= 1");
    if (r > pos_scores.size() || r > neg_scores.size())
        throw ArgumentError("ranking loss r=" + std::to_string(r) +
                            " exceeds the per-video frame count");
    const auto top_pos = detail::top_indices(pos_scores, r);
    const auto top_neg = detail::top_indices(neg_scores, r);
    double total = 0.0;
    for (Index i = 0; i < r; ++i) {
        const double term = 1.0 - pos_scores[top_pos[static_cast<std::size_t>(i)]] +
                            neg_scores[top_neg[static_cast<std::size_t>(i)]];
        total += hinged ? std::max(0.0, term) : term;
    }
    return total / static_cast<double>(r);
}

// Returns (d/d pos_scores, d/d neg_scores).
inline std::pair<Tensor, Tensor> frame_ranking_loss_grad(const Tensor& pos_scores,
                                                         const Tensor& neg_scores, Index r,
                                                         bool hinged = false) {
    if (r < 1 || r > pos_scores.size() || r > neg_scores.size())
        throw ArgumentError("ranking loss r out of range");
    Tensor dpos(pos_scores.shape());
    Tensor dneg(neg_scores.shape());
    const auto top_pos = detail::top_indices(pos_scores, r);
    const auto top_neg = detail::top_indices(neg_scores, r);
    const double scale = 1.0 / static_cast<double>(r);
    for (Index i = 0; i < r; ++i) {
        const Index pi = top_pos[static_cast<std::size_t>(i)];
        const Index ni = top_neg[static_cast<std::size_t>(i)];
        const double term = 1.0 - pos_scores[pi] + neg_scores[ni];
        if (hinged && term <= 0.0) continue;
        dpos[pi] += -scale;
        dneg[ni] += scale;
    }
    return {std::move(dpos), std::move(dneg)};
}

// (1/F) * sum of squared first differences over one video's frame scores.
// Fewer than two frames yields zero by convention.
inline double smoothness_loss(const Tensor& scores) {
    const Index f = scores.size();
    if (f < 2) return 0.0;
    double total = 0.0;
    for (Index i = 1; i < f; ++i) {
        const double d = scores[i] - scores[i - 1];
        total += d * d;
    }
    return total / static_cast<double>(f);
}

inline Tensor smoothness_loss_grad(const Tensor& scores) {
    Tensor g(scores.shape());
    const Index f = scores.size();
    if (f < 2) return g;
    const double scale = 2.0 / static_cast<double>(f);
    for (Index i = 1; i < f; ++i) {
        const double d = scores[i] - scores[i - 1];
        g[i] += scale * d;
        g[i - 1] -= scale * d;
    }
    return g;
}

// -sum_k y_k (1-p_k)^g log p_k over the three direction classes; y must be
// exactly one-hot.
inline double direction_focal_loss(const std::array<double, 3>& onehot,
                                   const std::array<double, 3>& probs, double gamma,
                                   double eps = 1e-7) {
    int ones = 0;
    for (double y : onehot) {
        if (y != 0.0 && y != 1.0) throw ArgumentError("direction label must be one-hot");
        if (y == 1.0) ++ones;
    }
    if (ones != 1) throw ArgumentError("direction label must have exactly one active class");
    double total = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        if (onehot[k] == 0.0) continue;
        const double p = detail::clamp_score(probs[k], eps);
        total += -std::pow(1.0 - p, gamma) * std::log(p);
    }
    return total;
}

inline std::array<double, 3> direction_focal_loss_grad(const std::array<double, 3>& onehot,
                                                       const std::array<double, 3>& probs,
                                                       double gamma, double eps = 1e-7) {
    std::array<double, 3> g{};
    for (std::size_t k = 0; k < 3; ++k) {
        if (onehot[k] == 0.0) continue;
        g[k] = detail::focal_element_grad(1.0, probs[k], gamma, eps);
    }
    return g;
}

struct LossComponents {
    double focal = 0.0;
    double ranking = 0.0;
    double smooth = 0.0;
    double direction = 0.0;
};

// L = L_BF + l1*L_FR + l2*L_smooth + l3*L_DF. Any non-finite component
// aborts training, naming the offender.
inline double total_loss(const LossComponents& c, const LossConfig& cfg) {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v))
            throw TrainingError(std::string("non-finite loss component: ") + name);
    };
    check(c.focal, "L_BF");
    check(c.ranking, "L_FR");
    check(c.smooth, "L_smooth");
    check(c.direction, "L_DF");
    return c.focal + cfg.lambda1 * c.ranking + cfg.lambda2 * c.smooth + cfg.lambda3 * c.direction;
}

}  // namespace fdpn
