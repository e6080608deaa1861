// Saliency heatmaps and the grid masking preprocess: per-cell importance
// scores, top-K binary keep-masks, masked images, and the 1x3 direction
// thirds distribution.
//
// The heatmap producer is an interface; the built-in model is temporal
// difference saliency (smoothed |frame_t - frame_{t-1}|), and precomputed
// heatmaps can be supplied from tensor files in place of a real model.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/tensor.hpp"

namespace fdpn {

// Per-cell sums of heatmap values over an n x n partition of the image.
struct GridScores {
    Tensor values;  // [n, n]
    Index n = 0;
};

// Binary keep-mask: exactly k cells set.
struct GridMask {
    std::vector<std::uint8_t> keep;  // row-major n*n
    Index n = 0;
    Index k = 0;
    bool kept(Index i, Index j) const { return keep[static_cast<std::size_t>(i * n + j)] != 0; }
};

// Softmax-normalized saliency mass over the three vertical panorama thirds
// (left_back, center, right_back).
struct DirectionSaliency {
    std::array<double, 3> probs{};
};

namespace detail {

// Cell boundaries by floor division; the last cell absorbs the remainder.
inline Index cell_lo(Index extent, Index n, Index i) { return i * (extent / n); }
inline Index cell_hi(Index extent, Index n, Index i) {
    return i == n - 1 ? extent : (i + 1) * (extent / n);
}

}  // namespace detail

class SaliencyModel {
public:
    virtual ~SaliencyModel() = default;
    // frames: [F, H, W] -> heatmaps [F, H, W], all values >= 0.
    virtual Tensor compute(const Tensor& frames) const = 0;
};

// |frame_t - frame_{t-1}| smoothed with a 3x3 box; the first frame gets a
// zero map (no temporal change available).
class TempDiffSaliency final : public SaliencyModel {
public:
    Tensor compute(const Tensor& frames) const override {
        if (frames.rank() != 3) throw ShapeError("saliency input must be [frames, height, width]");
        const Index F = frames.dim(0), H = frames.dim(1), W = frames.dim(2);
        if (F < 1) throw ArgumentError("saliency needs at least one frame");
        Tensor heat({F, H, W});
        Tensor diff({H, W});
        for (Index f = 1; f < F; ++f) {
            for (Index y = 0; y < H; ++y)
                for (Index x = 0; x < W; ++x)
                    diff.at(y, x) = std::abs(frames.at(f, y, x) - frames.at(f - 1, y, x));
            // 3x3 box mean over valid neighbors.
            for (Index y = 0; y < H; ++y) {
                for (Index x = 0; x < W; ++x) {
                    double sum = 0.0;
                    int cnt = 0;
                    for (Index dy = -1; dy <= 1; ++dy) {
                        for (Index dx = -1; dx <= 1; ++dx) {
                            const Index yy = y + dy, xx = x + dx;
                            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                            sum += diff.at(yy, xx);
                            ++cnt;
                        }
                    }
                    heat.at(f, y, x) = sum / cnt;
                }
            }
        }
        return heat;
    }
};

// Precomputed heatmaps loaded from a tensor file; lets real saliency model
// outputs drop into the pipeline.
class FileSaliency final : public SaliencyModel {
public:
    explicit FileSaliency(Tensor heatmaps) : heatmaps_(std::move(heatmaps)) {
        if (heatmaps_.rank() != 3)
            throw ShapeError("precomputed saliency must be [frames, height, width]");
    }
    Tensor compute(const Tensor& frames) const override {
        if (!frames.same_shape(heatmaps_))
            throw ShapeError("precomputed saliency shape " + heatmaps_.shape_string() +
                             " does not match frames " + frames.shape_string());
        return heatmaps_;
    }

private:
    Tensor heatmaps_;
};

inline Tensor compute_saliency(const Tensor& frames) { return TempDiffSaliency().compute(frames); }

inline GridScores grid_scores(const Tensor& heatmap, Index n) {
    if (heatmap.rank() != 2) throw ShapeError("grid scores expect a [height, width] heatmap");
    if (n <= 0) throw ArgumentError("grid side length must be positive");
    const Index H = heatmap.dim(0), W = heatmap.dim(1);
    if (n > H || n > W) throw ArgumentError("grid side length exceeds image dimensions");
    GridScores g;
    g.n = n;
    g.values = Tensor({n, n});
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double sum = 0.0;
            for (Index y = detail::cell_lo(H, n, i); y < detail::cell_hi(H, n, i); ++y)
                for (Index x = detail::cell_lo(W, n, j); x < detail::cell_hi(W, n, j); ++x)
                    sum += heatmap.at(y, x);
            g.values.at(i, j) = sum;
        }
    }
    return g;
}

// Keeps the k highest-scoring cells; ties break toward the smaller
// row-major cell index, so masks are nested as k grows.
inline GridMask topk_mask(const GridScores& g, Index k) {
    const Index cells = g.n * g.n;
    if (k < 1 || k > cells) throw ArgumentError("top-k must be in [1, n^2]");
    std::vector<Index> order(static_cast<std::size_t>(cells));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double sa = g.values[a], sb = g.values[b];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    GridMask m;
    m.n = g.n;
    m.k = k;
    m.keep.assign(static_cast<std::size_t>(cells), 0);
    for (Index r = 0; r < k; ++r) m.keep[static_cast<std::size_t>(order[r])] = 1;
    return m;
}

// Pixels in kept cells pass through; everything else becomes exactly zero.
inline Tensor apply_mask(const Tensor& frame, const GridMask& m) {
    if (frame.rank() != 2) throw ShapeError("mask application expects a [height, width] frame");
    const Index H = frame.dim(0), W = frame.dim(1);
    if (m.n > H || m.n > W)
        throw ShapeError("mask grid " + std::to_string(m.n) + " does not tile a " +
                         frame.shape_string() + " frame");
    Tensor out({H, W});
    for (Index i = 0; i < m.n; ++i) {
        for (Index j = 0; j < m.n; ++j) {
            if (!m.kept(i, j)) continue;
            for (Index y = detail::cell_lo(H, m.n, i); y < detail::cell_hi(H, m.n, i); ++y)
                for (Index x = detail::cell_lo(W, m.n, j); x < detail::cell_hi(W, m.n, j); ++x)
                    out.at(y, x) = frame.at(y, x);
        }
    }
    return out;
}

inline std::array<double, 3> softmax3(const std::array<double, 3>& v) {
    const double m = std::max({v[0], v[1], v[2]});
    std::array<double, 3> e{std::exp(v[0] - m), std::exp(v[1] - m), std::exp(v[2] - m)};
    const double z = e[0] + e[1] + e[2];
    return {e[0] / z, e[1] / z, e[2] / z};
}

// Saliency mass per vertical third: x in [0, W/3) -> left_back,
// [W/3, 2W/3) -> center, [2W/3, W) -> right_back.
inline std::array<double, 3> third_sums(const Tensor& heatmap) {
    if (heatmap.rank() != 2) throw ShapeError("direction saliency expects a [height, width] heatmap");
    const Index H = heatmap.dim(0), W = heatmap.dim(1);
    if (W < 3) throw ArgumentError("direction saliency needs width >= 3");
    std::array<double, 3> sums{};
    const Index t = W / 3;
    for (Index y = 0; y < H; ++y) {
        for (Index x = 0; x < W; ++x) {
            const Index third = x < t ? 0 : (x < 2 * t ? 1 : 2);
            sums[static_cast<std::size_t>(third)] += heatmap.at(y, x);
        }
    }
    return sums;
}

inline DirectionSaliency direction_saliency(const Tensor& heatmap) {
    return DirectionSaliency{softmax3(third_sums(heatmap))};
}

}  // namespace fdpn
