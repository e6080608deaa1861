// Feature extraction: snippet-level features from original frames and
// frame-level features from masked frames. The real backbones are behind
// this interface; the built-in "toy" extractors compute pooled block
// statistics (mean/std/max over a fixed block grid) and project them with
// a seeded random matrix, which keeps the whole pipeline deterministic and
// fast while preserving class separability on synthetic data.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/rng.hpp"
#include "fdpn/saliency.hpp"
#include "fdpn/tensor.hpp"
#include "fdpn/tensor_io.hpp"

namespace fdpn {

enum class ExtractorKind { toy_snippet, toy_frame, precomputed };

struct ExtractorSpec {
    ExtractorKind kind = ExtractorKind::toy_snippet;
    Index channels = 64;
    std::uint64_t seed = 0;

    void validate() const {
        if (channels <= 0) throw ArgumentError("extractor channels must be positive");
    }
};

namespace detail {

// Statistics block grid; frames are 2:1 panoramas so the grid is too.
inline constexpr Index kStatRows = 3;
inline constexpr Index kStatCols = 6;
inline constexpr Index kStatsPerBlock = 3;  // mean, std, max

inline Index stat_dim() { return kStatRows * kStatCols * kStatsPerBlock; }

// Mean/std/max per block for one frame.
inline std::vector<double> frame_block_stats(const Tensor& frames, Index f) {
    const Index H = frames.dim(1), W = frames.dim(2);
    if (H < kStatRows || W < kStatCols)
        throw ShapeError("frames too small for the statistics grid");
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(stat_dim()));
    for (Index bi = 0; bi < kStatRows; ++bi) {
        const Index y0 = cell_lo(H, kStatRows, bi), y1 = cell_hi(H, kStatRows, bi);
        for (Index bj = 0; bj < kStatCols; ++bj) {
            const Index x0 = cell_lo(W, kStatCols, bj), x1 = cell_hi(W, kStatCols, bj);
            double sum = 0.0, sum2 = 0.0, mx = 0.0;
            Index count = 0;
            for (Index y = y0; y < y1; ++y) {
                for (Index x = x0; x < x1; ++x) {
                    const double v = frames.at(f, y, x);
                    sum += v;
                    sum2 += v * v;
                    mx = std::max(mx, v);
                    ++count;
                }
            }
            const double mean = sum / count;
            const double var = std::max(0.0, sum2 / count - mean * mean);
            stats.push_back(mean);
            stats.push_back(std::sqrt(var));
            stats.push_back(mx);
        }
    }
    return stats;
}

// Snippet statistics: per-frame block stats averaged over the snippet's
// frames. Temporal mean pooling deliberately smears short events, the way
// snippet-level video features do.
inline std::vector<double> pooled_block_stats(const Tensor& frames, Index f_begin, Index f_end) {
    std::vector<double> stats(static_cast<std::size_t>(stat_dim()), 0.0);
    const double inv = 1.0 / static_cast<double>(f_end - f_begin);
    for (Index f = f_begin; f < f_end; ++f) {
        const auto frame_stats = frame_block_stats(frames, f);
        for (std::size_t i = 0; i < stats.size(); ++i) stats[i] += inv * frame_stats[i];
    }
    return stats;
}

// Fixed random projection [channels, stat_dim], U(+-1/sqrt(stat_dim)).
inline Tensor projection_matrix(Index channels, std::uint64_t seed, std::uint64_t kind_tag) {
    Tensor w({channels, stat_dim()});
    Rng rng = Rng(seed).derive(kind_tag);
    const double bound = 1.0 / std::sqrt(static_cast<double>(stat_dim()));
    for (Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
    return w;
}

inline void project(const std::vector<double>& stats, const Tensor& w, double* out) {
    const Index C = w.dim(0), S = w.dim(1);
    for (Index c = 0; c < C; ++c) {
        double acc = 0.0;
        const double* row = w.data() + c * S;
        for (Index s = 0; s < S; ++s) acc += row[s] * stats[static_cast<std::size_t>(s)];
        out[c] = acc;
    }
}

}  // namespace detail

// Snippet features from original frames: [T, C]. Frame count must equal
// snippets * frames_per_snippet (pad beforehand).
inline Tensor extract_snippet_features(const Tensor& frames, Index snippets,
                                       Index frames_per_snippet, const ExtractorSpec& spec) {
    spec.validate();
    if (spec.kind == ExtractorKind::precomputed)
        throw ArgumentError("precomputed features are loaded from files, not extracted");
    if (frames.rank() != 3) throw ShapeError("extractor input must be [frames, height, width]");
    if (frames.dim(0) <= 0) throw ArgumentError("cannot extract features from an empty video");
    if (frames.dim(0) != snippets * frames_per_snippet)
        throw ShapeError("frame count " + std::to_string(frames.dim(0)) + " != snippets*frames (" +
                         std::to_string(snippets * frames_per_snippet) + ")");
    const Tensor w = detail::projection_matrix(spec.channels, spec.seed, 11);
    Tensor out({snippets, spec.channels});
    for (Index t = 0; t < snippets; ++t) {
        const auto stats = detail::pooled_block_stats(frames, t * frames_per_snippet,
                                                      (t + 1) * frames_per_snippet);
        detail::project(stats, w, out.data() + t * spec.channels);
    }
    return out;
}

// Frame features from masked frames: [T, N, C'].
inline Tensor extract_frame_features(const Tensor& masked_frames, Index snippets,
                                     Index frames_per_snippet, const ExtractorSpec& spec) {
    spec.validate();
    if (spec.kind == ExtractorKind::precomputed)
        throw ArgumentError("precomputed features are loaded from files, not extracted");
    if (masked_frames.rank() != 3)
        throw ShapeError("extractor input must be [frames, height, width]");
    if (masked_frames.dim(0) <= 0)
        throw ArgumentError("cannot extract features from an empty video");
    if (masked_frames.dim(0) != snippets * frames_per_snippet)
        throw ShapeError("frame count does not equal snippets*frames_per_snippet");
    const Tensor w = detail::projection_matrix(spec.channels, spec.seed, 13);
    Tensor out({snippets, frames_per_snippet, spec.channels});
    for (Index t = 0; t < snippets; ++t) {
        for (Index n = 0; n < frames_per_snippet; ++n) {
            const Index f = t * frames_per_snippet + n;
            const auto stats = detail::frame_block_stats(masked_frames, f);
            detail::project(stats, w, out.data() + (t * frames_per_snippet + n) * spec.channels);
        }
    }
    return out;
}

// Feature files are plain FDPN tensors named <video_id>.<kind>.fdpn.
inline void store_features(const std::filesystem::path& path, const Tensor& features) {
    save_tensor(path, features);
}

inline Tensor load_features(const std::filesystem::path& path) { return load_tensor(path); }

inline std::filesystem::path feature_path(const std::filesystem::path& dir,
                                          const std::string& video_id, const std::string& kind) {
    return dir / (video_id + "." + kind + ".fdpn");
}

}  // namespace fdpn
