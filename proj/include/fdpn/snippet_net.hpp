// Snippet-level scoring: a pluggable scorer that turns snippet features
// [T, C] into refined features [T, C''] plus anomaly scores [T] in [0,1],
// and the pseudo-label rule that lifts snippet scores to frame-level
// supervision. The built-in scorer is a two-layer perceptron trained with a
// max-based MIL ranking hinge over positive/negative video pairs; external
// snippet networks plug in through precomputed score/feature files.

#pragma once

#include <algorithm>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/features.hpp"
#include "fdpn/nn.hpp"
#include "fdpn/tensor.hpp"

namespace fdpn {

// Snippet scores for one positive/negative video pair batch.
struct SnippetScores {
    Tensor positive;  // [B, T]
    Tensor negative;  // [B, T]
};

// Frame-level pseudo labels, one per (video, snippet, frame-in-snippet).
struct PseudoLabels {
    Tensor positive;  // [B, T, N]
    Tensor negative;  // [B, T, N], identically zero
};

// One video's pseudo labels [T, N]: positive-video snippets with score
// >= 0.5 label all their frames 1; negative videos label everything 0.
inline Tensor pseudo_label_video(const Tensor& scores, Index frames_per_snippet, bool positive) {
    if (scores.rank() != 1) throw ShapeError("snippet scores must be [T]");
    if (frames_per_snippet < 1) throw ArgumentError("frames_per_snippet must be >= 1");
    Tensor out({scores.size(), frames_per_snippet});
    if (positive)
        for (Index t = 0; t < scores.size(); ++t)
            if (scores[t] >= 0.5)
                for (Index n = 0; n < frames_per_snippet; ++n) out.at(t, n) = 1.0;
    return out;
}

inline PseudoLabels make_pseudo_labels(const SnippetScores& scores, Index frames_per_snippet) {
    if (scores.positive.rank() != 2 || scores.negative.rank() != 2)
        throw ShapeError("snippet scores must be [videos, snippets]");
    if (frames_per_snippet < 1) throw ArgumentError("frames_per_snippet must be >= 1");
    const Index bp = scores.positive.dim(0), tp = scores.positive.dim(1);
    const Index bn = scores.negative.dim(0), tn = scores.negative.dim(1);
    PseudoLabels out;
    out.positive = Tensor({bp, tp, frames_per_snippet});
    out.negative = Tensor({bn, tn, frames_per_snippet});
    for (Index b = 0; b < bp; ++b) {
        const Tensor row = Tensor::from(
            {tp}, std::vector<double>(scores.positive.data() + b * tp,
                                      scores.positive.data() + (b + 1) * tp));
        const Tensor labels = pseudo_label_video(row, frames_per_snippet, true);
        for (Index i = 0; i < labels.size(); ++i)
            out.positive[b * tp * frames_per_snippet + i] = labels[i];
    }
    return out;
}

class SnippetScorer {
public:
    virtual ~SnippetScorer() = default;
    // features: [T, C] -> (refined [T, C''], scores [T] in [0,1]).
    virtual std::pair<Tensor, Tensor> score(const std::string& video_id,
                                            const Tensor& features) = 0;
    virtual Index refined_channels() const = 0;
};

// Two-layer perceptron: fc1 -> relu (the refined features) -> fc2 -> sigmoid.
// The final layer starts at zero so an untrained scorer emits 0.5 everywhere.
class ToySnippetScorer final : public SnippetScorer {
public:
    ToySnippetScorer(Index in_channels, Index hidden_channels)
        : in_channels_(in_channels),
          hidden_channels_(hidden_channels),
          fc1_("snippet.fc1", in_channels, hidden_channels),
          fc2_("snippet.fc2", hidden_channels, 1) {
        fc2_.init_zero();
    }

    void init(Rng& rng) {
        fc1_.init_uniform(rng);
        fc2_.init_zero();
        for (nn::Parameter* p : params()) quantize_f32(p->value);
    }

    std::pair<Tensor, Tensor> score(const std::string&, const Tensor& features) override {
        Tensor refined = forward_refined(features);
        Tensor scores = sig_.forward(fc2_.forward(refined));
        return {std::move(refined), scores.reshaped({scores.dim(0)})};
    }

    // Backward from (d/d scores [T], d/d refined [T, C'']); returns d/d features.
    Tensor backward(const Tensor& dscores, const Tensor& drefined) {
        Tensor dhid = fc2_.backward(sig_.backward(dscores.reshaped({dscores.size(), 1})));
        for (Index i = 0; i < dhid.size(); ++i) dhid[i] += drefined[i];
        return fc1_.backward(relu_.backward(dhid));
    }

    Index refined_channels() const override { return hidden_channels_; }
    Index in_channels() const { return in_channels_; }

    std::vector<nn::Parameter*> params() {
        std::vector<nn::Parameter*> out = fc1_.params();
        for (nn::Parameter* p : fc2_.params()) out.push_back(p);
        return out;
    }

private:
    Tensor forward_refined(const Tensor& features) {
        if (features.rank() != 2 || features.dim(1) != in_channels_)
            throw ShapeError("snippet scorer expects [T, " + std::to_string(in_channels_) +
                             "] features, got " + features.shape_string());
        return relu_.forward(fc1_.forward(features));
    }

    Index in_channels_, hidden_channels_;
    nn::Linear fc1_, fc2_;
    nn::Relu relu_;
    nn::Sigmoid sig_;
};

// MIL ranking hinge for one pair: max(0, 1 - max_t s+ + max_t s-). Returns
// the loss and writes the subgradient into (dpos, dneg) at the two argmax
// snippets (ties toward the lower index).
inline double mil_pair_loss(const Tensor& pos_scores, const Tensor& neg_scores, Tensor& dpos,
                            Tensor& dneg) {
    auto arg_max = [](const Tensor& s) {
        Index best = 0;
        for (Index i = 1; i < s.size(); ++i)
            if (s[i] > s[best]) best = i;
        return best;
    };
    const Index ap = arg_max(pos_scores), an = arg_max(neg_scores);
    const double margin = 1.0 - pos_scores[ap] + neg_scores[an];
    dpos = Tensor(pos_scores.shape());
    dneg = Tensor(neg_scores.shape());
    if (margin <= 0.0) return 0.0;
    dpos[ap] = -1.0;
    dneg[an] = 1.0;
    return margin;
}

// Plug-point for external snippet networks: per-video score and refined
// feature tensors in files <id>.snippet_scores.fdpn / <id>.snippet_refined.fdpn.
class PrecomputedSnippetScorer final : public SnippetScorer {
public:
    PrecomputedSnippetScorer(std::filesystem::path dir, Index refined_channels)
        : dir_(std::move(dir)), refined_channels_(refined_channels) {}

    std::pair<Tensor, Tensor> score(const std::string& video_id, const Tensor& features) override {
        Tensor scores = load_features(feature_path(dir_, video_id, "snippet_scores"));
        Tensor refined = load_features(feature_path(dir_, video_id, "snippet_refined"));
        if (scores.rank() != 1 || scores.dim(0) != features.dim(0))
            throw FormatError("precomputed snippet scores for '" + video_id +
                              "' do not match the snippet count");
        if (refined.rank() != 2 || refined.dim(0) != features.dim(0) ||
            refined.dim(1) != refined_channels_)
            throw FormatError("precomputed refined features for '" + video_id +
                              "' have unexpected shape " + refined.shape_string());
        for (Index i = 0; i < scores.size(); ++i)
            if (scores[i] < 0.0 || scores[i] > 1.0)
                throw FormatError("precomputed snippet scores for '" + video_id +
                                  "' fall outside [0,1]");
        return {std::move(refined), std::move(scores)};
    }

    Index refined_channels() const override { return refined_channels_; }

private:
    std::filesystem::path dir_;
    Index refined_channels_;
};

}  // namespace fdpn
