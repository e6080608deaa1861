#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "fdpn/features.hpp"
#include "fdpn/rng.hpp"
#include "fdpn/saliency.hpp"
#include "fdpn/synthetic.hpp"

using namespace fdpn;

namespace {

std::filesystem::path temp_dir(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / "fdpn_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

Tensor random_frames(Rng& rng, Index f, Index h, Index w) {
    Tensor t({f, h, w});
    for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, 1.0);
    return t;
}

double row_distance(const Tensor& feats, Index a, Index b) {
    const Index c = feats.dim(feats.rank() - 1);
    double d = 0.0;
    for (Index i = 0; i < c; ++i) {
        const double diff = feats[a * c + i] - feats[b * c + i];
        d += diff * diff;
    }
    return std::sqrt(d);
}

}  // namespace

TEST_CASE("zero video maps to zero features") {
    const ExtractorSpec spec{ExtractorKind::toy_snippet, 16, 3};
    const Tensor feats = extract_snippet_features(Tensor({8, 12, 24}), 4, 2, spec);
    CHECK(feats.dim(0) == 4);
    CHECK(feats.dim(1) == 16);
    for (Index i = 0; i < feats.size(); ++i) CHECK(feats[i] == 0.0);

    const ExtractorSpec fspec{ExtractorKind::toy_frame, 8, 3};
    const Tensor ff = extract_frame_features(Tensor({8, 12, 24}), 4, 2, fspec);
    CHECK(ff.dim(0) == 4);
    CHECK(ff.dim(1) == 2);
    CHECK(ff.dim(2) == 8);
    for (Index i = 0; i < ff.size(); ++i) CHECK(ff[i] == 0.0);
}

TEST_CASE("identical snippets give identical feature rows") {
    Rng rng(9);
    Tensor one_snippet = random_frames(rng, 4, 12, 24);
    Tensor frames({8, 12, 24});
    for (Index f = 0; f < 8; ++f)
        for (Index i = 0; i < 12 * 24; ++i)
            frames[f * 12 * 24 + i] = one_snippet[(f % 4) * 12 * 24 + i];
    const ExtractorSpec spec{ExtractorKind::toy_snippet, 16, 3};
    const Tensor feats = extract_snippet_features(frames, 2, 4, spec);
    CHECK(row_distance(feats, 0, 1) == 0.0);
}

TEST_CASE("feature extraction is deterministic per seed") {
    Rng rng(10);
    const Tensor frames = random_frames(rng, 8, 12, 24);
    const ExtractorSpec spec{ExtractorKind::toy_snippet, 16, 5};
    const Tensor a = extract_snippet_features(frames, 4, 2, spec);
    const Tensor b = extract_snippet_features(frames, 4, 2, spec);
    CHECK(a == b);

    ExtractorSpec other = spec;
    other.seed = 6;
    const Tensor c = extract_snippet_features(frames, 4, 2, other);
    CHECK_FALSE(a == c);
}

TEST_CASE("permuting frames permutes frame feature rows") {
    Rng rng(11);
    Tensor frames = random_frames(rng, 6, 12, 24);
    Tensor swapped = frames;
    const Index plane = 12 * 24;
    for (Index i = 0; i < plane; ++i) std::swap(swapped[1 * plane + i], swapped[4 * plane + i]);
    const ExtractorSpec spec{ExtractorKind::toy_frame, 8, 3};
    const Tensor fa = extract_frame_features(frames, 3, 2, spec);
    const Tensor fb = extract_frame_features(swapped, 3, 2, spec);
    // Frame 1 lives at (t=0, n=1) and frame 4 at (t=2, n=0).
    for (Index c = 0; c < 8; ++c) {
        CHECK(fa.at(0, 1, c) == fb.at(2, 0, c));
        CHECK(fa.at(2, 0, c) == fb.at(0, 1, c));
        CHECK(fa.at(0, 0, c) == fb.at(0, 0, c));
    }
}

TEST_CASE("masking changes features exactly when nonzero pixels are removed") {
    Rng rng(12);
    Tensor frames = random_frames(rng, 2, 12, 24);
    const ExtractorSpec spec{ExtractorKind::toy_frame, 8, 3};

    // Mask that keeps everything: identical features.
    GridScores g = grid_scores(Tensor::from({12, 24}, std::vector<double>(frames.data(),
                                                                          frames.data() + 288)),
                               3);
    const GridMask keep_all = topk_mask(g, 9);
    Tensor masked_all({2, 12, 24});
    for (Index f = 0; f < 2; ++f) {
        const Tensor fr = Tensor::from({12, 24}, std::vector<double>(frames.data() + f * 288,
                                                                     frames.data() + (f + 1) * 288));
        const Tensor m = apply_mask(fr, keep_all);
        for (Index i = 0; i < 288; ++i) masked_all[f * 288 + i] = m[i];
    }
    CHECK(extract_frame_features(masked_all, 1, 2, spec) ==
          extract_frame_features(frames, 1, 2, spec));

    // Mask that drops nonzero pixels: features differ.
    const GridMask keep_one = topk_mask(g, 1);
    Tensor masked_one({2, 12, 24});
    for (Index f = 0; f < 2; ++f) {
        const Tensor fr = Tensor::from({12, 24}, std::vector<double>(frames.data() + f * 288,
                                                                     frames.data() + (f + 1) * 288));
        const Tensor m = apply_mask(fr, keep_one);
        for (Index i = 0; i < 288; ++i) masked_one[f * 288 + i] = m[i];
    }
    CHECK_FALSE(extract_frame_features(masked_one, 1, 2, spec) ==
                extract_frame_features(frames, 1, 2, spec));
}

TEST_CASE("abnormal snippets separate from normal snippets") {
    SyntheticSpec sspec;
    sspec.num_videos = 12;
    sspec.frame_count = 128;
    sspec.duration_min = 32;
    sspec.duration_max = 64;
    sspec.noise_spike_rate = 0.0;  // class separation is the subject, not noise
    sspec.seed = 77;
    const auto videos = generate_synthetic_in_memory(sspec);
    const ExtractorSpec es{ExtractorKind::toy_snippet, 32, sspec.seed};
    const Index T = 8, N = 16;

    // Snippet features temporally mean-pool, so a snippet with one event
    // frame legitimately sits near the normal cluster. Compare snippets at
    // least half covered by the event against fully clean ones.
    std::vector<std::vector<double>> normal_rows, abnormal_rows;
    for (const auto& v : videos) {
        const Tensor feats = extract_snippet_features(v.frames, T, N, es);
        for (Index t = 0; t < T; ++t) {
            Index lit = 0;
            for (Index f = t * N; f < (t + 1) * N; ++f) {
                bool frame_lit = false;
                for (Index i = 0; i < 36 * 72 && !frame_lit; ++i)
                    frame_lit = v.frames[f * 36 * 72 + i] > sspec.anomaly_intensity * 0.5;
                lit += frame_lit;
            }
            if (lit > 0 && lit < N / 2) continue;  // ambiguous edge snippet
            std::vector<double> row(32);
            for (Index c = 0; c < 32; ++c) row[static_cast<std::size_t>(c)] = feats.at(t, c);
            (lit ? abnormal_rows : normal_rows).push_back(std::move(row));
        }
    }
    REQUIRE(abnormal_rows.size() >= 10);
    REQUIRE(normal_rows.size() >= 50);

    // Nearest-centroid separation: every abnormal snippet sits farther from
    // the normal centroid than any normal snippet does.
    std::vector<double> centroid(32, 0.0);
    for (const auto& r : normal_rows)
        for (std::size_t c = 0; c < 32; ++c) centroid[c] += r[c] / normal_rows.size();
    auto dist = [&](const std::vector<double>& r) {
        double d = 0.0;
        for (std::size_t c = 0; c < 32; ++c) d += (r[c] - centroid[c]) * (r[c] - centroid[c]);
        return std::sqrt(d);
    };
    double max_normal = 0.0, min_abnormal = 1e300;
    for (const auto& r : normal_rows) max_normal = std::max(max_normal, dist(r));
    for (const auto& r : abnormal_rows) min_abnormal = std::min(min_abnormal, dist(r));
    CHECK(min_abnormal > max_normal);
}

TEST_CASE("feature store round trip and corruption") {
    const auto dir = temp_dir("feature_store");
    Rng rng(15);
    Tensor t({4, 2, 8});
    for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    quantize_f32(t);
    store_features(feature_path(dir, "v000", "frame"), t);
    CHECK(load_features(feature_path(dir, "v000", "frame")) == t);
    CHECK(feature_path(dir, "v000", "frame").filename().string() == "v000.frame.fdpn");

    CHECK_THROWS_AS(load_features(dir / "absent.fdpn"), IoError);
}

TEST_CASE("extractor argument errors") {
    const ExtractorSpec spec{ExtractorKind::toy_snippet, 16, 3};
    CHECK_THROWS_AS(extract_snippet_features(Tensor({0, 12, 24}), 4, 2, spec), ArgumentError);
    CHECK_THROWS_AS(extract_snippet_features(Tensor({7, 12, 24}), 4, 2, spec), ShapeError);
    const ExtractorSpec pre{ExtractorKind::precomputed, 16, 3};
    CHECK_THROWS_AS(extract_snippet_features(Tensor({8, 12, 24}), 4, 2, pre), ArgumentError);
    const ExtractorSpec bad{ExtractorKind::toy_snippet, 0, 3};
    CHECK_THROWS_AS(extract_snippet_features(Tensor({8, 12, 24}), 4, 2, bad), ArgumentError);
}
