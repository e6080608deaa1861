// Pipeline orchestration: dataset caching (saliency -> masking -> feature
// extraction), two-stage training (snippet scorer first, then the frame and
// direction networks against pseudo labels), checkpointing with exact
// resume, evaluation, and single-video prediction.
//
// Determinism: one seed derives three streams (parameter init, pair
// sampling, synthetic data). Parameters and optimizer moments are rounded
// through float32 after initialization and after every update, so a
// checkpoint restores the exact in-memory training state and a resumed run
// reproduces the uninterrupted loss log bitwise.

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fdpn/config.hpp"
#include "fdpn/dataset.hpp"
#include "fdpn/direction_net.hpp"
#include "fdpn/errors.hpp"
#include "fdpn/features.hpp"
#include "fdpn/frame_net.hpp"
#include "fdpn/losses.hpp"
#include "fdpn/metrics.hpp"
#include "fdpn/nn.hpp"
#include "fdpn/rng.hpp"
#include "fdpn/saliency.hpp"
#include "fdpn/snippet_net.hpp"
#include "fdpn/tensor.hpp"
#include "fdpn/tensor_io.hpp"

namespace fdpn {

// Repeats the last frame until the video is `target` frames long. Videos
// longer than the snippet grid are rejected; choose a larger snippet count.
inline Tensor pad_frames(const Tensor& frames, Index target) {
    if (frames.rank() != 3) throw ShapeError("frames must be [F, H, W]");
    const Index F = frames.dim(0), H = frames.dim(1), W = frames.dim(2);
    if (F > target)
        throw ValidationError("video has " + std::to_string(F) +
                              " frames, more than snippets*frames_per_snippet = " +
                              std::to_string(target));
    if (F == target) return frames;
    Tensor out({target, H, W});
    const Index plane = H * W;
    for (Index f = 0; f < target; ++f) {
        const Index src = f < F ? f : F - 1;
        const double* s = frames.data() + src * plane;
        double* d = out.data() + f * plane;
        for (Index i = 0; i < plane; ++i) d[i] = s[i];
    }
    return out;
}

struct MaskedVideo {
    Tensor masked;    // [L, H, W]
    Tensor heatmaps;  // [L, H, W]
};

// Saliency -> grid scores -> top-K mask -> masked frames. With "snippet"
// granularity one mask (from the snippet's summed heatmap) covers all of a
// snippet's frames.
inline MaskedVideo mask_video(const Tensor& frames, const SaliencyModel& model, Index grid_n,
                              Index top_k, const std::string& granularity,
                              Index frames_per_snippet = 1) {
    MaskedVideo out;
    out.heatmaps = model.compute(frames);
    const Index L = frames.dim(0), H = frames.dim(1), W = frames.dim(2);
    out.masked = Tensor({L, H, W});
    const Index plane = H * W;
    auto mask_range = [&](const Tensor& heat, Index f_begin, Index f_end) {
        const GridMask mask = topk_mask(grid_scores(heat, grid_n), top_k);
        for (Index f = f_begin; f < f_end; ++f) {
            Tensor frame = Tensor::from({H, W}, std::vector<double>(
                                                    frames.data() + f * plane,
                                                    frames.data() + (f + 1) * plane));
            const Tensor masked = apply_mask(frame, mask);
            double* d = out.masked.data() + f * plane;
            for (Index i = 0; i < plane; ++i) d[i] = masked[i];
        }
    };
    if (granularity == "snippet") {
        if (frames_per_snippet < 1 || L % frames_per_snippet != 0)
            throw ArgumentError("snippet mask granularity requires L divisible by N");
        for (Index t = 0; t < L / frames_per_snippet; ++t) {
            Tensor sum({H, W});
            for (Index f = t * frames_per_snippet; f < (t + 1) * frames_per_snippet; ++f)
                for (Index i = 0; i < plane; ++i) sum[i] += out.heatmaps[f * plane + i];
            mask_range(sum, t * frames_per_snippet, (t + 1) * frames_per_snippet);
        }
    } else if (granularity == "frame") {
        for (Index f = 0; f < L; ++f) {
            Tensor heat = Tensor::from({H, W}, std::vector<double>(
                                                   out.heatmaps.data() + f * plane,
                                                   out.heatmaps.data() + (f + 1) * plane));
            mask_range(heat, f, f + 1);
        }
    } else {
        throw ArgumentError("unknown mask granularity '" + granularity + "'");
    }
    return out;
}

// Per-frame saliency-thirds distributions: [L, 3].
inline Tensor thirds_from_heatmaps(const Tensor& heatmaps) {
    const Index L = heatmaps.dim(0), H = heatmaps.dim(1), W = heatmaps.dim(2);
    const Index plane = H * W;
    Tensor out({L, 3});
    for (Index f = 0; f < L; ++f) {
        Tensor heat = Tensor::from({H, W},
                                   std::vector<double>(heatmaps.data() + f * plane,
                                                       heatmaps.data() + (f + 1) * plane));
        const auto p = softmax3(third_sums(heat));
        for (Index k = 0; k < 3; ++k) out.at(f, k) = p[static_cast<std::size_t>(k)];
    }
    return out;
}

struct VideoData {
    VideoSample sample;
    Tensor snippet_features;  // [T, C]
    Tensor frame_features;    // [T, N, C']
    Tensor thirds;            // [L, 3]
};

struct DatasetCache {
    std::vector<VideoData> videos;  // manifest order
    std::vector<std::size_t> train_abnormal, train_normal, test;

    const VideoData& at(std::size_t i) const { return videos[i]; }
};

namespace detail {

inline std::unique_ptr<SaliencyModel> make_saliency_model(const RunConfig& cfg,
                                                          const std::string& video_id,
                                                          Index padded_frames, Index orig_frames) {
    if (cfg.saliency == "tempdiff") return std::make_unique<TempDiffSaliency>();
    Tensor maps = load_tensor(feature_path(cfg.saliency_dir, video_id, "saliency"));
    if (maps.rank() != 3 || maps.dim(0) != orig_frames)
        throw FormatError("saliency file for '" + video_id + "' does not cover " +
                          std::to_string(orig_frames) + " frames");
    // Padded frames repeat the last frame: no change, zero saliency.
    if (maps.dim(0) != padded_frames) {
        Tensor padded({padded_frames, maps.dim(1), maps.dim(2)});
        for (Index i = 0; i < maps.size(); ++i) padded[i] = maps[i];
        maps = std::move(padded);
    }
    return std::make_unique<FileSaliency>(std::move(maps));
}

}  // namespace detail

// Builds per-video features for one raw video tensor via the toy path.
inline VideoData build_video_data(const RunConfig& cfg, const VideoSample& sample,
                                  const Tensor& raw_frames) {
    if (raw_frames.dim(0) != sample.frame_count)
        throw ValidationError("video '" + sample.video_id + "': frame tensor has " +
                              std::to_string(raw_frames.dim(0)) + " frames but manifest says " +
                              std::to_string(sample.frame_count));
    const Index L = cfg.frames_per_video();
    const Tensor frames = pad_frames(raw_frames, L);
    const auto model =
        detail::make_saliency_model(cfg, sample.video_id, L, sample.frame_count);
    MaskedVideo mv =
        mask_video(frames, *model, cfg.grid_n, cfg.top_k, cfg.mask_granularity,
                   cfg.frames_per_snippet);
    VideoData vd;
    vd.sample = sample;
    vd.thirds = thirds_from_heatmaps(mv.heatmaps);
    ExtractorSpec snip_spec{ExtractorKind::toy_snippet, cfg.snippet_channels, cfg.seed};
    ExtractorSpec frame_spec{ExtractorKind::toy_frame, cfg.frame_channels, cfg.seed};
    vd.snippet_features =
        extract_snippet_features(frames, cfg.snippets, cfg.frames_per_snippet, snip_spec);
    vd.frame_features =
        extract_frame_features(mv.masked, cfg.snippets, cfg.frames_per_snippet, frame_spec);
    return vd;
}

inline DatasetCache build_dataset_cache(const RunConfig& cfg,
                                        const std::filesystem::path& dataset_dir,
                                        bool include_train, bool include_test) {
    const auto samples = load_manifest(dataset_dir / "manifest.csv");
    DatasetCache cache;
    for (const VideoSample& sample : samples) {
        const bool wanted = sample.split == Split::train ? include_train : include_test;
        if (!wanted) continue;
        VideoData vd;
        if (cfg.extractor == "precomputed") {
            vd.sample = sample;
            vd.snippet_features =
                load_features(feature_path(cfg.features_dir, sample.video_id, "snippet"));
            vd.frame_features =
                load_features(feature_path(cfg.features_dir, sample.video_id, "frame"));
            vd.thirds = load_features(feature_path(cfg.features_dir, sample.video_id, "thirds"));
            if (vd.snippet_features.rank() != 2 || vd.snippet_features.dim(0) != cfg.snippets ||
                vd.snippet_features.dim(1) != cfg.snippet_channels)
                throw FormatError("precomputed snippet features for '" + sample.video_id +
                                  "' have shape " + vd.snippet_features.shape_string());
            if (vd.frame_features.rank() != 3 || vd.frame_features.dim(0) != cfg.snippets ||
                vd.frame_features.dim(1) != cfg.frames_per_snippet ||
                vd.frame_features.dim(2) != cfg.frame_channels)
                throw FormatError("precomputed frame features for '" + sample.video_id +
                                  "' have shape " + vd.frame_features.shape_string());
            if (vd.thirds.rank() != 2 || vd.thirds.dim(0) != cfg.frames_per_video() ||
                vd.thirds.dim(1) != 3)
                throw FormatError("precomputed thirds for '" + sample.video_id +
                                  "' have shape " + vd.thirds.shape_string());
        } else {
            const Tensor raw =
                load_tensor(dataset_dir / "frames" / (sample.video_id + ".fdpn"));
            vd = build_video_data(cfg, sample, raw);
        }
        const std::size_t idx = cache.videos.size();
        if (sample.split == Split::train) {
            (sample.label == Label::abnormal ? cache.train_abnormal : cache.train_normal)
                .push_back(idx);
        } else {
            cache.test.push_back(idx);
        }
        cache.videos.push_back(std::move(vd));
    }
    return cache;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::optional<Index> max_steps;  // stop stage 2 after this many total steps
};

struct TrainResult {
    Index steps_completed = 0;
    Index total_steps = 0;
    std::filesystem::path checkpoint_path;
};

class Trainer {
public:
    Trainer(RunConfig cfg, std::filesystem::path dataset_dir, std::filesystem::path run_dir)
        : cfg_(std::move(cfg)), dataset_dir_(std::move(dataset_dir)), run_dir_(std::move(run_dir)) {
        cfg_.validate();
    }

    TrainResult train(const TrainOptions& options = {}) {
        prepare_run_dir();

        // Validate class balance before any feature work.
        {
            const auto samples = load_manifest(dataset_dir_ / "manifest.csv");
            Index n_ab = 0, n_norm = 0;
            for (const auto& s : samples) {
                if (s.split != Split::train) continue;
                (s.label == Label::abnormal ? n_ab : n_norm) += 1;
            }
            if (n_ab < 1 || n_norm < 1)
                throw ValidationError(
                    "training requires at least one abnormal and one normal train video");
        }

        cache_ = build_dataset_cache(cfg_, dataset_dir_, /*train=*/true, /*test=*/false);
        build_networks();

        Rng rng_init = Rng(cfg_.seed).derive(0);
        Rng rng_sample = Rng(cfg_.seed).derive(1);

        const std::filesystem::path ckpt_path = run_dir_ / "checkpoint.fdpc";
        Index start_step = 0;
        if (std::filesystem::exists(ckpt_path)) {
            const Checkpoint ckpt = Checkpoint::load(ckpt_path);
            check_checkpoint_arch(ckpt);
            load_all_params(ckpt);
            adam_->load_state(ckpt);
            start_step = std::stoll(ckpt.meta("step"));
            rng_sample.set_state(std::stoull(ckpt.meta("rng_sample")));
            truncate_loss_log(start_step);
        } else {
            scorer_toy_->init(rng_init);
            fps_->init(rng_init);
            dps_->init(rng_init);
            if (cfg_.snippet_net == "toy") train_snippet_stage(rng_sample);
            write_loss_log_header();
        }

        if (cfg_.snippet_net == "toy")
            scorer_ = scorer_toy_.get();
        else
            scorer_ = scorer_pre_.get();

        if (!cfg_.joint_finetune) precompute_stage2_inputs();

        const Index steps_per_epoch = resolved_steps_per_epoch();
        const Index total_steps = cfg_.epochs * steps_per_epoch;
        Index stop_at = total_steps;
        if (options.max_steps && *options.max_steps < stop_at) stop_at = *options.max_steps;

        std::ofstream log(run_dir_ / "loss_log.csv", std::ios::app);
        if (!log) throw IoError("cannot open loss log");

        TrainResult result;
        result.total_steps = total_steps;
        result.checkpoint_path = ckpt_path;
        Index step = start_step;
        while (step < stop_at) {
            ++step;
            const LossComponents c = run_step(rng_sample);
            const double total = total_loss(c, cfg_.loss_config());
            char row[256];
            std::snprintf(row, sizeof row, "%lld,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                          static_cast<long long>(step), c.focal, c.ranking, c.smooth, c.direction,
                          total);
            log << row;
            log.flush();
            if (step % cfg_.checkpoint_every == 0 || step == stop_at)
                save_checkpoint(ckpt_path, step, rng_sample);
        }
        result.steps_completed = step;
        return result;
    }

    const RunConfig& config() const { return cfg_; }

private:
    void prepare_run_dir() {
        std::error_code ec;
        std::filesystem::create_directories(run_dir_, ec);
        if (ec) throw IoError("cannot create run directory: " + run_dir_.string());
        const std::filesystem::path snap = run_dir_ / "config.txt";
        const std::string text = cfg_.serialize();
        if (std::filesystem::exists(snap)) {
            std::ifstream is(snap);
            std::ostringstream buf;
            buf << is.rdbuf();
            if (buf.str() != text)
                throw ValidationError(
                    "run directory holds a different config snapshot; refusing to overwrite");
        } else {
            std::ofstream os(snap);
            os << text;
            if (!os) throw IoError("cannot write config snapshot");
        }
    }

    void build_networks() {
        scorer_toy_ =
            std::make_unique<ToySnippetScorer>(cfg_.snippet_channels, cfg_.refined_channels);
        if (cfg_.snippet_net == "precomputed")
            scorer_pre_ = std::make_unique<PrecomputedSnippetScorer>(cfg_.features_dir,
                                                                     cfg_.refined_channels);
        StackConfig fps_cfg{cfg_.frame_channels + cfg_.refined_channels, cfg_.fps_blocks,
                            cfg_.pool_window, cfg_.mlp_expansion, cfg_.conv_kernel};
        StackConfig dps_cfg{cfg_.frame_channels + cfg_.snippet_channels, cfg_.fps_blocks,
                            cfg_.pool_window, cfg_.mlp_expansion, cfg_.conv_kernel};
        fps_ = std::make_unique<FrameScoreNet>(fps_cfg);
        dps_ = std::make_unique<DirectionNet>(dps_cfg);

        std::vector<nn::Parameter*> trainable;
        if (cfg_.train_fps)
            for (auto* p : fps_->params()) trainable.push_back(p);
        if (cfg_.train_dps)
            for (auto* p : dps_->params()) trainable.push_back(p);
        if (cfg_.joint_finetune && cfg_.snippet_net == "toy")
            for (auto* p : scorer_toy_->params()) trainable.push_back(p);
        adam_ = std::make_unique<nn::Adam>(trainable, cfg_.learning_rate);
    }

    Index resolved_steps_per_epoch() const {
        if (cfg_.steps_per_epoch > 0) return cfg_.steps_per_epoch;
        const Index largest = static_cast<Index>(
            std::max(cache_.train_abnormal.size(), cache_.train_normal.size()));
        return (largest + cfg_.batch_pairs - 1) / cfg_.batch_pairs;
    }

    // Stage 1: MIL training of the toy snippet scorer on pair batches.
    // Layer caches are single-shot, so each video's backward runs right
    // after its own forward; the positive video is re-run for its backward.
    void train_snippet_stage(Rng& rng_sample) {
        nn::Adam adam(scorer_toy_->params(), cfg_.learning_rate);
        std::ofstream log(run_dir_ / "snippet_loss.csv");
        log << "step,loss\n";
        for (Index step = 1; step <= cfg_.snippet_steps; ++step) {
            adam.zero_grad();
            double loss_sum = 0.0;
            for (Index b = 0; b < cfg_.batch_pairs; ++b) {
                const auto& pos = cache_.at(sample_index(rng_sample, cache_.train_abnormal));
                const auto& neg = cache_.at(sample_index(rng_sample, cache_.train_normal));
                const Tensor pos_scores =
                    scorer_toy_->score(pos.sample.video_id, pos.snippet_features).second;
                auto [neg_refined, neg_scores] =
                    scorer_toy_->score(neg.sample.video_id, neg.snippet_features);
                Tensor dpos, dneg;
                loss_sum += mil_pair_loss(pos_scores, neg_scores, dpos, dneg);
                scale_inplace(dneg, 1.0 / cfg_.batch_pairs);
                scorer_toy_->backward(dneg, Tensor(neg_refined.shape()));
                const Tensor pos_refined =
                    scorer_toy_->score(pos.sample.video_id, pos.snippet_features).first;
                scale_inplace(dpos, 1.0 / cfg_.batch_pairs);
                scorer_toy_->backward(dpos, Tensor(pos_refined.shape()));
            }
            adam.step();
            char row[64];
            std::snprintf(row, sizeof row, "%lld,%.10g\n", static_cast<long long>(step),
                          loss_sum / cfg_.batch_pairs);
            log << row;
        }
    }

    static void scale_inplace(Tensor& t, double s) {
        for (Index i = 0; i < t.size(); ++i) t[i] *= s;
    }

    std::size_t sample_index(Rng& rng, const std::vector<std::size_t>& pool) const {
        return pool[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    }

    struct Stage2Video {
        Tensor fused_fps;  // [L, C'+C''] flattened frame axis
        Tensor fused_dps;  // [L, C'+C]
        Tensor pseudo;     // [L]
    };

    Stage2Video compute_stage2_video(std::size_t idx) {
        const VideoData& v = cache_.videos[idx];
        const Index L = cfg_.frames_per_video();
        auto [refined, scores] = scorer_->score(v.sample.video_id, v.snippet_features);
        Stage2Video s;
        Tensor fused = fuse_features(v.frame_features, refined);
        s.fused_fps = fused.reshaped({L, fused.dim(2)});
        fused = fuse_features(v.frame_features, v.snippet_features);
        s.fused_dps = fused.reshaped({L, fused.dim(2)});
        s.pseudo = pseudo_label_video(scores, cfg_.frames_per_snippet,
                                      v.sample.label == Label::abnormal)
                       .reshaped({L});
        return s;
    }

    void precompute_stage2_inputs() {
        stage2_.clear();
        stage2_.reserve(cache_.videos.size());
        for (std::size_t i = 0; i < cache_.videos.size(); ++i)
            stage2_.push_back(compute_stage2_video(i));
    }

    // With a frozen scorer the per-video inputs are cached; joint mode
    // recomputes them from the live scorer.
    const Stage2Video& stage2_inputs(std::size_t idx, Stage2Video& scratch) {
        if (!cfg_.joint_finetune) return stage2_[idx];
        scratch = compute_stage2_video(idx);
        return scratch;
    }

    // One optimization step over batch_pairs positive/negative pairs.
    LossComponents run_step(Rng& rng_sample) {
        adam_->zero_grad();
        const Index B = cfg_.batch_pairs;
        const LossConfig lc = cfg_.loss_config();
        LossComponents comps;
        Index dps_count = 0;

        Stage2Video pos_scratch, neg_scratch;
        for (Index b = 0; b < B; ++b) {
            const std::size_t pi = sample_index(rng_sample, cache_.train_abnormal);
            const std::size_t ni = sample_index(rng_sample, cache_.train_normal);
            const Stage2Video& pos = stage2_inputs(pi, pos_scratch);
            const Stage2Video& neg = stage2_inputs(ni, neg_scratch);

            Tensor neg_scores, pos_scores;
            if (cfg_.train_fps) {
                neg_scores = fps_->forward(neg.fused_fps);
                pos_scores = fps_->forward(pos.fused_fps);  // fps caches hold the positive video

                const Tensor neg_zero(neg.pseudo.shape());
                comps.focal += binary_focal_loss(pos.pseudo, pos_scores, lc.gamma, lc.eps) +
                               binary_focal_loss(neg_zero, neg_scores, lc.gamma, lc.eps);
                comps.ranking +=
                    frame_ranking_loss(pos_scores, neg_scores, lc.rank_r, cfg_.ranking_hinged);
                comps.smooth += smoothness_loss(pos_scores);

                Tensor dpos = binary_focal_loss_grad(pos.pseudo, pos_scores, lc.gamma, lc.eps);
                Tensor dneg = binary_focal_loss_grad(neg_zero, neg_scores, lc.gamma, lc.eps);
                scale_inplace(dpos, 1.0 / (2 * B));
                scale_inplace(dneg, 1.0 / (2 * B));
                auto [rank_dpos, rank_dneg] =
                    frame_ranking_loss_grad(pos_scores, neg_scores, lc.rank_r, cfg_.ranking_hinged);
                add_scaled(dpos, rank_dpos, lc.lambda1 / B);
                add_scaled(dneg, rank_dneg, lc.lambda1 / B);
                add_scaled(dpos, smoothness_loss_grad(pos_scores), lc.lambda2 / B);

                const Tensor dx_pos = fps_->backward(dpos);
                backprop_to_scorer(pi, dx_pos);
                fps_->forward(neg.fused_fps);  // restore the negative video's caches
                const Tensor dx_neg = fps_->backward(dneg);
                backprop_to_scorer(ni, dx_neg);
            }

            if (cfg_.train_dps) {
                const VideoData& pv = cache_.videos[pi];
                const DpsMode mode = dps_mode_from_string(cfg_.dps_mode);
                if (mode != DpsMode::saliency_only) {
                    const DpsFusion fusion = cfg_.dps_fusion == "product" ? DpsFusion::product
                                                                          : DpsFusion::additive;
                    const auto p = dps_->forward(pos.fused_dps, pv.thirds, mode, fusion);
                    const auto y = onehot(*pv.sample.direction);
                    comps.direction += direction_focal_loss(y, p, lc.gamma, lc.eps);
                    ++dps_count;
                    auto dp = direction_focal_loss_grad(y, p, lc.gamma, lc.eps);
                    for (double& g : dp) g *= lc.lambda3 / B;
                    dps_->backward(dp);
                }
            }
        }

        comps.focal /= static_cast<double>(2 * B);
        comps.ranking /= static_cast<double>(B);
        comps.smooth /= static_cast<double>(B);
        comps.direction = dps_count ? comps.direction / static_cast<double>(B) : 0.0;

        // Validate finiteness (and therefore abort) before touching parameters.
        total_loss(comps, lc);
        adam_->step();
        return comps;
    }

    static std::array<double, 3> onehot(Direction d) {
        std::array<double, 3> y{};
        y[static_cast<std::size_t>(d)] = 1.0;
        return y;
    }

    static void add_scaled(Tensor& dst, const Tensor& src, double s) {
        for (Index i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
    }

    void backprop_to_scorer(std::size_t idx, const Tensor& dx_flat) {
        if (!(cfg_.joint_finetune && cfg_.snippet_net == "toy")) return;
        const VideoData& v = cache_.videos[idx];
        const Tensor dx = dx_flat.reshaped({cfg_.snippets, cfg_.frames_per_snippet,
                                            cfg_.frame_channels + cfg_.refined_channels});
        auto [dframe, drefined] = split_fused_grad(dx, cfg_.frame_channels);
        // Restore scorer caches for this video, then push the refined-feature
        // gradient through; pseudo labels are a stop-gradient.
        scorer_toy_->score(v.sample.video_id, v.snippet_features);
        scorer_toy_->backward(Tensor({cfg_.snippets}), drefined);
    }

    void check_checkpoint_arch(const Checkpoint& ckpt) const {
        const std::vector<std::pair<std::string, std::string>> want = arch_metadata(cfg_);
        for (const auto& [k, v] : want) {
            const std::string got = ckpt.meta_or(k, "<missing>");
            if (got != v)
                throw FormatError("checkpoint/config mismatch on " + k + ": checkpoint has " +
                                  got + ", config wants " + v);
        }
    }

    void load_all_params(const Checkpoint& ckpt) {
        if (cfg_.snippet_net == "toy") nn::load_params(ckpt, scorer_toy_->params());
        nn::load_params(ckpt, fps_->params());
        nn::load_params(ckpt, dps_->params());
    }

    void save_checkpoint(const std::filesystem::path& path, Index step, const Rng& rng_sample) {
        Checkpoint ckpt;
        for (const auto& [k, v] : arch_metadata(cfg_)) ckpt.metadata[k] = v;
        ckpt.metadata["step"] = std::to_string(step);
        ckpt.metadata["rng_sample"] = std::to_string(rng_sample.state());
        ckpt.metadata["config_hash"] = cfg_.hash_hex();
        ckpt.metadata["seed"] = std::to_string(cfg_.seed);
        if (cfg_.snippet_net == "toy") nn::save_params(ckpt, scorer_toy_->params());
        nn::save_params(ckpt, fps_->params());
        nn::save_params(ckpt, dps_->params());
        adam_->save_state(ckpt);
        const std::filesystem::path tmp = path.string() + ".tmp";
        ckpt.save(tmp);
        std::filesystem::rename(tmp, path);
    }

    void write_loss_log_header() {
        std::ofstream log(run_dir_ / "loss_log.csv");
        log << "step,L_BF,L_FR,L_smooth,L_DF,total\n";
        if (!log) throw IoError("cannot write loss log header");
    }

    void truncate_loss_log(Index keep_steps) {
        const std::filesystem::path p = run_dir_ / "loss_log.csv";
        std::vector<std::string> kept;
        {
            std::ifstream is(p);
            if (!is) throw IoError("resume requires the run's loss log");
            std::string line;
            std::getline(is, line);
            kept.push_back(line);
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                const Index step = std::stoll(line.substr(0, line.find(',')));
                if (step <= keep_steps) kept.push_back(line);
            }
        }
        std::ofstream os(p);
        for (const auto& l : kept) os << l << '\n';
    }

public:
    static std::vector<std::pair<std::string, std::string>> arch_metadata(const RunConfig& cfg) {
        return {
            {"snippets", std::to_string(cfg.snippets)},
            {"frames_per_snippet", std::to_string(cfg.frames_per_snippet)},
            {"snippet_channels", std::to_string(cfg.snippet_channels)},
            {"frame_channels", std::to_string(cfg.frame_channels)},
            {"refined_channels", std::to_string(cfg.refined_channels)},
            {"fps_blocks", std::to_string(cfg.fps_blocks)},
            {"pool_window", std::to_string(cfg.pool_window)},
            {"mlp_expansion", std::to_string(cfg.mlp_expansion)},
            {"conv_kernel", std::to_string(cfg.conv_kernel)},
            {"snippet_net", cfg.snippet_net},
        };
    }

private:
    RunConfig cfg_;
    std::filesystem::path dataset_dir_, run_dir_;
    DatasetCache cache_;
    std::unique_ptr<ToySnippetScorer> scorer_toy_;
    std::unique_ptr<PrecomputedSnippetScorer> scorer_pre_;
    SnippetScorer* scorer_ = nullptr;
    std::unique_ptr<FrameScoreNet> fps_;
    std::unique_ptr<DirectionNet> dps_;
    std::unique_ptr<nn::Adam> adam_;
    std::vector<Stage2Video> stage2_;
};

// ---------------------------------------------------------------------------
// Evaluation and prediction
// ---------------------------------------------------------------------------

// Loads networks from a checkpoint for inference.
struct LoadedModel {
    std::unique_ptr<ToySnippetScorer> scorer_toy;
    std::unique_ptr<PrecomputedSnippetScorer> scorer_pre;
    SnippetScorer* scorer = nullptr;
    std::unique_ptr<FrameScoreNet> fps;
    std::unique_ptr<DirectionNet> dps;

    static LoadedModel load(const RunConfig& cfg, const std::filesystem::path& ckpt_path) {
        const Checkpoint ckpt = Checkpoint::load(ckpt_path);
        for (const auto& [k, v] : Trainer::arch_metadata(cfg)) {
            const std::string got = ckpt.meta_or(k, "<missing>");
            if (got != v)
                throw FormatError("checkpoint/config mismatch on " + k + ": checkpoint has " +
                                  got + ", config wants " + v);
        }
        LoadedModel m;
        m.scorer_toy =
            std::make_unique<ToySnippetScorer>(cfg.snippet_channels, cfg.refined_channels);
        if (cfg.snippet_net == "toy") {
            nn::load_params(ckpt, m.scorer_toy->params());
            m.scorer = m.scorer_toy.get();
        } else {
            m.scorer_pre = std::make_unique<PrecomputedSnippetScorer>(cfg.features_dir,
                                                                      cfg.refined_channels);
            m.scorer = m.scorer_pre.get();
        }
        StackConfig fps_cfg{cfg.frame_channels + cfg.refined_channels, cfg.fps_blocks,
                            cfg.pool_window, cfg.mlp_expansion, cfg.conv_kernel};
        StackConfig dps_cfg{cfg.frame_channels + cfg.snippet_channels, cfg.fps_blocks,
                            cfg.pool_window, cfg.mlp_expansion, cfg.conv_kernel};
        m.fps = std::make_unique<FrameScoreNet>(fps_cfg);
        m.dps = std::make_unique<DirectionNet>(dps_cfg);
        nn::load_params(ckpt, m.fps->params());
        nn::load_params(ckpt, m.dps->params());
        return m;
    }
};

enum class FrameScorerKind { fps, snippet_broadcast };

// Frame scores for one cached video, truncated to original frames.
inline std::vector<double> score_video(LoadedModel& model, const RunConfig& cfg,
                                       const VideoData& v, FrameScorerKind kind) {
    const Index L = cfg.frames_per_video();
    auto [refined, snip_scores] = model.scorer->score(v.sample.video_id, v.snippet_features);
    Tensor frame_scores;
    if (kind == FrameScorerKind::fps) {
        const Tensor fused = fuse_features(v.frame_features, refined);
        frame_scores = model.fps->forward(fused.reshaped({L, fused.dim(2)}));
    } else {
        frame_scores = Tensor({L});
        for (Index t = 0; t < cfg.snippets; ++t)
            for (Index n = 0; n < cfg.frames_per_snippet; ++n)
                frame_scores[t * cfg.frames_per_snippet + n] = snip_scores[t];
    }
    std::vector<double> out(static_cast<std::size_t>(v.sample.frame_count));
    for (Index f = 0; f < v.sample.frame_count; ++f) out[static_cast<std::size_t>(f)] =
        frame_scores[f];
    return out;
}

inline std::array<double, 3> video_direction(LoadedModel& model, const RunConfig& cfg,
                                             const VideoData& v) {
    const Index L = cfg.frames_per_video();
    const DpsMode mode = dps_mode_from_string(cfg.dps_mode);
    const DpsFusion fusion =
        cfg.dps_fusion == "product" ? DpsFusion::product : DpsFusion::additive;
    const Tensor fused = fuse_features(v.frame_features, v.snippet_features);
    return model.dps->forward(fused.reshaped({L, fused.dim(2)}), v.thirds, mode, fusion);
}

inline EvalReport evaluate(const RunConfig& cfg, const std::filesystem::path& ckpt_path,
                           const std::filesystem::path& dataset_dir,
                           FrameScorerKind kind = FrameScorerKind::fps) {
    cfg.validate();
    LoadedModel model = LoadedModel::load(cfg, ckpt_path);
    const DatasetCache cache = build_dataset_cache(cfg, dataset_dir, /*train=*/false,
                                                   /*test=*/true);
    if (cache.test.empty()) throw ValidationError("dataset has no test videos");

    EvalReport report;
    report.config_hash = cfg.hash_hex();
    std::vector<double> all_scores;
    std::vector<std::uint8_t> all_labels;
    std::vector<std::array<double, 3>> dir_preds;
    std::vector<Direction> dir_truths;
    for (std::size_t idx : cache.test) {
        const VideoData& v = cache.videos[idx];
        VideoScores vs;
        vs.video_id = v.sample.video_id;
        vs.scores = score_video(model, cfg, v, kind);
        vs.labels = expand_ground_truth(v.sample).labels;
        if (v.sample.label == Label::abnormal) {
            const auto p = video_direction(model, cfg, v);
            std::size_t best = 0;
            for (std::size_t k = 1; k < 3; ++k)
                if (p[k] > p[best]) best = k;
            vs.dir_pred = static_cast<Direction>(best);
            vs.dir_true = v.sample.direction;
            dir_preds.push_back(p);
            dir_truths.push_back(*v.sample.direction);
        }
        all_scores.insert(all_scores.end(), vs.scores.begin(), vs.scores.end());
        all_labels.insert(all_labels.end(), vs.labels.begin(), vs.labels.end());
        report.videos.push_back(std::move(vs));
    }
    report.auc_roc = auc_roc(all_scores, all_labels);
    report.auc_pr = auc_pr(all_scores, all_labels);
    if (!dir_preds.empty()) report.direction = direction_accuracy(dir_preds, dir_truths);
    return report;
}

struct PredictResult {
    std::vector<double> frame_scores;   // one per original frame
    std::array<double, 3> direction{};  // (left_back, center, right_back)
};

inline PredictResult predict(const RunConfig& cfg, const std::filesystem::path& ckpt_path,
                             const std::filesystem::path& video_path) {
    cfg.validate();
    if (cfg.extractor != "toy" || cfg.snippet_net != "toy")
        throw ValidationError("predict runs the toy feature path; use eval for precomputed modes");
    LoadedModel model = LoadedModel::load(cfg, ckpt_path);
    const Tensor raw = load_tensor(video_path);
    if (raw.rank() != 3) throw FormatError("video tensor must be [frames, height, width]");
    VideoSample sample;
    sample.video_id = video_path.stem().string();
    sample.split = Split::test;
    sample.label = Label::normal;
    sample.frame_count = raw.dim(0);
    const VideoData v = build_video_data(cfg, sample, raw);
    PredictResult out;
    out.frame_scores = score_video(model, cfg, v, FrameScorerKind::fps);
    out.direction = video_direction(model, cfg, v);
    return out;
}

// Writes <id>.snippet.fdpn, <id>.frame.fdpn, <id>.thirds.fdpn for every
// video in the dataset: the exchange format for precomputed-feature runs.
inline void extract_dataset(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                            const std::filesystem::path& out_dir) {
    cfg.validate();
    if (cfg.extractor != "toy")
        throw ValidationError("extract produces toy features; precomputed mode consumes them");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create feature directory: " + out_dir.string());
    const auto samples = load_manifest(dataset_dir / "manifest.csv");
    for (const VideoSample& sample : samples) {
        const Tensor raw = load_tensor(dataset_dir / "frames" / (sample.video_id + ".fdpn"));
        const VideoData v = build_video_data(cfg, sample, raw);
        store_features(feature_path(out_dir, sample.video_id, "snippet"), v.snippet_features);
        store_features(feature_path(out_dir, sample.video_id, "frame"), v.frame_features);
        store_features(feature_path(out_dir, sample.video_id, "thirds"), v.thirds);
    }
}

}  // namespace fdpn
