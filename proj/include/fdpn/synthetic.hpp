// Synthetic panorama dataset generator. Produces low-resolution grayscale
// "videos" (2:1 aspect) where abnormal clips contain a contiguous pulsing
// bright block whose horizontal third encodes the direction label. Makes
// the whole pipeline exercisable in CPU-seconds with known ground truth.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fdpn/dataset.hpp"
#include "fdpn/errors.hpp"
#include "fdpn/rng.hpp"
#include "fdpn/tensor.hpp"
#include "fdpn/tensor_io.hpp"

namespace fdpn {

struct SyntheticSpec {
    Index num_videos = 24;
    Index frame_count = 512;
    Index duration_min = 32;   // anomaly duration bounds, in frames
    Index duration_max = 96;
    double anomaly_intensity = 3.0;
    bool direction_signal = true;
    std::uint64_t seed = 0;
    Index height = 36;
    Index width = 72;
    // Heavy-tailed background: short global exposure flickers in every
    // video. They are noise, not events; temporally pooled snippet features
    // confuse their mass with short events, while per-frame appearance
    // (diffuse lift vs compact bright block) separates them cleanly.
    double noise_spike_rate = 0.02;   // per-frame probability that a flicker starts
    double noise_spike_gain = 0.3;    // flicker lift as a fraction of anomaly_intensity
    Index noise_spike_frames = 1;     // maximum flicker run length

    void validate() const {
        if (num_videos < 6)
            throw ArgumentError("synthetic spec needs at least 6 videos for balanced splits");
        if (frame_count < 4) throw ArgumentError("synthetic spec frame_count too small");
        if (duration_min < 1 || duration_max < duration_min || duration_max > frame_count)
            throw ArgumentError("synthetic spec anomaly duration range invalid");
        if (anomaly_intensity <= 0.0) throw ArgumentError("synthetic anomaly intensity must be > 0");
        if (height < 12 || width < 24) throw ArgumentError("synthetic frames must be >= 12x24");
        if (noise_spike_rate < 0.0 || noise_spike_rate > 0.5)
            throw ArgumentError("noise_spike_rate must be in [0, 0.5]");
        if (noise_spike_gain < 0.0 || noise_spike_gain >= 1.0)
            throw ArgumentError("noise_spike_gain must be in [0, 1)");
        if (noise_spike_frames < 1 || noise_spike_frames > frame_count)
            throw ArgumentError("noise_spike_frames out of range");
    }
};

struct SyntheticVideo {
    VideoSample sample;
    Tensor frames;  // [frame_count, height, width]
};

namespace detail {

inline constexpr double kSynthNoiseLevel = 0.1;

inline SyntheticVideo make_synthetic_video(const SyntheticSpec& spec, Index index, Split split,
                                           Label label) {
    Rng rng = Rng(spec.seed).derive(2).derive(static_cast<std::uint64_t>(index) + 1);
    const Index H = spec.height, W = spec.width, F = spec.frame_count;

    SyntheticVideo v;
    char id[16];
    std::snprintf(id, sizeof id, "v%03lld", static_cast<long long>(index));
    v.sample.video_id = id;
    v.sample.split = split;
    v.sample.label = label;
    v.sample.frame_count = F;
    v.frames = Tensor({F, H, W});
    double* px = v.frames.data();
    for (Index i = 0; i < v.frames.size(); ++i) px[i] = rng.uniform(0.0, kSynthNoiseLevel);

    // Abnormal placement is drawn first so flickers can steer clear of it.
    Index ev_start = -1, ev_end = -1;
    Index y0 = 0, x0 = 0;
    const Index block_h = H / 3;
    const Index block_w = W / 8;
    if (label == Label::abnormal) {
        const Direction dir = direction_from_index(rng.uniform_int(0, 2));
        v.sample.direction = dir;
        const Index duration = rng.uniform_int(spec.duration_min, spec.duration_max);
        ev_start = rng.uniform_int(0, F - duration);
        ev_end = ev_start + duration - 1;
        const Index third_w = W / 3;
        if (spec.direction_signal) {
            // Keep the block (plus 1px jitter) strictly inside its third.
            const Index third_lo = static_cast<Index>(dir) * third_w;
            x0 = third_lo + 1 + rng.uniform_int(0, third_w - block_w - 2);
        } else {
            x0 = 1 + rng.uniform_int(0, W - block_w - 2);
        }
        y0 = rng.uniform_int(0, H - block_h);
    }

    // Exposure flickers: a global additive lift over whole frames. Flickers
    // never touch the event window; a flicker edge inside the event would
    // flood the saliency map and mask the event out of the frame path.
    const double spike_value = spec.anomaly_intensity * spec.noise_spike_gain;
    const Index plane = H * W;
    for (Index f = 0; f < F; ++f) {
        if (rng.uniform() >= spec.noise_spike_rate) continue;
        const Index run = rng.uniform_int(1, spec.noise_spike_frames);
        if (ev_start >= 0 && f + run >= ev_start - 3 && f <= ev_end + 3) continue;
        for (Index g = f; g < std::min(F, f + run); ++g)
            for (Index i = 0; i < plane; ++i) px[g * plane + i] += spike_value;
    }

    if (label == Label::abnormal) {
        for (Index f = ev_start; f <= ev_end; ++f) {
            // Alternate intensity and x offset so consecutive anomalous frames
            // always differ (temporal-difference saliency stays lit).
            const bool even = ((f - ev_start) % 2) == 0;
            const double value = spec.anomaly_intensity * (even ? 1.0 : 0.8);
            const Index jitter = even ? 0 : 1;
            for (Index y = y0; y < y0 + block_h; ++y)
                for (Index x = x0 + jitter; x < x0 + jitter + block_w; ++x)
                    v.frames.at(f, y, x) = value;
        }
        if (split == Split::test) v.sample.anomaly_ranges.push_back({ev_start, ev_end});
    }
    v.sample.validate();
    return v;
}

}  // namespace detail

// Deterministic split/label plan: the first two thirds of the videos are the
// train split, the rest test; within each split even local indices are
// abnormal. num_videos=24 yields 16 train / 8 test, each half abnormal.
inline std::vector<SyntheticVideo> generate_synthetic_in_memory(const SyntheticSpec& spec) {
    spec.validate();
    const Index train_count = spec.num_videos * 2 / 3;
    std::vector<SyntheticVideo> videos;
    videos.reserve(static_cast<std::size_t>(spec.num_videos));
    for (Index i = 0; i < spec.num_videos; ++i) {
        const Split split = i < train_count ? Split::train : Split::test;
        const Index local = split == Split::train ? i : i - train_count;
        const Label label = (local % 2 == 0) ? Label::abnormal : Label::normal;
        videos.push_back(detail::make_synthetic_video(spec, i, split, label));
    }
    return videos;
}

// Writes manifest.csv plus frames/<video_id>.fdpn under out_dir.
inline std::vector<VideoSample> generate_synthetic(const SyntheticSpec& spec,
                                                   const std::filesystem::path& out_dir) {
    const auto videos = generate_synthetic_in_memory(spec);
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "frames", ec);
    if (ec) throw IoError("cannot create dataset directory: " + (out_dir / "frames").string());
    std::vector<VideoSample> samples;
    samples.reserve(videos.size());
    for (const SyntheticVideo& v : videos) {
        save_tensor(out_dir / "frames" / (v.sample.video_id + ".fdpn"), v.frames);
        samples.push_back(v.sample);
    }
    write_manifest(out_dir / "manifest.csv", samples);
    return samples;
}

}  // namespace fdpn
