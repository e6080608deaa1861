// Evaluation metrics: frame-level AUC-ROC (trapezoidal over tie-grouped
// thresholds, equal to the pairwise probability with ties counted 0.5),
// AUC-PR (step interpolation), direction accuracy, and the anomaly-duration
// bucket improvement analysis. Report serialization is CSV.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fdpn/dataset.hpp"
#include "fdpn/errors.hpp"

namespace fdpn {

namespace detail {

inline void check_binary_inputs(const std::vector<double>& scores,
                                const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw ShapeError("scores and labels differ in length");
    if (scores.empty()) throw MetricError("metric undefined on empty input");
    bool has_pos = false, has_neg = false;
    for (std::uint8_t l : labels) (l ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw MetricError("metric undefined: labels contain a single class");
}

// Distinct score thresholds descending, with cumulative tp/fp counts at
// "predict positive when score >= threshold".
struct Sweep {
    std::vector<double> tp, fp;  // per threshold
    double total_pos = 0.0, total_neg = 0.0;
};

inline Sweep threshold_sweep(const std::vector<double>& scores,
                             const std::vector<std::uint8_t>& labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    Sweep s;
    double tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]])
                tp += 1.0;
            else
                fp += 1.0;
            ++j;
        }
        s.tp.push_back(tp);
        s.fp.push_back(fp);
        i = j;
    }
    s.total_pos = tp;
    s.total_neg = fp;
    return s;
}

}  // namespace detail

inline double auc_roc(const std::vector<double>& scores,
                      const std::vector<std::uint8_t>& labels) {
    detail::check_binary_inputs(scores, labels);
    const auto s = detail::threshold_sweep(scores, labels);
    double area = 0.0, prev_tpr = 0.0, prev_fpr = 0.0;
    for (std::size_t i = 0; i < s.tp.size(); ++i) {
        const double tpr = s.tp[i] / s.total_pos;
        const double fpr = s.fp[i] / s.total_neg;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    return area;
}

inline double auc_pr(const std::vector<double>& scores,
                     const std::vector<std::uint8_t>& labels) {
    detail::check_binary_inputs(scores, labels);
    const auto s = detail::threshold_sweep(scores, labels);
    double area = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < s.tp.size(); ++i) {
        const double recall = s.tp[i] / s.total_pos;
        const double precision = s.tp[i] / (s.tp[i] + s.fp[i]);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

struct DirectionAccuracy {
    double accuracy = 0.0;
    Index ties = 0;   // argmax ties, broken toward the lower class index
    Index count = 0;
};

inline DirectionAccuracy direction_accuracy(const std::vector<std::array<double, 3>>& predictions,
                                            const std::vector<Direction>& truths) {
    if (predictions.size() != truths.size())
        throw ShapeError("direction predictions and truths differ in length");
    if (predictions.empty()) throw MetricError("direction accuracy undefined on empty input");
    DirectionAccuracy out;
    out.count = static_cast<Index>(predictions.size());
    Index correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        std::size_t best = 0;
        bool tie = false;
        for (std::size_t k = 1; k < 3; ++k) {
            if (p[k] > p[best]) {
                best = k;
                tie = false;
            } else if (p[k] == p[best]) {
                tie = true;
            }
        }
        if (tie) ++out.ties;
        if (static_cast<Direction>(best) == truths[i]) ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(out.count);
    return out;
}

// Per-video frame scores with ground-truth labels; the unit the evaluation
// report is built from.
struct VideoScores {
    std::string video_id;
    std::vector<double> scores;         // one per original (unpadded) frame
    std::vector<std::uint8_t> labels;
    std::optional<Direction> dir_pred;
    std::optional<Direction> dir_true;
};

struct EvalReport {
    double auc_roc = 0.0;
    double auc_pr = 0.0;
    std::optional<DirectionAccuracy> direction;
    std::vector<VideoScores> videos;
    std::string config_hash;

    void write_summary(const std::filesystem::path& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot write report: " + path.string());
        os << "metric,value\n";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", auc_roc);
        os << "auc_roc," << buf << '\n';
        std::snprintf(buf, sizeof buf, "%.10g", auc_pr);
        os << "auc_pr," << buf << '\n';
        if (direction) {
            std::snprintf(buf, sizeof buf, "%.10g", direction->accuracy);
            os << "direction_accuracy," << buf << '\n';
            os << "direction_ties," << direction->ties << '\n';
            os << "direction_count," << direction->count << '\n';
        }
        os << "config_hash," << config_hash << '\n';
        os << "videos," << videos.size() << '\n';
    }

    void write_scores(const std::filesystem::path& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot write scores: " + path.string());
        os << "video_id,frame,score,label,dir_pred,dir_true\n";
        char buf[64];
        for (const VideoScores& v : videos) {
            const std::string dp = v.dir_pred ? to_string(*v.dir_pred) : "";
            const std::string dt = v.dir_true ? to_string(*v.dir_true) : "";
            for (std::size_t f = 0; f < v.scores.size(); ++f) {
                std::snprintf(buf, sizeof buf, "%.10g", v.scores[f]);
                os << v.video_id << ',' << f << ',' << buf << ','
                   << static_cast<int>(v.labels[f]) << ',' << dp << ',' << dt << '\n';
            }
        }
        if (!os) throw IoError("score write failed: " + path.string());
    }

    static EvalReport read_scores(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open scores: " + path.string());
        std::string line;
        if (!std::getline(is, line)) throw ParseError("empty scores file: " + path.string());
        EvalReport rep;
        int line_no = 1;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto fields = detail::split_csv(line);
            if (fields.size() != 6)
                throw ParseError("scores line " + std::to_string(line_no) + ": expected 6 fields");
            if (rep.videos.empty() || rep.videos.back().video_id != fields[0]) {
                rep.videos.push_back({});
                rep.videos.back().video_id = fields[0];
            }
            VideoScores& v = rep.videos.back();
            v.scores.push_back(std::stod(fields[2]));
            v.labels.push_back(static_cast<std::uint8_t>(fields[3] == "1"));
        }
        return rep;
    }
};

// One row of the duration-bucket comparison: classification-accuracy delta
// (system A minus system B) for videos whose total anomaly duration falls
// in the bucket, at one score threshold.
struct BucketDelta {
    std::string bucket;
    double threshold = 0.0;
    double accuracy_a = 0.0;
    double accuracy_b = 0.0;
    double delta = 0.0;
};

// Buckets anomalous test videos by total anomaly duration (seconds at
// fps_nominal) and compares thresholded frame accuracy between two reports
// over identical videos. Empty buckets are absent from the result.
inline std::vector<BucketDelta> duration_bucket_improvement(
    const EvalReport& a, const EvalReport& b, const std::vector<double>& bucket_edges_seconds,
    const std::vector<double>& thresholds, double fps_nominal) {
    if (a.videos.size() != b.videos.size())
        throw ValidationError("duration analysis: reports cover different video sets");
    if (fps_nominal <= 0.0) throw ArgumentError("fps_nominal must be positive");
    std::map<std::string, const VideoScores*> b_by_id;
    for (const VideoScores& v : b.videos) b_by_id[v.video_id] = &v;

    struct Bucket {
        std::string name;
        std::vector<const VideoScores*> va, vb;
    };
    std::vector<Bucket> buckets;
    for (std::size_t i = 0; i <= bucket_edges_seconds.size(); ++i) {
        std::ostringstream name;
        if (i == 0)
            name << "0-" << bucket_edges_seconds[0] << 's';
        else if (i == bucket_edges_seconds.size())
            name << bucket_edges_seconds.back() << "+s";
        else
            name << bucket_edges_seconds[i - 1] << '-' << bucket_edges_seconds[i] << 's';
        buckets.push_back({name.str(), {}, {}});
    }

    for (const VideoScores& va : a.videos) {
        auto it = b_by_id.find(va.video_id);
        if (it == b_by_id.end())
            throw ValidationError("duration analysis: video '" + va.video_id +
                                  "' missing from the second report");
        const VideoScores& vb = *it->second;
        if (va.labels != vb.labels)
            throw ValidationError("duration analysis: ground truth differs for '" + va.video_id +
                                  "'");
        const Index dur_frames = static_cast<Index>(
            std::count(va.labels.begin(), va.labels.end(), std::uint8_t{1}));
        if (dur_frames == 0) continue;  // normal videos carry no anomaly duration
        const double dur_s = static_cast<double>(dur_frames) / fps_nominal;
        std::size_t bi = bucket_edges_seconds.size();
        for (std::size_t e = 0; e < bucket_edges_seconds.size(); ++e) {
            if (dur_s < bucket_edges_seconds[e]) {
                bi = e;
                break;
            }
        }
        buckets[bi].va.push_back(&va);
        buckets[bi].vb.push_back(&vb);
    }

    auto accuracy_at = [](const std::vector<const VideoScores*>& vids, double thr) {
        Index correct = 0, total = 0;
        for (const VideoScores* v : vids) {
            for (std::size_t f = 0; f < v->scores.size(); ++f) {
                const bool pred = v->scores[f] >= thr;
                correct += pred == (v->labels[f] != 0);
                ++total;
            }
        }
        return static_cast<double>(correct) / static_cast<double>(total);
    };

    std::vector<BucketDelta> out;
    for (const Bucket& bucket : buckets) {
        if (bucket.va.empty()) continue;
        for (double thr : thresholds) {
            BucketDelta d;
            d.bucket = bucket.name;
            d.threshold = thr;
            d.accuracy_a = accuracy_at(bucket.va, thr);
            d.accuracy_b = accuracy_at(bucket.vb, thr);
            d.delta = d.accuracy_a - d.accuracy_b;
            out.push_back(d);
        }
    }
    return out;
}

}  // namespace fdpn
