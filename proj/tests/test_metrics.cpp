#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "fdpn/metrics.hpp"
#include "fdpn/rng.hpp"

using namespace fdpn;

namespace {

// Pairwise-comparison AUC-ROC: ties count one half.
double roc_oracle(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    double wins = 0.0;
    Index pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// All-thresholds AUC-PR with full recounts at every distinct score.
double pr_oracle(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
    double total_pos = 0.0;
    for (auto l : labels) total_pos += l;
    double area = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        double tp = 0.0, fp = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) {
                if (labels[i])
                    tp += 1.0;
                else
                    fp += 1.0;
            }
        }
        const double recall = tp / total_pos;
        const double precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

struct Instance {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
};

Instance random_instance(Rng& rng, bool with_ties) {
    Instance inst;
    const Index n = rng.uniform_int(2, 50);
    bool has_pos = false, has_neg = false;
    for (Index i = 0; i < n; ++i) {
        double s = rng.uniform();
        if (with_ties) s = std::round(s * 8.0) / 8.0;
        const auto l = static_cast<std::uint8_t>(rng.uniform() < 0.4);
        inst.scores.push_back(s);
        inst.labels.push_back(l);
        (l ? has_pos : has_neg) = true;
    }
    if (!has_pos) inst.labels[0] = 1;
    if (!has_neg) inst.labels.back() = 0;
    return inst;
}

VideoScores make_video(const std::string& id, std::vector<double> scores,
                       std::vector<std::uint8_t> labels) {
    VideoScores v;
    v.video_id = id;
    v.scores = std::move(scores);
    v.labels = std::move(labels);
    return v;
}

}  // namespace

TEST_CASE("auc-roc basic values") {
    CHECK(auc_roc({0.1, 0.9}, {0, 1}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(auc_roc({0.9, 0.1}, {0, 1}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(auc_roc({0.5, 0.4, 0.6}, {1, 0, 0}) == doctest::Approx(0.5).epsilon(1e-12));
    // All ties: chance level.
    CHECK(auc_roc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {1, 1}), MetricError);
    CHECK_THROWS_AS(auc_roc({}, {}), MetricError);
    CHECK_THROWS_AS(auc_roc({0.1}, {1, 0}), ShapeError);
}

TEST_CASE("auc-pr basic values") {
    CHECK(auc_pr({0.1, 0.9}, {0, 1}) == doctest::Approx(1.0).epsilon(1e-12));
    // All scores equal: single operating point, area = positive rate.
    CHECK(auc_pr({0.3, 0.3, 0.3, 0.3}, {1, 0, 0, 0}) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(auc_pr({0.7, 0.7}, {1, 0}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(auc_pr({0.1, 0.2}, {0, 0}), MetricError);
}

TEST_CASE("auc implementations equal brute-force oracles on 200 instances") {
    Rng rng(71);
    for (int trial = 0; trial < 200; ++trial) {
        const Instance inst = random_instance(rng, trial % 2 == 0);
        CHECK(std::abs(auc_roc(inst.scores, inst.labels) - roc_oracle(inst.scores, inst.labels)) <
              1e-9);
        CHECK(std::abs(auc_pr(inst.scores, inst.labels) - pr_oracle(inst.scores, inst.labels)) <
              1e-9);
    }
}

TEST_CASE("auc-roc is invariant under strictly monotone transforms") {
    Rng rng(73);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance inst = random_instance(rng, false);
        const double base = auc_roc(inst.scores, inst.labels);
        std::vector<double> affine, cubic;
        for (double s : inst.scores) {
            affine.push_back(2.5 * s + 1.0);
            cubic.push_back(s * s * s);
        }
        CHECK(auc_roc(affine, inst.labels) == doctest::Approx(base).epsilon(1e-12));
        CHECK(auc_roc(cubic, inst.labels) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("auc-roc complement symmetry on tie-free inputs") {
    Rng rng(79);
    for (int trial = 0; trial < 50; ++trial) {
        Instance inst = random_instance(rng, false);
        // Make scores strictly distinct.
        std::sort(inst.scores.begin(), inst.scores.end());
        for (std::size_t i = 1; i < inst.scores.size(); ++i)
            if (inst.scores[i] <= inst.scores[i - 1])
                inst.scores[i] = inst.scores[i - 1] + 1e-6;
        std::vector<double> negated;
        std::vector<std::uint8_t> flipped;
        for (std::size_t i = 0; i < inst.scores.size(); ++i) {
            negated.push_back(-inst.scores[i]);
            flipped.push_back(static_cast<std::uint8_t>(1 - inst.labels[i]));
        }
        const double base = auc_roc(inst.scores, inst.labels);
        // Negating scores or flipping labels each complement the AUC;
        // doing both recovers it.
        CHECK(base + auc_roc(negated, inst.labels) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(base + auc_roc(inst.scores, flipped) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(auc_roc(negated, flipped) == doctest::Approx(base).epsilon(1e-9));
    }
}

TEST_CASE("direction accuracy") {
    using A3 = std::array<double, 3>;
    const std::vector<A3> preds{{0.8, 0.1, 0.1}, {0.2, 0.7, 0.1}, {0.1, 0.2, 0.7},
                                {0.6, 0.3, 0.1}};
    const std::vector<Direction> truth{Direction::left_back, Direction::center,
                                       Direction::right_back, Direction::left_back};
    CHECK(direction_accuracy(preds, truth).accuracy == doctest::Approx(1.0));

    auto one_wrong = truth;
    one_wrong[3] = Direction::center;
    const DirectionAccuracy r = direction_accuracy(preds, one_wrong);
    CHECK(r.accuracy == doctest::Approx(0.75));
    CHECK(r.ties == 0);
    CHECK(r.count == 4);

    // Argmax tie resolves toward the lower class index and is counted.
    const std::vector<A3> tied{{0.4, 0.4, 0.2}};
    const DirectionAccuracy t = direction_accuracy(tied, {Direction::left_back});
    CHECK(t.accuracy == doctest::Approx(1.0));
    CHECK(t.ties == 1);

    CHECK_THROWS_AS(direction_accuracy({}, {}), MetricError);
    CHECK_THROWS_AS(direction_accuracy(tied, {}), ShapeError);
}

TEST_CASE("duration buckets: identical reports give zero deltas") {
    EvalReport a;
    a.videos.push_back(make_video("v1", {0.9, 0.9, 0.1, 0.1}, {1, 1, 0, 0}));
    a.videos.push_back(make_video("v2", {0.2, 0.8, 0.8, 0.2}, {0, 1, 1, 0}));
    const EvalReport b = a;
    const auto deltas = duration_bucket_improvement(a, b, {3.0, 6.0}, {0.6, 0.7, 0.8, 0.9}, 1.0);
    CHECK_FALSE(deltas.empty());
    for (const auto& d : deltas) {
        CHECK(d.delta == 0.0);
        CHECK(d.accuracy_a == d.accuracy_b);
    }
}

TEST_CASE("duration buckets: empty buckets are absent and deltas are signed") {
    // Video with a 2-frame anomaly at 1 fps -> 2 s -> bucket 0-3s.
    EvalReport sharp;  // localizes exactly
    sharp.videos.push_back(make_video("v1", {0.95, 0.95, 0.05, 0.05}, {1, 1, 0, 0}));
    EvalReport blurry;  // spreads the detection over all four frames
    blurry.videos.push_back(make_video("v1", {0.95, 0.95, 0.95, 0.95}, {1, 1, 0, 0}));

    const auto deltas =
        duration_bucket_improvement(sharp, blurry, {3.0, 6.0}, {0.6, 0.7, 0.8, 0.9}, 1.0);
    REQUIRE(deltas.size() == 4);  // only the shortest bucket exists
    for (const auto& d : deltas) {
        CHECK(d.bucket == "0-3s");
        CHECK(d.delta > 0.0);
        CHECK(d.accuracy_a == doctest::Approx(1.0));
        CHECK(d.accuracy_b == doctest::Approx(0.5));
    }
}

TEST_CASE("duration buckets: normal-only videos never form a bucket") {
    EvalReport a;
    a.videos.push_back(make_video("v1", {0.1, 0.1}, {0, 0}));
    const EvalReport b = a;
    CHECK(duration_bucket_improvement(a, b, {3.0}, {0.6}, 1.0).empty());
}

TEST_CASE("duration buckets: mismatched inputs are rejected") {
    EvalReport a;
    a.videos.push_back(make_video("v1", {0.9, 0.1}, {1, 0}));
    EvalReport b;
    b.videos.push_back(make_video("v2", {0.9, 0.1}, {1, 0}));
    CHECK_THROWS_AS(duration_bucket_improvement(a, b, {3.0}, {0.6}, 1.0), ValidationError);

    EvalReport c;
    c.videos.push_back(make_video("v1", {0.9, 0.1}, {1, 1}));  // different ground truth
    CHECK_THROWS_AS(duration_bucket_improvement(a, c, {3.0}, {0.6}, 1.0), ValidationError);

    EvalReport d;  // different video count
    CHECK_THROWS_AS(duration_bucket_improvement(a, d, {3.0}, {0.6}, 1.0), ValidationError);
}

TEST_CASE("duration buckets honor fps_nominal") {
    EvalReport a;
    // 90 anomalous frames at 30 fps = 3 s -> second bucket [3, 6).
    std::vector<double> scores(180, 0.9);
    std::vector<std::uint8_t> labels(180, 0);
    for (int i = 0; i < 90; ++i) labels[static_cast<std::size_t>(i)] = 1;
    a.videos.push_back(make_video("v1", scores, labels));
    const auto deltas = duration_bucket_improvement(a, a, {3.0, 6.0}, {0.6}, 30.0);
    REQUIRE(deltas.size() == 1);
    CHECK(deltas[0].bucket == "3-6s");
}

TEST_CASE("report CSV round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "fdpn_tests" / "report_csv";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    EvalReport rep;
    rep.auc_roc = 0.875;
    rep.auc_pr = 0.5;
    rep.config_hash = "deadbeef";
    VideoScores v = make_video("v1", {0.25, 0.75}, {0, 1});
    v.dir_pred = Direction::center;
    v.dir_true = Direction::left_back;
    rep.videos.push_back(v);
    rep.videos.push_back(make_video("v2", {0.125}, {0}));
    rep.write_summary(dir / "summary.csv");
    rep.write_scores(dir / "scores.csv");

    const EvalReport back = EvalReport::read_scores(dir / "scores.csv");
    REQUIRE(back.videos.size() == 2);
    CHECK(back.videos[0].video_id == "v1");
    CHECK(back.videos[0].scores == rep.videos[0].scores);
    CHECK(back.videos[0].labels == rep.videos[0].labels);
    CHECK(back.videos[1].scores == rep.videos[1].scores);

    std::ifstream is(dir / "summary.csv");
    std::string text((std::istreambuf_iterator<char>(is)), {});
    CHECK(text.find("auc_roc,0.875") != std::string::npos);
    CHECK(text.find("config_hash,deadbeef") != std::string::npos);
}
