#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fdpn/dataset.hpp"
#include "fdpn/features.hpp"
#include "fdpn/rng.hpp"
#include "fdpn/synthetic.hpp"

using namespace fdpn;

namespace {

std::filesystem::path temp_dir(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / "fdpn_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

VideoSample random_sample(Rng& rng, int i) {
    VideoSample s;
    s.video_id = "vid" + std::to_string(i);
    s.split = rng.uniform() < 0.5 ? Split::train : Split::test;
    s.label = rng.uniform() < 0.5 ? Label::normal : Label::abnormal;
    s.frame_count = rng.uniform_int(10, 200);
    if (s.label == Label::abnormal)
        s.direction = direction_from_index(rng.uniform_int(0, 2));
    if (s.split == Split::test && s.label == Label::abnormal) {
        Index cursor = 0;
        const Index n_ranges = rng.uniform_int(1, 3);
        for (Index r = 0; r < n_ranges && cursor < s.frame_count - 1; ++r) {
            const Index begin = rng.uniform_int(cursor, s.frame_count - 1);
            const Index end = rng.uniform_int(begin, s.frame_count - 1);
            s.anomaly_ranges.push_back({begin, end});
            cursor = end + 2;
        }
    }
    s.validate();
    return s;
}

}  // namespace

TEST_CASE("manifest row parsing") {
    const VideoSample a = parse_manifest_row("v01,train,abnormal,left_back,480,", 2);
    CHECK(a.video_id == "v01");
    CHECK(a.split == Split::train);
    CHECK(a.label == Label::abnormal);
    CHECK(a.direction == Direction::left_back);
    CHECK(a.frame_count == 480);
    CHECK(a.anomaly_ranges.empty());

    const VideoSample b = parse_manifest_row("v02,test,normal,,300,", 3);
    CHECK(b.label == Label::normal);
    CHECK_FALSE(b.direction.has_value());
    CHECK(b.anomaly_ranges.empty());

    const VideoSample c = parse_manifest_row("v03,test,abnormal,center,300,100-150", 4);
    REQUIRE(c.anomaly_ranges.size() == 1);
    CHECK(c.anomaly_ranges[0] == FrameRange{100, 150});

    const VideoSample d = parse_manifest_row("v04,test,abnormal,center,300,10-20;30-40", 5);
    REQUIRE(d.anomaly_ranges.size() == 2);
    CHECK(d.anomaly_ranges[1] == FrameRange{30, 40});
}

TEST_CASE("manifest parse errors name the line") {
    const auto dir = temp_dir("manifest_errors");
    {
        std::ofstream os(dir / "m.csv");
        os << kManifestHeader << "\n";
        os << "v01,train,abnormal,left_back,480,\n";
        os << "v02,train,sideways,,100,\n";
    }
    try {
        load_manifest(dir / "m.csv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }

    {
        std::ofstream os(dir / "h.csv");
        os << "bad,header\n";
    }
    CHECK_THROWS_AS(load_manifest(dir / "h.csv"), ParseError);
    CHECK_THROWS_AS(load_manifest(dir / "missing.csv"), IoError);
}

TEST_CASE("sample validation names the video") {
    VideoSample s;
    s.video_id = "vx";
    s.split = Split::train;
    s.label = Label::abnormal;
    s.direction = Direction::center;
    s.frame_count = 100;
    s.anomaly_ranges.push_back({1, 5});  // ranges not allowed on train videos
    try {
        s.validate();
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("vx") != std::string::npos);
    }

    VideoSample overlapping;
    overlapping.video_id = "vy";
    overlapping.split = Split::test;
    overlapping.label = Label::abnormal;
    overlapping.direction = Direction::center;
    overlapping.frame_count = 100;
    overlapping.anomaly_ranges = {{10, 30}, {20, 40}};
    CHECK_THROWS_AS(overlapping.validate(), ValidationError);

    VideoSample no_dir = overlapping;
    no_dir.anomaly_ranges = {{10, 30}};
    no_dir.direction.reset();
    CHECK_THROWS_AS(no_dir.validate(), ValidationError);

    VideoSample dir_on_normal;
    dir_on_normal.video_id = "vz";
    dir_on_normal.split = Split::train;
    dir_on_normal.label = Label::normal;
    dir_on_normal.direction = Direction::left_back;
    dir_on_normal.frame_count = 10;
    CHECK_THROWS_AS(dir_on_normal.validate(), ValidationError);

    VideoSample out_of_bounds = overlapping;
    out_of_bounds.anomaly_ranges = {{90, 100}};  // end == frame_count
    CHECK_THROWS_AS(out_of_bounds.validate(), ValidationError);
}

TEST_CASE("ground truth expansion") {
    VideoSample s;
    s.video_id = "gt";
    s.split = Split::test;
    s.label = Label::abnormal;
    s.direction = Direction::center;

    s.frame_count = 6;
    s.anomaly_ranges = {{2, 3}};
    CHECK(expand_ground_truth(s).labels == std::vector<std::uint8_t>{0, 0, 1, 1, 0, 0});

    s.frame_count = 5;
    s.anomaly_ranges = {{0, 0}, {4, 4}};
    CHECK(expand_ground_truth(s).labels == std::vector<std::uint8_t>{1, 0, 0, 0, 1});

    VideoSample normal;
    normal.video_id = "gt2";
    normal.split = Split::test;
    normal.label = Label::normal;
    normal.frame_count = 4;
    CHECK(expand_ground_truth(normal).labels == std::vector<std::uint8_t>{0, 0, 0, 0});

    VideoSample train = s;
    train.split = Split::train;
    train.anomaly_ranges.clear();
    CHECK_THROWS_AS(expand_ground_truth(train), ArgumentError);
}

TEST_CASE("ground truth is invariant to range order") {
    VideoSample s;
    s.video_id = "shuffle";
    s.split = Split::test;
    s.label = Label::abnormal;
    s.direction = Direction::right_back;
    s.frame_count = 50;
    s.anomaly_ranges = {{5, 9}, {20, 21}, {40, 44}};
    const auto base = expand_ground_truth(s).labels;
    Index total = 0;
    for (auto v : base) total += v;
    CHECK(total == 5 + 2 + 5);

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto shuffled = s;
        for (std::size_t i = shuffled.anomaly_ranges.size(); i > 1; --i)
            std::swap(shuffled.anomaly_ranges[i - 1],
                      shuffled.anomaly_ranges[static_cast<std::size_t>(
                          rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        shuffled.validate();
        CHECK(expand_ground_truth(shuffled).labels == base);
    }
}

TEST_CASE("manifest round trip for arbitrary valid samples") {
    const auto dir = temp_dir("roundtrip");
    Rng rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<VideoSample> samples;
        const int n = static_cast<int>(rng.uniform_int(1, 8));
        for (int i = 0; i < n; ++i) samples.push_back(random_sample(rng, i));
        write_manifest(dir / "m.csv", samples);
        CHECK(load_manifest(dir / "m.csv") == samples);
    }
}

TEST_CASE("synthetic generation is byte-deterministic") {
    const auto a = temp_dir("synth_a");
    const auto b = temp_dir("synth_b");
    SyntheticSpec spec;
    spec.num_videos = 6;
    spec.frame_count = 48;
    spec.duration_min = 8;
    spec.duration_max = 16;
    spec.seed = 7;
    const auto sa = generate_synthetic(spec, a);
    const auto sb = generate_synthetic(spec, b);
    CHECK(sa == sb);
    CHECK(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
    for (const auto& s : sa)
        CHECK(slurp(a / "frames" / (s.video_id + ".fdpn")) ==
              slurp(b / "frames" / (s.video_id + ".fdpn")));

    SyntheticSpec other = spec;
    other.seed = 8;
    const auto so = generate_synthetic_in_memory(other);
    CHECK(so[0].frames[0] != generate_synthetic_in_memory(spec)[0].frames[0]);
}

TEST_CASE("fixed anomaly duration is honored") {
    SyntheticSpec spec;
    spec.num_videos = 9;
    spec.frame_count = 64;
    spec.duration_min = 8;
    spec.duration_max = 8;
    spec.seed = 21;
    const auto videos = generate_synthetic_in_memory(spec);
    for (const auto& v : videos) {
        if (v.sample.label != Label::abnormal) continue;
        // Count frames containing the bright block.
        Index lit = 0;
        for (Index f = 0; f < v.frames.dim(0); ++f) {
            double mx = 0.0;
            for (Index y = 0; y < v.frames.dim(1); ++y)
                for (Index x = 0; x < v.frames.dim(2); ++x)
                    mx = std::max(mx, v.frames.at(f, y, x));
            if (mx > spec.anomaly_intensity * 0.5) ++lit;
        }
        CHECK(lit == 8);
        if (v.sample.split == Split::test) {
            REQUIRE(v.sample.anomaly_ranges.size() == 1);
            CHECK(v.sample.anomaly_ranges[0].end - v.sample.anomaly_ranges[0].begin + 1 == 8);
        }
    }
}

TEST_CASE("direction label matches the block's horizontal third") {
    SyntheticSpec spec;
    spec.num_videos = 12;
    spec.frame_count = 48;
    spec.duration_min = 8;
    spec.duration_max = 16;
    spec.direction_signal = true;
    spec.seed = 5;
    const auto videos = generate_synthetic_in_memory(spec);
    int abnormal_seen = 0;
    for (const auto& v : videos) {
        if (v.sample.label != Label::abnormal) continue;
        ++abnormal_seen;
        // Centroid of bright pixels over all frames.
        double xsum = 0.0;
        Index count = 0;
        for (Index f = 0; f < v.frames.dim(0); ++f)
            for (Index y = 0; y < v.frames.dim(1); ++y)
                for (Index x = 0; x < v.frames.dim(2); ++x)
                    if (v.frames.at(f, y, x) > spec.anomaly_intensity * 0.5) {
                        xsum += static_cast<double>(x);
                        ++count;
                    }
        REQUIRE(count > 0);
        const double cx = xsum / count;
        const Index third = static_cast<Index>(cx / (spec.width / 3));
        CHECK(direction_from_index(third) == *v.sample.direction);
    }
    CHECK(abnormal_seen >= 4);
}

TEST_CASE("synthetic classes are linearly separable in toy feature space") {
    SyntheticSpec spec;  // defaults: 24 videos, 16 train
    spec.seed = 13;
    const auto videos = generate_synthetic_in_memory(spec);
    ExtractorSpec es{ExtractorKind::toy_snippet, 64, spec.seed};

    std::vector<std::vector<double>> descriptors;
    std::vector<int> labels;
    for (const auto& v : videos) {
        if (v.sample.split != Split::train) continue;
        const Tensor feats = extract_snippet_features(v.frames, 32, 16, es);
        // Max-pool over snippets as the video descriptor.
        std::vector<double> d(static_cast<std::size_t>(feats.dim(1)), -1e300);
        for (Index t = 0; t < feats.dim(0); ++t)
            for (Index c = 0; c < feats.dim(1); ++c)
                d[static_cast<std::size_t>(c)] =
                    std::max(d[static_cast<std::size_t>(c)], feats.at(t, c));
        descriptors.push_back(std::move(d));
        labels.push_back(v.sample.label == Label::abnormal ? 1 : -1);
    }
    REQUIRE(descriptors.size() == 16);

    // Perceptron must reach zero training errors.
    std::vector<double> w(descriptors[0].size(), 0.0);
    double bias = 0.0;
    int errors = -1;
    for (int epoch = 0; epoch < 500 && errors != 0; ++epoch) {
        errors = 0;
        for (std::size_t i = 0; i < descriptors.size(); ++i) {
            double act = bias;
            for (std::size_t c = 0; c < w.size(); ++c) act += w[c] * descriptors[i][c];
            if (act * labels[i] <= 0.0) {
                ++errors;
                for (std::size_t c = 0; c < w.size(); ++c)
                    w[c] += labels[i] * descriptors[i][c];
                bias += labels[i];
            }
        }
    }
    CHECK(errors == 0);
}

TEST_CASE("synthetic spec validation") {
    SyntheticSpec bad;
    bad.num_videos = 3;
    CHECK_THROWS_AS(generate_synthetic_in_memory(bad), ArgumentError);
    SyntheticSpec bad2;
    bad2.duration_max = bad2.frame_count + 1;
    CHECK_THROWS_AS(generate_synthetic_in_memory(bad2), ArgumentError);
}
