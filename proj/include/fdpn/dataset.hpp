// Dataset schema: video samples, manifest CSV parsing/writing, and
// frame-level ground-truth expansion for the test split.
//
// Manifest format: header `video_id,split,label,direction,frame_count,anomaly_ranges`,
// one row per video; anomaly_ranges is a `;`-separated list of inclusive
// `start-end` frame pairs, empty when the video has none.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/tensor.hpp"

namespace fdpn {

enum class Split { train, test };
enum class Label { normal, abnormal };
enum class Direction { left_back, center, right_back };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline std::string to_string(Label l) { return l == Label::normal ? "normal" : "abnormal"; }
inline std::string to_string(Direction d) {
    switch (d) {
        case Direction::left_back: return "left_back";
        case Direction::center: return "center";
        default: return "right_back";
    }
}

inline Direction direction_from_index(Index k) {
    if (k < 0 || k > 2) throw ArgumentError("direction index out of range");
    return static_cast<Direction>(k);
}

// Inclusive frame range [begin, end].
struct FrameRange {
    Index begin = 0;
    Index end = 0;
    bool operator==(const FrameRange&) const = default;
};

struct VideoSample {
    std::string video_id;
    Split split = Split::train;
    Label label = Label::normal;
    std::optional<Direction> direction;
    Index frame_count = 0;
    std::vector<FrameRange> anomaly_ranges;

    bool operator==(const VideoSample&) const = default;

    void validate() const {
        auto fail = [this](const std::string& why) {
            throw ValidationError("video '" + video_id + "': " + why);
        };
        if (video_id.empty()) throw ValidationError("video with empty id");
        if (frame_count <= 0) fail("frame_count must be positive");
        if (direction.has_value() != (label == Label::abnormal))
            fail("direction must be present exactly for abnormal videos");
        const bool want_ranges = split == Split::test && label == Label::abnormal;
        if (want_ranges && anomaly_ranges.empty())
            fail("abnormal test video requires anomaly ranges");
        if (!want_ranges && !anomaly_ranges.empty())
            fail("anomaly ranges are only allowed on abnormal test videos");
        std::vector<FrameRange> sorted = anomaly_ranges;
        std::sort(sorted.begin(), sorted.end(),
                  [](const FrameRange& a, const FrameRange& b) { return a.begin < b.begin; });
        Index prev_end = -1;
        for (const FrameRange& r : sorted) {
            if (r.begin < 0 || r.end >= frame_count) fail("anomaly range outside [0, frame_count)");
            if (r.begin > r.end) fail("anomaly range start exceeds end");
            if (r.begin <= prev_end) fail("anomaly ranges overlap");
            prev_end = r.end;
        }
    }
};

struct FrameGroundTruth {
    std::string video_id;
    std::vector<std::uint8_t> labels;  // labels[f] == 1 inside some anomaly range
};

// Frame-level labels exist for the test split only.
inline FrameGroundTruth expand_ground_truth(const VideoSample& sample) {
    if (sample.split != Split::test)
        throw ArgumentError("ground truth expansion requires a test-split video, got '" +
                            sample.video_id + "'");
    FrameGroundTruth gt;
    gt.video_id = sample.video_id;
    gt.labels.assign(static_cast<std::size_t>(sample.frame_count), 0);
    for (const FrameRange& r : sample.anomaly_ranges)
        for (Index f = r.begin; f <= r.end; ++f) gt.labels[static_cast<std::size_t>(f)] = 1;
    return gt;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.push_back(field);
    return out;
}

inline Index parse_index(const std::string& s, const std::string& where) {
    if (s.empty()) throw ParseError(where + ": empty integer field");
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        throw ParseError(where + ": not an integer: '" + s + "'");
    }
    if (pos != s.size()) throw ParseError(where + ": trailing characters in integer: '" + s + "'");
    return static_cast<Index>(v);
}

}  // namespace detail

inline constexpr const char* kManifestHeader =
    "video_id,split,label,direction,frame_count,anomaly_ranges";

inline VideoSample parse_manifest_row(const std::string& line, int line_no) {
    const std::string where = "manifest line " + std::to_string(line_no);
    const auto fields = detail::split_csv(line);
    if (fields.size() != 6)
        throw ParseError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
    VideoSample s;
    s.video_id = fields[0];
    if (fields[1] == "train")
        s.split = Split::train;
    else if (fields[1] == "test")
        s.split = Split::test;
    else
        throw ParseError(where + ": unknown split '" + fields[1] + "'");
    if (fields[2] == "normal")
        s.label = Label::normal;
    else if (fields[2] == "abnormal")
        s.label = Label::abnormal;
    else
        throw ParseError(where + ": unknown label '" + fields[2] + "'");
    if (!fields[3].empty()) {
        if (fields[3] == "left_back")
            s.direction = Direction::left_back;
        else if (fields[3] == "center")
            s.direction = Direction::center;
        else if (fields[3] == "right_back")
            s.direction = Direction::right_back;
        else
            throw ParseError(where + ": unknown direction '" + fields[3] + "'");
    }
    s.frame_count = detail::parse_index(fields[4], where);
    if (!fields[5].empty()) {
        std::istringstream ranges(fields[5]);
        std::string pair;
        while (std::getline(ranges, pair, ';')) {
            const auto dash = pair.find('-');
            if (dash == std::string::npos)
                throw ParseError(where + ": anomaly range '" + pair + "' lacks '-'");
            FrameRange r;
            r.begin = detail::parse_index(pair.substr(0, dash), where);
            r.end = detail::parse_index(pair.substr(dash + 1), where);
            s.anomaly_ranges.push_back(r);
        }
    }
    return s;
}

inline std::string manifest_row(const VideoSample& s) {
    std::ostringstream os;
    os << s.video_id << ',' << to_string(s.split) << ',' << to_string(s.label) << ',';
    if (s.direction) os << to_string(*s.direction);
    os << ',' << s.frame_count << ',';
    for (std::size_t i = 0; i < s.anomaly_ranges.size(); ++i) {
        if (i) os << ';';
        os << s.anomaly_ranges[i].begin << '-' << s.anomaly_ranges[i].end;
    }
    return os.str();
}

inline std::vector<VideoSample> load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw ParseError("manifest is empty: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader)
        throw ParseError("manifest line 1: bad header, expected '" + std::string(kManifestHeader) +
                         "'");
    std::vector<VideoSample> samples;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        VideoSample s = parse_manifest_row(line, line_no);
        s.validate();
        samples.push_back(std::move(s));
    }
    return samples;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<VideoSample>& samples) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open manifest for write: " + path.string());
    os << kManifestHeader << '\n';
    for (const VideoSample& s : samples) os << manifest_row(s) << '\n';
    if (!os) throw IoError("manifest write failed: " + path.string());
}

}  // namespace fdpn
