// Run configuration: every hyperparameter and design knob, with defaults,
// flat key=value file parsing, CLI-style overrides, canonical serialization,
// and an FNV-1a hash for provenance. The serialized snapshot is written
// verbatim into each run directory.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/losses.hpp"
#include "fdpn/tensor.hpp"

namespace fdpn {

struct RunConfig {
    // Batch/snippet geometry.
    Index batch_pairs = 16;        // positive/negative video pairs per step (B)
    Index snippets = 32;           // snippets per video (T)
    Index frames_per_snippet = 16; // frames per snippet (N)
    // Saliency masking.
    Index grid_n = 3;              // mask grid side (n)
    Index top_k = 4;               // kept cells (K)
    std::string saliency = "tempdiff";      // tempdiff | file
    std::string saliency_dir = "";          // <id>.saliency.fdpn files for "file" mode
    std::string mask_granularity = "frame"; // frame | snippet
    // Loss weights.
    double gamma = 2.0;
    Index rank_r = 48;
    double lambda1 = 1.0;
    double lambda2 = 1.6e-3;
    double lambda3 = 0.3;
    double eps = 1e-7;
    // Optimization.
    std::string optimizer = "adam";
    double learning_rate = 1e-3;
    Index epochs = 50;
    Index steps_per_epoch = 0;     // 0 = ceil(max(#abnormal, #normal) / batch_pairs)
    Index snippet_steps = 200;     // stage-1 scorer training steps
    Index checkpoint_every = 50;
    std::uint64_t seed = 0;
    bool joint_finetune = false;   // keep training the snippet scorer in stage 2
    bool ranking_hinged = false;
    bool train_fps = true;
    bool train_dps = true;
    // Features.
    Index snippet_channels = 64;   // C
    Index frame_channels = 32;     // C'
    Index refined_channels = 32;   // C'' (snippet scorer hidden width)
    std::string extractor = "toy";       // toy | precomputed
    std::string features_dir = "";
    std::string snippet_net = "toy";     // toy | precomputed
    // Direction head.
    std::string dps_mode = "combined";   // network_only | saliency_only | combined
    std::string dps_fusion = "product";  // product | additive
    // Frame/direction stack shape.
    Index fps_blocks = 2;
    Index pool_window = 5;
    Index mlp_expansion = 2;
    Index conv_kernel = 3;
    // Evaluation.
    double fps_nominal = 30.0;     // frames per second for duration buckets

    LossConfig loss_config() const { return {gamma, lambda1, lambda2, lambda3, rank_r, eps}; }

    Index frames_per_video() const { return snippets * frames_per_snippet; }

    void validate() const {
        if (batch_pairs < 1 || snippets < 1 || frames_per_snippet < 1)
            throw ValidationError("batch_pairs, snippets, frames_per_snippet must be positive");
        if (grid_n < 1 || top_k < 1 || top_k > grid_n * grid_n)
            throw ValidationError("top_k must be in [1, grid_n^2]");
        loss_config().validate();
        if (rank_r > frames_per_video())
            throw ValidationError("rank_r exceeds frames per video");
        if (optimizer != "adam") throw ValidationError("unknown optimizer '" + optimizer + "'");
        if (learning_rate <= 0.0) throw ValidationError("learning_rate must be positive");
        if (epochs < 0 || steps_per_epoch < 0 || snippet_steps < 0 || checkpoint_every < 1)
            throw ValidationError("training schedule values out of range");
        if (snippet_channels < 1 || frame_channels < 1 || refined_channels < 1)
            throw ValidationError("channel widths must be positive");
        if (extractor != "toy" && extractor != "precomputed")
            throw ValidationError("extractor must be toy or precomputed");
        if (snippet_net != "toy" && snippet_net != "precomputed")
            throw ValidationError("snippet_net must be toy or precomputed");
        if (extractor == "precomputed" && features_dir.empty())
            throw ValidationError("precomputed extractor requires features_dir");
        if (snippet_net == "precomputed" && features_dir.empty())
            throw ValidationError("precomputed snippet_net requires features_dir");
        if (saliency != "tempdiff" && saliency != "file")
            throw ValidationError("saliency must be tempdiff or file");
        if (saliency == "file" && saliency_dir.empty())
            throw ValidationError("file saliency requires saliency_dir");
        if (mask_granularity != "frame" && mask_granularity != "snippet")
            throw ValidationError("mask_granularity must be frame or snippet");
        if (dps_mode != "network_only" && dps_mode != "saliency_only" && dps_mode != "combined")
            throw ValidationError("unknown dps_mode '" + dps_mode + "'");
        if (dps_fusion != "product" && dps_fusion != "additive")
            throw ValidationError("unknown dps_fusion '" + dps_fusion + "'");
        if (fps_blocks < 1 || pool_window < 1 || pool_window % 2 == 0 || mlp_expansion < 1 ||
            conv_kernel < 1 || conv_kernel % 2 == 0)
            throw ValidationError("stack shape values out of range (windows must be odd)");
        if (fps_nominal <= 0.0) throw ValidationError("fps_nominal must be positive");
    }

private:
    static std::string format_double(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

    template <typename Self, typename FInt, typename FDouble, typename FString, typename FBool,
              typename FU64>
    static void visit(Self& self, FInt fi, FDouble fd, FString fs, FBool fb, FU64 fu) {
        fi("batch_pairs", self.batch_pairs);
        fi("snippets", self.snippets);
        fi("frames_per_snippet", self.frames_per_snippet);
        fi("grid_n", self.grid_n);
        fi("top_k", self.top_k);
        fs("saliency", self.saliency);
        fs("saliency_dir", self.saliency_dir);
        fs("mask_granularity", self.mask_granularity);
        fd("gamma", self.gamma);
        fi("rank_r", self.rank_r);
        fd("lambda1", self.lambda1);
        fd("lambda2", self.lambda2);
        fd("lambda3", self.lambda3);
        fd("eps", self.eps);
        fs("optimizer", self.optimizer);
        fd("learning_rate", self.learning_rate);
        fi("epochs", self.epochs);
        fi("steps_per_epoch", self.steps_per_epoch);
        fi("snippet_steps", self.snippet_steps);
        fi("checkpoint_every", self.checkpoint_every);
        fu("seed", self.seed);
        fb("joint_finetune", self.joint_finetune);
        fb("ranking_hinged", self.ranking_hinged);
        fb("train_fps", self.train_fps);
        fb("train_dps", self.train_dps);
        fi("snippet_channels", self.snippet_channels);
        fi("frame_channels", self.frame_channels);
        fi("refined_channels", self.refined_channels);
        fs("extractor", self.extractor);
        fs("features_dir", self.features_dir);
        fs("snippet_net", self.snippet_net);
        fs("dps_mode", self.dps_mode);
        fs("dps_fusion", self.dps_fusion);
        fi("fps_blocks", self.fps_blocks);
        fi("pool_window", self.pool_window);
        fi("mlp_expansion", self.mlp_expansion);
        fi("conv_kernel", self.conv_kernel);
        fd("fps_nominal", self.fps_nominal);
    }

public:
    // Canonical key=value form, one sorted line per key.
    std::string serialize() const {
        std::map<std::string, std::string> kv;
        visit(
            *this, [&](const char* k, const Index& v) { kv[k] = std::to_string(v); },
            [&](const char* k, const double& v) { kv[k] = format_double(v); },
            [&](const char* k, const std::string& v) { kv[k] = v; },
            [&](const char* k, const bool& v) { kv[k] = v ? "true" : "false"; },
            [&](const char* k, const std::uint64_t& v) { kv[k] = std::to_string(v); });
        std::ostringstream os;
        for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
        return os.str();
    }

    void set(const std::string& key, const std::string& value) {
        bool found = false;
        auto parse_ll = [&](const std::string& v) {
            try {
                std::size_t pos = 0;
                const long long r = std::stoll(v, &pos);
                if (pos != v.size()) throw std::invalid_argument(v);
                return r;
            } catch (const std::exception&) {
                throw ValidationError("config key '" + key + "': bad integer '" + v + "'");
            }
        };
        visit(
            *this,
            [&](const char* k, Index& v) {
                if (key == k) {
                    v = static_cast<Index>(parse_ll(value));
                    found = true;
                }
            },
            [&](const char* k, double& v) {
                if (key == k) {
                    try {
                        std::size_t pos = 0;
                        v = std::stod(value, &pos);
                        if (pos != value.size()) throw std::invalid_argument(value);
                    } catch (const std::exception&) {
                        throw ValidationError("config key '" + key + "': bad number '" + value +
                                              "'");
                    }
                    found = true;
                }
            },
            [&](const char* k, std::string& v) {
                if (key == k) {
                    v = value;
                    found = true;
                }
            },
            [&](const char* k, bool& v) {
                if (key == k) {
                    if (value == "true" || value == "1")
                        v = true;
                    else if (value == "false" || value == "0")
                        v = false;
                    else
                        throw ValidationError("config key '" + key + "': bad bool '" + value + "'");
                    found = true;
                }
            },
            [&](const char* k, std::uint64_t& v) {
                if (key == k) {
                    v = static_cast<std::uint64_t>(parse_ll(value));
                    found = true;
                }
            });
        if (!found) throw ValidationError("unknown config key '" + key + "'");
    }

    static RunConfig parse_text(const std::string& text, const std::string& origin) {
        RunConfig cfg;
        std::istringstream is(text);
        std::string line;
        int line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::string stripped;
            for (char c : line) {
                if (c == '#') break;
                stripped.push_back(c);
            }
            // Trim.
            const auto b = stripped.find_first_not_of(" \t");
            if (b == std::string::npos) continue;
            const auto e = stripped.find_last_not_of(" \t");
            stripped = stripped.substr(b, e - b + 1);
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ParseError(origin + " line " + std::to_string(line_no) +
                                 ": expected key=value");
            auto trim = [](std::string s) {
                const auto x = s.find_first_not_of(" \t");
                if (x == std::string::npos) return std::string();
                const auto y = s.find_last_not_of(" \t");
                return s.substr(x, y - x + 1);
            };
            cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
        }
        return cfg;
    }

    static RunConfig parse_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config: " + path.string());
        std::ostringstream buf;
        buf << is.rdbuf();
        return parse_text(buf.str(), path.string());
    }

    // FNV-1a over the canonical serialization.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (char c : serialize()) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        return h;
    }

    std::string hash_hex() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
        return buf;
    }
};

}  // namespace fdpn
