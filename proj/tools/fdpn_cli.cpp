// fdpn command line: synthetic data generation, saliency masking, feature
// extraction, training, evaluation, prediction, and duration-bucket
// comparison reports.
//
// Exit codes: 0 success, 2 validation/input error, 3 runtime error.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fdpn/config.hpp"
#include "fdpn/dataset.hpp"
#include "fdpn/metrics.hpp"
#include "fdpn/pipeline.hpp"
#include "fdpn/saliency.hpp"
#include "fdpn/synthetic.hpp"
#include "fdpn/tensor_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

// Turns leftover tokens (--key value or --key=value) into config overrides.
// Dashes in flag names map to underscores, so --dps-mode sets dps_mode.
void apply_extras(fdpn::RunConfig& cfg, const std::vector<std::string>& extras) {
    std::size_t i = 0;
    while (i < extras.size()) {
        std::string token = extras[i];
        if (token.rfind("--", 0) != 0)
            throw fdpn::ValidationError("unexpected argument '" + token + "'");
        token = token.substr(2);
        const auto eq = token.find('=');
        std::string key = eq == std::string::npos ? token : token.substr(0, eq);
        for (char& c : key)
            if (c == '-') c = '_';
        if (eq != std::string::npos) {
            cfg.set(key, token.substr(eq + 1));
            ++i;
        } else {
            if (i + 1 >= extras.size())
                throw fdpn::ValidationError("config override '--" + token + "' is missing a value");
            cfg.set(key, extras[i + 1]);
            i += 2;
        }
    }
}

fdpn::RunConfig load_config(const std::string& config_path,
                            const std::vector<std::string>& extras) {
    fdpn::RunConfig cfg;
    if (!config_path.empty()) cfg = fdpn::RunConfig::parse_file(config_path);
    apply_extras(cfg, extras);
    cfg.validate();
    return cfg;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw fdpn::ValidationError("bad number in list: '" + item + "'");
        }
    }
    if (out.empty()) throw fdpn::ValidationError("empty number list");
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"fdpn: weakly-supervised frame-level video anomaly detection toolkit"};
    app.require_subcommand(1);

    // --- synth ---------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_out;
    fdpn::SyntheticSpec spec;
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--num-videos", spec.num_videos);
    synth->add_option("--frame-count", spec.frame_count);
    synth->add_option("--duration-min", spec.duration_min);
    synth->add_option("--duration-max", spec.duration_max);
    synth->add_option("--intensity", spec.anomaly_intensity);
    synth->add_option("--direction-signal", spec.direction_signal);
    synth->add_option("--seed", spec.seed);
    synth->add_option("--height", spec.height);
    synth->add_option("--width", spec.width);

    // --- mask ----------------------------------------------------------
    auto* mask = app.add_subcommand("mask", "apply saliency-driven masking to a video tensor");
    std::string mask_in, mask_out, mask_saliency = "tempdiff", mask_heatmaps, mask_save_heat;
    std::string mask_granularity = "frame";
    fdpn::Index mask_grid_n = 3, mask_top_k = 4, mask_fps_n = 16;
    mask->add_option("--input", mask_in, "input video tensor (FDPN)")->required();
    mask->add_option("--output", mask_out, "masked video tensor")->required();
    mask->add_option("--grid-n", mask_grid_n, "grid side length");
    mask->add_option("--top-k", mask_top_k, "kept cells");
    mask->add_option("--saliency", mask_saliency, "tempdiff | file");
    mask->add_option("--heatmaps", mask_heatmaps, "precomputed heatmap tensor for --saliency file");
    mask->add_option("--save-heatmaps", mask_save_heat, "also write the heatmaps here");
    mask->add_option("--mask-granularity", mask_granularity, "frame | snippet");
    mask->add_option("--frames-per-snippet", mask_fps_n, "snippet length for snippet granularity");

    // --- config-driven subcommands --------------------------------------
    std::string cfg_path, dataset_dir, run_dir, ckpt_path, out_path, input_path;
    std::string frame_scorer = "fps";
    fdpn::Index max_steps = 0;

    auto add_config_opt = [&](CLI::App* sub) {
        sub->add_option("--config", cfg_path, "key=value config file");
        sub->allow_extras();
    };

    auto* extract = app.add_subcommand("extract", "write per-video feature files");
    add_config_opt(extract);
    extract->add_option("--dataset", dataset_dir, "dataset directory")->required();
    extract->add_option("--out", out_path, "feature output directory")->required();

    auto* train = app.add_subcommand("train", "train on a dataset");
    add_config_opt(train);
    train->add_option("--dataset", dataset_dir, "dataset directory")->required();
    train->add_option("--run-dir", run_dir, "run artifacts directory")->required();
    train->add_option("--max-steps", max_steps,
                      "stop after this many stage-2 steps (resume later to finish)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_config_opt(eval);
    eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--out", out_path, "report output directory")->required();
    eval->add_option("--frame-scorer", frame_scorer, "fps | snippet_broadcast");

    auto* predict = app.add_subcommand("predict", "score a single raw video");
    add_config_opt(predict);
    predict->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    predict->add_option("--input", input_path, "video tensor (FDPN)")->required();
    predict->add_option("--output", out_path, "frame-score CSV path")->required();

    // --- report ----------------------------------------------------------
    auto* report = app.add_subcommand("report", "duration-bucket accuracy comparison");
    std::string scores_a, scores_b, report_out, thresholds_csv = "0.6,0.7,0.8,0.9";
    std::string buckets_csv = "3,6";
    double fps_nominal = 30.0;
    report->add_option("--scores-a", scores_a, "per-video score CSV, system A")->required();
    report->add_option("--scores-b", scores_b, "per-video score CSV, system B")->required();
    report->add_option("--out", report_out, "output CSV")->required();
    report->add_option("--thresholds", thresholds_csv, "comma-separated score thresholds");
    report->add_option("--buckets", buckets_csv, "comma-separated bucket edges in seconds");
    report->add_option("--fps-nominal", fps_nominal, "nominal frames per second");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    if (synth->parsed()) {
        const auto samples = fdpn::generate_synthetic(spec, synth_out);
        std::cout << "wrote " << samples.size() << " videos to " << synth_out << "\n";
        return kExitOk;
    }

    if (mask->parsed()) {
        const fdpn::Tensor frames = fdpn::load_tensor(mask_in);
        std::unique_ptr<fdpn::SaliencyModel> model;
        if (mask_saliency == "tempdiff") {
            model = std::make_unique<fdpn::TempDiffSaliency>();
        } else if (mask_saliency == "file") {
            if (mask_heatmaps.empty())
                throw fdpn::ValidationError("--saliency file requires --heatmaps");
            model = std::make_unique<fdpn::FileSaliency>(fdpn::load_tensor(mask_heatmaps));
        } else {
            throw fdpn::ValidationError("unknown saliency mode '" + mask_saliency + "'");
        }
        const fdpn::MaskedVideo mv = fdpn::mask_video(frames, *model, mask_grid_n, mask_top_k,
                                                      mask_granularity, mask_fps_n);
        fdpn::save_tensor(mask_out, mv.masked);
        if (!mask_save_heat.empty()) fdpn::save_tensor(mask_save_heat, mv.heatmaps);
        std::cout << "masked " << frames.dim(0) << " frames -> " << mask_out << "\n";
        return kExitOk;
    }

    if (extract->parsed()) {
        const fdpn::RunConfig cfg = load_config(cfg_path, extract->remaining());
        fdpn::extract_dataset(cfg, dataset_dir, out_path);
        std::cout << "features written to " << out_path << "\n";
        return kExitOk;
    }

    if (train->parsed()) {
        const fdpn::RunConfig cfg = load_config(cfg_path, train->remaining());
        fdpn::Trainer trainer(cfg, dataset_dir, run_dir);
        fdpn::TrainOptions opts;
        if (max_steps > 0) opts.max_steps = max_steps;
        const fdpn::TrainResult res = trainer.train(opts);
        std::cout << "trained " << res.steps_completed << "/" << res.total_steps << " steps; "
                  << "checkpoint at " << res.checkpoint_path.string() << "\n";
        return kExitOk;
    }

    if (eval->parsed()) {
        const fdpn::RunConfig cfg = load_config(cfg_path, eval->remaining());
        fdpn::FrameScorerKind kind;
        if (frame_scorer == "fps")
            kind = fdpn::FrameScorerKind::fps;
        else if (frame_scorer == "snippet_broadcast")
            kind = fdpn::FrameScorerKind::snippet_broadcast;
        else
            throw fdpn::ValidationError("unknown frame scorer '" + frame_scorer + "'");
        const fdpn::EvalReport rep = fdpn::evaluate(cfg, ckpt_path, dataset_dir, kind);
        std::filesystem::create_directories(out_path);
        rep.write_summary(std::filesystem::path(out_path) / "summary.csv");
        rep.write_scores(std::filesystem::path(out_path) / "scores.csv");
        std::printf("auc_roc=%.6f auc_pr=%.6f", rep.auc_roc, rep.auc_pr);
        if (rep.direction) std::printf(" direction_accuracy=%.6f", rep.direction->accuracy);
        std::printf("\n");
        return kExitOk;
    }

    if (predict->parsed()) {
        const fdpn::RunConfig cfg = load_config(cfg_path, predict->remaining());
        const fdpn::PredictResult res = fdpn::predict(cfg, ckpt_path, input_path);
        std::ofstream os(out_path);
        if (!os) throw fdpn::IoError("cannot write " + out_path);
        os << "frame,score\n";
        char buf[64];
        for (std::size_t f = 0; f < res.frame_scores.size(); ++f) {
            std::snprintf(buf, sizeof buf, "%.10g", res.frame_scores[f]);
            os << f << ',' << buf << '\n';
        }
        const std::filesystem::path dir_path =
            std::filesystem::path(out_path).replace_extension(".direction.csv");
        std::ofstream ds(dir_path);
        ds << "left_back,center,right_back\n";
        for (std::size_t k = 0; k < 3; ++k) {
            std::snprintf(buf, sizeof buf, "%.10g", res.direction[k]);
            ds << buf << (k + 1 < 3 ? "," : "\n");
        }
        std::cout << "wrote " << res.frame_scores.size() << " frame scores to " << out_path
                  << " and the direction distribution to " << dir_path.string() << "\n";
        return kExitOk;
    }

    if (report->parsed()) {
        const fdpn::EvalReport a = fdpn::EvalReport::read_scores(scores_a);
        const fdpn::EvalReport b = fdpn::EvalReport::read_scores(scores_b);
        const auto deltas = fdpn::duration_bucket_improvement(
            a, b, parse_double_list(buckets_csv), parse_double_list(thresholds_csv), fps_nominal);
        std::ofstream os(report_out);
        if (!os) throw fdpn::IoError("cannot write " + report_out);
        os << "bucket,threshold,accuracy_a,accuracy_b,delta\n";
        char buf[192];
        for (const fdpn::BucketDelta& d : deltas) {
            std::snprintf(buf, sizeof buf, "%s,%g,%.10g,%.10g,%.10g\n", d.bucket.c_str(),
                          d.threshold, d.accuracy_a, d.accuracy_b, d.delta);
            os << buf;
        }
        std::cout << "wrote " << deltas.size() << " rows to " << report_out << "\n";
        return kExitOk;
    }

    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const fdpn::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
