// Command-line surface: synthetic data generation, training, single-sequence
// tracking, OPE evaluation, gradient checking and plot rendering.
//
// Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mapnet/evaluation.hpp"
#include "mapnet/gradcheck_suite.hpp"
#include "mapnet/plots.hpp"
#include "mapnet/train.hpp"

namespace fs = std::filesystem;
using namespace mapnet;

namespace {

std::string data_root_default() {
    const char* env = std::getenv("MAPNET_DATA_ROOT");
    return env ? std::string(env) : std::string();
}

std::string require_path(const std::string& given, const char* flag) {
    if (!given.empty()) return given;
    const std::string root = data_root_default();
    if (root.empty())
        throw ConfigError(std::string("missing ") + flag +
                          " and MAPNET_DATA_ROOT is not set");
    return root;
}

void cmd_demo_data(const std::string& out, uint64_t seed, int sequences, int length,
                   int frame_size, bool distractor, const std::string& shape) {
    SyntheticSequenceConfig cfg;
    cfg.frame_w = frame_size;
    cfg.frame_h = frame_size;
    cfg.length = length;
    cfg.distractor = distractor;
    if (shape == "ellipse")
        cfg.shape = SyntheticSequenceConfig::Shape::ellipse;
    else if (shape != "rectangle")
        throw ConfigError("demo-data: --shape must be rectangle|ellipse");

    fs::create_directories(out);
    char name[32];
    for (int i = 0; i < sequences; ++i) {
        SyntheticSequence seq = generate_synthetic_sequence(cfg, Rng::derive(seed, i));
        std::snprintf(name, sizeof(name), "seq_%03d", i);
        write_sequence_dir((fs::path(out) / name).string(), seq);
    }
    std::printf("wrote %d sequences of %d frames to %s\n", sequences, length, out.c_str());
}

std::vector<SyntheticSequence> load_dataset_sequences(const std::string& dir) {
    std::vector<SyntheticSequence> out;
    for (const auto& sdir : list_sequence_dirs(dir)) {
        SequenceDir sd = load_sequence_dir(sdir);
        SyntheticSequence seq;
        for (size_t i = 0; i < sd.frame_paths.size(); ++i) {
            seq.frames.push_back(load_png(sd.frame_paths[i]));
            seq.boxes.push_back(sd.boxes[i]);
        }
        out.push_back(std::move(seq));
    }
    if (out.empty()) throw DataError("no sequences found under " + dir);
    return out;
}

void cmd_train(const std::string& config_path, const std::string& out,
               const std::string& data_dir) {
    RunConfig cfg = parse_config(config_path);
    fs::create_directories(out);
    write_resolved_config((fs::path(out) / "resolved_config.json").string(), cfg);

    std::vector<SyntheticSequence> sequences;
    if (!data_dir.empty()) {
        sequences = load_dataset_sequences(data_dir);
    } else {
        for (int i = 0; i < cfg.data.sequences; ++i)
            sequences.push_back(
                generate_synthetic_sequence(cfg.data.seq, Rng::derive(cfg.data.seed, i)));
    }

    Model model;
    model.cfg = cfg.model;
    model.build(Rng::derive(cfg.train.seed, 0x1417));

    PairSource source = make_sequence_pair_source(&sequences, cfg);
    TrainResult result = train_model(model, cfg, source,
                                     (fs::path(out) / "train_log.jsonl").string(),
                                     (fs::path(out) / "diagnostics").string());

    nlohmann::json extra;
    extra["run_config"] = run_config_to_json(cfg);
    extra["trained_steps"] = result.logs.size();
    extra["loss"] = {{"beta", cfg.loss.beta},
                     {"lambda_giou", cfg.loss.lambda_giou},
                     {"lambda_l1", cfg.loss.lambda_l1}};
    extra["weight_decay"] = cfg.train.weight_decay;
    save_checkpoint((fs::path(out) / "checkpoint").string(), model, extra);
    std::printf("trained %zu steps; final loss %.6f; checkpoint at %s/checkpoint\n",
                result.logs.size(), result.logs.empty() ? 0.0 : result.logs.back().loss,
                out.c_str());
}

TrackerConfig tracker_config_from_checkpoint(const std::string& checkpoint) {
    TrackerConfig tcfg;
    const nlohmann::json manifest = load_manifest(checkpoint);
    if (manifest.contains("extra") && manifest["extra"].contains("run_config")) {
        RunConfig rc = parse_config_json(manifest["extra"]["run_config"]);
        tcfg = rc.tracker;
    }
    return tcfg;
}

void cmd_track(const std::string& checkpoint, const std::string& sequence,
               const std::string& out) {
    Model model = load_checkpoint(checkpoint);
    TrackerConfig tcfg = tracker_config_from_checkpoint(checkpoint);

    SequenceDir seq = load_sequence_dir(sequence);
    if (seq.boxes.front().area() <= 0.0)
        throw DataError("track: degenerate first-frame annotation");

    std::ofstream rf(out);
    if (!rf) throw DataError("track: cannot write " + out);
    char line[160];
    const Box& b0 = seq.boxes.front();
    std::snprintf(line, sizeof(line), "%.3f,%.3f,%.3f,%.3f,%.4f\n", b0.x1, b0.y1, b0.width(),
                  b0.height(), 1.0);
    rf << line;

    Image first = load_png(seq.frame_paths.front());
    TrackerState state = tracker_init(model, tcfg, first, b0);
    for (size_t i = 1; i < seq.frame_paths.size(); ++i) {
        Image frame = load_png(seq.frame_paths[i]);
        TrackOutput res = track_step(model, state, frame);
        std::snprintf(line, sizeof(line), "%.3f,%.3f,%.3f,%.3f,%.4f\n", res.box.x1, res.box.y1,
                      res.box.width(), res.box.height(), res.score);
        rf << line;
    }
    std::printf("tracked %zu frames; results at %s\n", seq.frame_paths.size(), out.c_str());
}

void cmd_eval(const std::string& checkpoint, const std::string& dataset,
              const std::string& out) {
    Model model = load_checkpoint(checkpoint);
    TrackerConfig tcfg = tracker_config_from_checkpoint(checkpoint);
    fs::create_directories(out);
    EvalReport report = run_ope(model, tcfg, dataset, (fs::path(out) / "results").string());
    write_report_json((fs::path(out) / "report.json").string(), report);
    std::printf("sequences %zu frames %d | success %.4f precision %.4f npr %.4f ao %.4f "
                "sr50 %.4f sr75 %.4f\n",
                report.sequences.size(), report.overall.frames, report.overall.success,
                report.overall.precision, report.overall.npr, report.overall.ao,
                report.overall.sr50, report.overall.sr75);
}

void cmd_gradcheck(const std::string& block, uint64_t seed) {
    const auto checks = run_gradcheck_suite(seed, block);
    bool ok = true;
    for (const auto& c : checks) {
        std::printf("%-24s max_rel_err %.3e  (%d entries, worst: %s)\n", c.block.c_str(),
                    c.report.max_rel_err, c.report.entries_checked,
                    c.report.worst_leaf.empty() ? "-" : c.report.worst_leaf.c_str());
        ok = ok && c.report.max_rel_err < 1e-3;
    }
    if (!ok) throw NumericError("gradcheck: at least one block exceeds 1e-3 relative error");
}

void cmd_plot(const std::string& report_path, const std::string& out) {
    EvalReport report = read_report_json(report_path);
    emit_plots(report, out);
    std::printf("plots written to %s\n", out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-attention associate prediction tracker"};
    app.require_subcommand(1);

    // demo-data
    std::string dd_out;
    uint64_t dd_seed = 0;
    int dd_sequences = 5, dd_length = 40, dd_frame = 128;
    bool dd_distractor = false;
    std::string dd_shape = "rectangle";
    auto* dd = app.add_subcommand("demo-data", "generate seeded synthetic sequences");
    dd->add_option("--out", dd_out, "output dataset directory (default: $MAPNET_DATA_ROOT)");
    dd->add_option("--seed", dd_seed, "generation seed");
    dd->add_option("--sequences", dd_sequences, "number of sequences");
    dd->add_option("--length", dd_length, "frames per sequence");
    dd->add_option("--frame-size", dd_frame, "square frame side in pixels");
    dd->add_flag("--distractor", dd_distractor, "add a second moving object");
    dd->add_option("--shape", dd_shape, "object shape: rectangle|ellipse");

    // train
    std::string tr_config, tr_out, tr_data;
    auto* tr = app.add_subcommand("train", "train a model from a config file");
    tr->add_option("--config", tr_config, "run configuration (JSON)")->required();
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--data", tr_data, "train on an existing dataset directory");

    // track
    std::string tk_ckpt, tk_seq, tk_out;
    auto* tk = app.add_subcommand("track", "run the tracker over one sequence");
    tk->add_option("--checkpoint", tk_ckpt, "checkpoint directory")->required();
    tk->add_option("--sequence", tk_seq, "sequence directory")->required();
    tk->add_option("--out", tk_out, "result file (x,y,w,h,score per line)")->required();

    // eval
    std::string ev_ckpt, ev_data, ev_out;
    auto* ev = app.add_subcommand("eval", "one-pass evaluation over a dataset");
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
    ev->add_option("--dataset", ev_data, "dataset directory (default: $MAPNET_DATA_ROOT)");
    ev->add_option("--out", ev_out, "output directory")->required();

    // gradcheck
    std::string gc_block;
    uint64_t gc_seed = 2024;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_option("--block", gc_block, "restrict to one block");
    gc->add_option("--seed", gc_seed, "random seed");

    // plot
    std::string pl_report, pl_out;
    auto* pl = app.add_subcommand("plot", "render success/precision plots from a report");
    pl->add_option("--report", pl_report, "report.json produced by eval")->required();
    pl->add_option("--out", pl_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (dd->parsed())
            cmd_demo_data(require_path(dd_out, "--out"), dd_seed, dd_sequences, dd_length,
                          dd_frame, dd_distractor, dd_shape);
        else if (tr->parsed())
            cmd_train(tr_config, tr_out, tr_data);
        else if (tk->parsed())
            cmd_track(tk_ckpt, tk_seq, tk_out);
        else if (ev->parsed())
            cmd_eval(ev_ckpt, require_path(ev_data, "--dataset"), ev_out);
        else if (gc->parsed())
            cmd_gradcheck(gc_block, gc_seed);
        else if (pl->parsed())
            cmd_plot(pl_report, pl_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 0;
}
