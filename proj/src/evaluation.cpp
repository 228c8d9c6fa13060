#include "mapnet/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace mapnet {

FrameMetrics frame_metrics(const FrameResult& r) {
    if (r.gt.area() <= 0.0) throw DataError("frame_metrics: zero-area ground truth");
    FrameMetrics m;
    m.iou = box_iou(r.pred, r.gt);
    const double dx = r.pred.cx() - r.gt.cx();
    const double dy = r.pred.cy() - r.gt.cy();
    m.center_error_px = std::hypot(dx, dy);
    m.norm_center_error = std::hypot(dx / r.gt.width(), dy / r.gt.height());
    return m;
}

double success_auc(const std::vector<double>& ious) {
    if (ious.empty()) throw DataError("success_auc: empty input");
    double acc = 0.0;
    for (int i = 0; i <= 20; ++i) {
        const double t = i * 0.05;
        int hits = 0;
        for (double v : ious)
            if (v > t) ++hits;
        acc += static_cast<double>(hits) / ious.size();
    }
    return acc / 21.0;
}

double precision_at(const std::vector<double>& errors_px, double tau) {
    if (errors_px.empty()) throw DataError("precision_at: empty input");
    int hits = 0;
    for (double e : errors_px)
        if (e <= tau) ++hits;
    return static_cast<double>(hits) / errors_px.size();
}

double norm_precision_auc(const std::vector<double>& norm_errors) {
    if (norm_errors.empty()) throw DataError("norm_precision_auc: empty input");
    double acc = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double t = i * 0.005;
        int hits = 0;
        for (double e : norm_errors)
            if (e <= t) ++hits;
        acc += static_cast<double>(hits) / norm_errors.size();
    }
    return acc / 101.0;
}

AoSr ao_sr(const std::vector<double>& ious) {
    if (ious.empty()) throw DataError("ao_sr: empty input");
    AoSr out;
    int n50 = 0, n75 = 0;
    for (double v : ious) {
        out.ao += v;
        if (v > 0.5) ++n50;
        if (v > 0.75) ++n75;
    }
    out.ao /= static_cast<double>(ious.size());
    out.sr50 = static_cast<double>(n50) / ious.size();
    out.sr75 = static_cast<double>(n75) / ious.size();
    return out;
}

namespace {

SequenceReport summarize(const std::string& name, const std::vector<double>& ious,
                         const std::vector<double>& errs, const std::vector<double>& nerrs) {
    SequenceReport r;
    r.name = name;
    r.frames = static_cast<int>(ious.size());
    r.success = success_auc(ious);
    r.precision = precision_at(errs);
    r.npr = norm_precision_auc(nerrs);
    const AoSr a = ao_sr(ious);
    r.ao = a.ao;
    r.sr50 = a.sr50;
    r.sr75 = a.sr75;
    return r;
}

}  // namespace

EvalReport evaluate_results(
    const std::vector<std::pair<std::string, std::vector<FrameResult>>>& per_sequence_results) {
    EvalReport report;
    std::vector<double> all_ious, all_errs, all_nerrs;
    for (const auto& [name, frames] : per_sequence_results) {
        std::vector<double> ious, errs, nerrs;
        for (const auto& fr : frames) {
            if (fr.gt.area() <= 0.0) {
                log_warn("evaluation: skipping zero-area ground-truth frame in " + name);
                continue;
            }
            const FrameMetrics m = frame_metrics(fr);
            ious.push_back(m.iou);
            errs.push_back(m.center_error_px);
            nerrs.push_back(m.norm_center_error);
        }
        if (ious.empty()) {
            log_warn("evaluation: sequence " + name + " has no usable frames; skipped");
            continue;
        }
        report.sequences.push_back(summarize(name, ious, errs, nerrs));
        all_ious.insert(all_ious.end(), ious.begin(), ious.end());
        all_errs.insert(all_errs.end(), errs.begin(), errs.end());
        all_nerrs.insert(all_nerrs.end(), nerrs.begin(), nerrs.end());
    }
    if (all_ious.empty()) throw DataError("evaluation: no usable frames in any sequence");
    report.overall = summarize("overall", all_ious, all_errs, all_nerrs);

    for (int i = 0; i <= 20; ++i) {
        const double t = i * 0.05;
        int hits = 0;
        for (double v : all_ious)
            if (v > t) ++hits;
        report.success_curve[static_cast<size_t>(i)] =
            static_cast<double>(hits) / all_ious.size();
    }
    for (int i = 0; i <= 100; ++i) {
        const double t = i * 0.005;
        int hits = 0;
        for (double e : all_nerrs)
            if (e <= t) ++hits;
        report.npr_curve[static_cast<size_t>(i)] = static_cast<double>(hits) / all_nerrs.size();
    }
    return report;
}

EvalReport run_ope(const Model& model, const TrackerConfig& tcfg, const std::string& dataset_dir,
                   const std::string& out_dir) {
    const auto dirs = list_sequence_dirs(dataset_dir);
    if (dirs.empty()) throw DataError("run_ope: no sequences under " + dataset_dir);
    if (!out_dir.empty()) fs::create_directories(out_dir);

    std::vector<std::pair<std::string, std::vector<FrameResult>>> results;
    for (const auto& dir : dirs) {
        SequenceDir seq;
        try {
            seq = load_sequence_dir(dir);
        } catch (const DataError& e) {
            log_warn(std::string("run_ope: skipping sequence: ") + e.what());
            continue;
        }
        if (seq.boxes.front().area() <= 0.0) {
            log_warn("run_ope: first-frame annotation degenerate in " + seq.name + "; skipped");
            continue;
        }

        std::vector<FrameResult> frames;
        frames.reserve(seq.frame_paths.size());
        Image first = load_png(seq.frame_paths.front());
        TrackerState state = tracker_init(model, tcfg, first, seq.boxes.front());
        frames.push_back({seq.boxes.front(), seq.boxes.front(), 1.0});
        for (size_t i = 1; i < seq.frame_paths.size(); ++i) {
            Image frame = load_png(seq.frame_paths[i]);
            TrackOutput out = track_step(model, state, frame);
            frames.push_back({out.box, seq.boxes[i], out.score});
        }

        if (!out_dir.empty()) {
            std::ofstream rf(fs::path(out_dir) / (seq.name + ".txt"));
            if (!rf) throw DataError("run_ope: cannot write results for " + seq.name);
            char line[160];
            for (const auto& fr : frames) {
                std::snprintf(line, sizeof(line), "%.3f,%.3f,%.3f,%.3f,%.4f\n", fr.pred.x1,
                              fr.pred.y1, fr.pred.width(), fr.pred.height(), fr.score);
                rf << line;
            }
        }
        results.emplace_back(seq.name, std::move(frames));
    }
    return evaluate_results(results);
}

namespace {

nlohmann::json seq_to_json(const SequenceReport& r) {
    return {{"name", r.name},     {"frames", r.frames}, {"success", r.success},
            {"precision", r.precision}, {"npr", r.npr},  {"ao", r.ao},
            {"sr50", r.sr50},     {"sr75", r.sr75}};
}

SequenceReport seq_from_json(const nlohmann::json& j) {
    SequenceReport r;
    r.name = j.at("name").get<std::string>();
    r.frames = j.at("frames").get<int>();
    r.success = j.at("success").get<double>();
    r.precision = j.at("precision").get<double>();
    r.npr = j.at("npr").get<double>();
    r.ao = j.at("ao").get<double>();
    r.sr50 = j.at("sr50").get<double>();
    r.sr75 = j.at("sr75").get<double>();
    return r;
}

}  // namespace

void write_report_json(const std::string& path, const EvalReport& report) {
    nlohmann::json j;
    j["overall"] = seq_to_json(report.overall);
    j["sequences"] = nlohmann::json::array();
    for (const auto& s : report.sequences) j["sequences"].push_back(seq_to_json(s));
    j["success_curve"] = report.success_curve;
    j["npr_curve"] = report.npr_curve;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report: " + path);
    out << j.dump(2) << "\n";
}

EvalReport read_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read report: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid report JSON in " + path + ": " + e.what());
    }
    EvalReport report;
    report.overall = seq_from_json(j.at("overall"));
    for (const auto& s : j.at("sequences")) report.sequences.push_back(seq_from_json(s));
    const auto sc = j.at("success_curve").get<std::vector<double>>();
    const auto nc = j.at("npr_curve").get<std::vector<double>>();
    if (sc.size() != 21 || nc.size() != 101)
        throw DataError("report curves have unexpected lengths in " + path);
    std::copy(sc.begin(), sc.end(), report.success_curve.begin());
    std::copy(nc.begin(), nc.end(), report.npr_curve.begin());
    return report;
}

}  // namespace mapnet
