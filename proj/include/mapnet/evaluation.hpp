#pragma once

#include "mapnet/tracker.hpp"

namespace mapnet {

struct FrameResult {
    Box pred;  // image pixels
    Box gt;    // image pixels
    double score = 0.0;
};

struct FrameMetrics {
    double iou = 0.0;
    double center_error_px = 0.0;
    double norm_center_error = 0.0;
};

FrameMetrics frame_metrics(const FrameResult& r);  // throws DataError on zero-area gt

// Success AUC: mean over 21 thresholds t in {0, 0.05, ..., 1} of the fraction
// of frames with IoU strictly greater than t.
double success_auc(const std::vector<double>& ious);

// Fraction of frames with center error <= tau pixels.
double precision_at(const std::vector<double>& errors_px, double tau = 20.0);

// Normalized precision AUC over 101 thresholds {0, 0.005, ..., 0.5},
// fraction with normalized center error <= t.
double norm_precision_auc(const std::vector<double>& norm_errors);

struct AoSr {
    double ao = 0.0, sr50 = 0.0, sr75 = 0.0;  // SR uses IoU strictly greater
};
AoSr ao_sr(const std::vector<double>& ious);

struct SequenceReport {
    std::string name;
    int frames = 0;
    double success = 0, precision = 0, npr = 0, ao = 0, sr50 = 0, sr75 = 0;
};

struct EvalReport {
    std::vector<SequenceReport> sequences;
    SequenceReport overall;                  // frame-pooled aggregate
    std::array<double, 21> success_curve{};  // pooled over all frames
    std::array<double, 101> npr_curve{};
};

// Aggregates already-computed frame results (sequence name -> frames).
EvalReport evaluate_results(const std::vector<std::pair<std::string, std::vector<FrameResult>>>&
                                per_sequence_results);

// One-pass evaluation: initialize on frame 1 ground truth, track to the end
// with no re-initialization. Writes per-sequence "x,y,w,h,score" result files
// into out_dir when non-empty.
EvalReport run_ope(const Model& model, const TrackerConfig& tcfg, const std::string& dataset_dir,
                   const std::string& out_dir = "");

void write_report_json(const std::string& path, const EvalReport& report);
EvalReport read_report_json(const std::string& path);

}  // namespace mapnet
