#pragma once

#include "mapnet/config.hpp"

namespace mapnet {

// Frame-by-frame inference state. Template tokens are extracted once at init
// and never touched again; only prev_box advances.
struct TrackerState {
    Tensor template_tokens;  // {n_z, d}, frozen
    Box prev_box;            // image pixels
    Tensor window;           // {n_x}, flattened Hanning grid, peak 1
    TrackerConfig cfg;
};

// Outer product of two Hann sequences, max-normalized to 1.
Tensor hanning_window(int grid_h, int grid_w);

TrackerState tracker_init(const Model& model, const TrackerConfig& cfg, const Image& frame,
                          const Box& box);

// score' = (1 - lambda) * score + lambda * window
Tensor apply_window_penalty(const Tensor& scores, const Tensor& window, double lambda_w);

struct TrackOutput {
    Box box;       // image pixels
    double score;  // foreground probability of the selected element
};

TrackOutput track_step(const Model& model, TrackerState& state, const Image& frame);

}  // namespace mapnet
