#include "mapnet/tracker.hpp"

#include <cmath>

namespace mapnet {

Tensor hanning_window(int grid_h, int grid_w) {
    MAPNET_REQUIRE(grid_h >= 1 && grid_w >= 1, "hanning_window: empty grid");
    auto hann = [](int n) {
        std::vector<double> w(static_cast<size_t>(n));
        if (n == 1) {
            w[0] = 1.0;
            return w;
        }
        for (int i = 0; i < n; ++i)
            w[static_cast<size_t>(i)] =
                0.5 * (1.0 - std::cos(2.0 * M_PI * i / (n - 1)));
        return w;
    };
    const auto wy = hann(grid_h);
    const auto wx = hann(grid_w);
    Tensor out({grid_h * grid_w});
    double peak = 0.0;
    for (int r = 0; r < grid_h; ++r)
        for (int c = 0; c < grid_w; ++c) {
            out[r * grid_w + c] = wy[static_cast<size_t>(r)] * wx[static_cast<size_t>(c)];
            peak = std::max(peak, out[r * grid_w + c]);
        }
    MAPNET_REQUIRE(peak > 0.0, "hanning_window: degenerate window");
    for (int i = 0; i < out.size(); ++i) out[i] /= peak;
    return out;
}

TrackerState tracker_init(const Model& model, const TrackerConfig& cfg, const Image& frame,
                          const Box& box) {
    if (box.area() <= 0.0) throw DataError("tracker_init: degenerate first-frame box");
    TrackerState state;
    state.cfg = cfg;
    auto [patch, geo] = crop_patch(frame, box, cfg.template_area, model.cfg.template_size,
                                   model.cfg.pixel_mean, PatchRole::template_patch);
    (void)geo;
    state.template_tokens = model.template_tokens(patch.pixels01);
    state.prev_box = box;
    const int g = model.cfg.search_grid();
    state.window = hanning_window(g, g);
    return state;
}

Tensor apply_window_penalty(const Tensor& scores, const Tensor& window, double lambda_w) {
    MAPNET_REQUIRE(scores.same_shape(window), "apply_window_penalty: length mismatch");
    MAPNET_REQUIRE(lambda_w >= 0.0 && lambda_w <= 1.0,
                   "apply_window_penalty: lambda must lie in [0,1]");
    Tensor out = scores;
    for (int i = 0; i < out.size(); ++i)
        out[i] = (1.0 - lambda_w) * out[i] + lambda_w * window[i];
    return out;
}

TrackOutput track_step(const Model& model, TrackerState& state, const Image& frame) {
    if (frame.height < 1 || frame.width < 1) throw DataError("track_step: empty frame");
    auto [patch, geo] = crop_patch(frame, state.prev_box, state.cfg.search_area,
                                   model.cfg.search_size, model.cfg.pixel_mean,
                                   PatchRole::search_patch);

    ParamBinder bind(model.params, false);
    ModelOutput out = model.forward_search(bind, state.template_tokens, patch.pixels01);

    const int n = out.cls_probs.dim(0);
    Tensor fg({n});
    for (int i = 0; i < n; ++i) fg[i] = out.cls_probs.val().at(i, 0);
    const Tensor blended = apply_window_penalty(fg, state.window, state.cfg.window_weight);

    int best = 0;
    for (int i = 1; i < n; ++i)
        if (blended[i] > blended[best]) best = i;

    Box raw{out.boxes.val().at(best, 0), out.boxes.val().at(best, 1),
            out.boxes.val().at(best, 2), out.boxes.val().at(best, 3),
            BoxFrame::normalized_search};
    TrackOutput result;
    result.box = decode_box(raw, geo);
    result.score = fg[best];
    state.prev_box = result.box;
    return result;
}

}  // namespace mapnet
