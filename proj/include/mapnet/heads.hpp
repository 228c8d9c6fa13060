#pragma once

#include <array>

#include "mapnet/ops.hpp"

namespace mapnet {

enum class BoxFrame { normalized_search, image_pixels };

// Axis-aligned rectangle in corner form. The frame tag makes the coordinate
// convention explicit: unit square over the search crop, or image pixels.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    BoxFrame frame = BoxFrame::image_pixels;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }

    static Box from_xywh(double x, double y, double w, double h,
                         BoxFrame frame = BoxFrame::image_pixels) {
        return Box{x, y, x + w, y + h, frame};
    }
};

// Square crop taken from an image: center/side in image pixels, resized to
// out_size. Records the affine map needed to decode normalized boxes.
struct CropGeometry {
    double cx = 0, cy = 0;
    double side = 0;
    int out_size = 0;
    std::array<double, 3> pad_fill{0, 0, 0};

    double origin_x() const { return cx - 0.5 * side; }
    double origin_y() const { return cy - 0.5 * side; }
    double scale() const { return side / out_size; }
};

// Three-layer per-token MLP head (ReLU between layers).
struct HeadParams {
    Var w1, b1;
    Var w2, b2;
    Var w3, b3;
};

// {n, d} tokens -> {n, 2} (foreground, background) logits.
Var classify(const Var& s_c, const HeadParams& p);
// {n, d} tokens -> {n, 4} normalized corner boxes squashed into [0,1].
Var regress(const Var& s_p, const HeadParams& p);

// Affine map from the normalized search frame to image pixels. Degenerate
// corner order is repaired by sorting here, never in the losses.
Box decode_box(const Box& b, const CropGeometry& g);
Box encode_box(const Box& b, const CropGeometry& g);

}  // namespace mapnet
