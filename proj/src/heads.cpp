#include "mapnet/heads.hpp"

#include <algorithm>

namespace mapnet {

namespace op = ops;

namespace {

Var head_mlp(const Var& tokens, const HeadParams& p) {
    MAPNET_REQUIRE(tokens.rank() == 2 && tokens.dim(1) == p.w1.dim(0),
                   "prediction head: token width mismatch");
    Var h = op::relu(op::linear(tokens, p.w1, p.b1));
    h = op::relu(op::linear(h, p.w2, p.b2));
    return op::linear(h, p.w3, p.b3);
}

}  // namespace

Var classify(const Var& s_c, const HeadParams& p) {
    MAPNET_REQUIRE(p.w3.dim(1) == 2, "classify: head must emit 2 logits");
    return head_mlp(s_c, p);
}

Var regress(const Var& s_p, const HeadParams& p) {
    MAPNET_REQUIRE(p.w3.dim(1) == 4, "regress: head must emit 4 coordinates");
    return op::sigmoid(head_mlp(s_p, p));
}

Box decode_box(const Box& b, const CropGeometry& g) {
    MAPNET_REQUIRE(b.frame == BoxFrame::normalized_search, "decode_box: expects normalized box");
    const double lo_x = std::min(b.x1, b.x2), hi_x = std::max(b.x1, b.x2);
    const double lo_y = std::min(b.y1, b.y2), hi_y = std::max(b.y1, b.y2);
    Box out;
    out.frame = BoxFrame::image_pixels;
    out.x1 = g.origin_x() + lo_x * g.side;
    out.x2 = g.origin_x() + hi_x * g.side;
    out.y1 = g.origin_y() + lo_y * g.side;
    out.y2 = g.origin_y() + hi_y * g.side;
    return out;
}

Box encode_box(const Box& b, const CropGeometry& g) {
    MAPNET_REQUIRE(b.frame == BoxFrame::image_pixels, "encode_box: expects pixel box");
    Box out;
    out.frame = BoxFrame::normalized_search;
    out.x1 = (b.x1 - g.origin_x()) / g.side;
    out.x2 = (b.x2 - g.origin_x()) / g.side;
    out.y1 = (b.y1 - g.origin_y()) / g.side;
    out.y2 = (b.y2 - g.origin_y()) / g.side;
    return out;
}

}  // namespace mapnet
