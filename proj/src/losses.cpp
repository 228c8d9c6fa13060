#include "mapnet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mapnet/common.hpp"

namespace mapnet {

namespace op = ops;

LabelAssignment assign_labels(int grid_h, int grid_w, const Box& gt_norm) {
    MAPNET_REQUIRE(gt_norm.frame == BoxFrame::normalized_search,
                   "assign_labels: ground truth must be in the normalized search frame");
    LabelAssignment out;
    out.total = grid_h * grid_w;
    for (int r = 0; r < grid_h; ++r) {
        for (int c = 0; c < grid_w; ++c) {
            const double cx = (c + 0.5) / grid_w;
            const double cy = (r + 0.5) / grid_h;
            const int idx = r * grid_w + c;
            if (cx >= gt_norm.x1 && cx <= gt_norm.x2 && cy >= gt_norm.y1 && cy <= gt_norm.y2)
                out.pos.push_back(idx);
            else
                out.neg.push_back(idx);
        }
    }
    return out;
}

double box_iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double giou_loss_value(const Box& b, const Box& g) {
    if (g.area() <= 0.0) throw DataError("giou_loss: zero-area ground-truth box");
    const double iw = std::max(0.0, std::min(b.x2, g.x2) - std::max(b.x1, g.x1));
    const double ih = std::max(0.0, std::min(b.y2, g.y2) - std::max(b.y1, g.y1));
    const double inter = iw * ih;
    const double uni = std::max(0.0, b.area()) + g.area() - inter;
    const double enc_w = std::max(b.x2, g.x2) - std::min(b.x1, g.x1);
    const double enc_h = std::max(b.y2, g.y2) - std::min(b.y1, g.y1);
    const double enc = enc_w * enc_h;
    const double giou = inter / uni - (enc - uni) / enc;
    return 1.0 - giou;
}

double raw_corner_iou(double x1, double y1, double x2, double y2, const Box& g) {
    const double bw = std::max(0.0, x2 - x1);
    const double bh = std::max(0.0, y2 - y1);
    if (bw <= 0.0 || bh <= 0.0) return 0.0;
    const double iw = std::min(x2, g.x2) - std::max(x1, g.x1);
    const double ih = std::min(y2, g.y2) - std::max(y1, g.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = bw * bh + g.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<double> iou_guidance_weights(const Tensor& boxes, const Box& gt,
                                         const LabelAssignment& labels) {
    std::vector<double> ious;
    ious.reserve(labels.pos.size());
    double mean = 0.0;
    for (int i : labels.pos) {
        const double v =
            raw_corner_iou(boxes.at(i, 0), boxes.at(i, 1), boxes.at(i, 2), boxes.at(i, 3), gt);
        ious.push_back(v);
        mean += v;
    }
    mean /= std::max<size_t>(1, ious.size());
    if (mean <= 0.0) {
        log_warn("pg_cls_loss: mean positive IoU is zero; falling back to uniform weights");
        std::fill(ious.begin(), ious.end(), 1.0);
        return ious;
    }
    for (auto& v : ious) v /= mean;
    return ious;
}

std::vector<double> confidence_guidance_weights(const Tensor& probs,
                                                const LabelAssignment& labels) {
    std::vector<double> conf;
    conf.reserve(labels.pos.size());
    double mean = 0.0;
    for (int i : labels.pos) {
        conf.push_back(probs.at(i, 0));
        mean += conf.back();
    }
    mean /= std::max<size_t>(1, conf.size());
    if (mean <= 0.0) {
        log_warn("cg_reg_loss: mean positive confidence is zero; falling back to uniform weights");
        std::fill(conf.begin(), conf.end(), 1.0);
        return conf;
    }
    for (auto& v : conf) v /= mean;
    return conf;
}

namespace {

struct BoxCols {
    Var x1, y1, x2, y2;
};

BoxCols split_cols(const Var& boxes) {
    return {op::slice_cols(boxes, 0, 1), op::slice_cols(boxes, 1, 2),
            op::slice_cols(boxes, 2, 3), op::slice_cols(boxes, 3, 4)};
}

}  // namespace

Var giou_loss_rows(const Var& boxes, const Box& gt) {
    MAPNET_REQUIRE(boxes.rank() == 2 && boxes.dim(1) == 4, "giou_loss_rows: expect {n,4}");
    if (gt.area() <= 0.0) throw DataError("giou_loss_rows: zero-area ground-truth box");
    const int n = boxes.dim(0);
    BoxCols b = split_cols(boxes);

    Var bw = op::vmax_scalar(op::sub(b.x2, b.x1), 0.0);
    Var bh = op::vmax_scalar(op::sub(b.y2, b.y1), 0.0);
    Var area_b = op::mul(bw, bh);

    Var iw = op::vmax_scalar(op::sub(op::vmin_scalar(b.x2, gt.x2), op::vmax_scalar(b.x1, gt.x1)), 0.0);
    Var ih = op::vmax_scalar(op::sub(op::vmin_scalar(b.y2, gt.y2), op::vmax_scalar(b.y1, gt.y1)), 0.0);
    Var inter = op::mul(iw, ih);

    Var uni = op::sub(op::add_scalar(area_b, gt.area()), inter);

    // Enclosure spans the corner hull so inverted corners still steer back.
    Var enc_w = op::sub(op::vmax_scalar(op::vmax(b.x1, b.x2), gt.x2),
                        op::vmin_scalar(op::vmin(b.x1, b.x2), gt.x1));
    Var enc_h = op::sub(op::vmax_scalar(op::vmax(b.y1, b.y2), gt.y2),
                        op::vmin_scalar(op::vmin(b.y1, b.y2), gt.y1));
    Var enc = op::mul(enc_w, enc_h);

    Var giou = op::sub(op::div(inter, uni), op::div(op::sub(enc, uni), enc));
    return op::reshape(op::sub(op::constant(Tensor::full({n, 1}, 1.0)), giou), {n});
}

Var l1_loss_rows(const Var& boxes, const Box& gt) {
    MAPNET_REQUIRE(boxes.rank() == 2 && boxes.dim(1) == 4, "l1_loss_rows: expect {n,4}");
    const int n = boxes.dim(0);
    Tensor gtv({n, 4});
    for (int i = 0; i < n; ++i) {
        gtv.at(i, 0) = gt.x1;
        gtv.at(i, 1) = gt.y1;
        gtv.at(i, 2) = gt.x2;
        gtv.at(i, 3) = gt.y2;
    }
    Var diff = op::abs_v(op::add_const(op::neg(boxes), gtv));
    // Row sums via {n,4} x {4,1}.
    Var ones = op::constant(Tensor::full({4, 1}, 1.0));
    return op::reshape(op::matmul(diff, ones), {n});
}

Var pg_cls_loss(const Var& probs, const Var& boxes, const Box& gt, const LabelAssignment& labels,
                const LossWeights& w, bool guided, const std::vector<double>* frozen_weights) {
    MAPNET_REQUIRE(probs.rank() == 2 && probs.dim(1) == 2, "pg_cls_loss: probs must be {n,2}");
    MAPNET_REQUIRE(probs.dim(0) == labels.total, "pg_cls_loss: label/probability count mismatch");
    if (labels.np() == 0) throw NumericError("pg_cls_loss: undefined with zero positive samples");

    std::vector<double> iou_w;
    if (guided) {
        iou_w = frozen_weights ? *frozen_weights : iou_guidance_weights(boxes.val(), gt, labels);
        MAPNET_REQUIRE(static_cast<int>(iou_w.size()) == labels.np(),
                       "pg_cls_loss: weight count mismatch");
    } else {
        iou_w.assign(static_cast<size_t>(labels.np()), 1.0);
    }

    // Cross entropy of the softmax probabilities against the assigned class:
    // foreground column 0 for positives, background column 1 for negatives.
    std::vector<int> target(static_cast<size_t>(labels.total), 1);
    for (int i : labels.pos) target[static_cast<size_t>(i)] = 0;
    Var ce = op::neg(op::log_v(op::select_per_row(probs, target)));

    const double denom = labels.np() + w.beta * labels.nn();
    Tensor weight({labels.total});
    for (size_t k = 0; k < labels.pos.size(); ++k)
        weight[labels.pos[k]] = iou_w[k] / denom;
    for (int i : labels.neg) weight[i] = w.beta / denom;
    return op::dot_const(ce, weight);
}

Var cg_reg_loss(const Var& probs, const Var& boxes, const Box& gt, const LabelAssignment& labels,
                const LossWeights& w, bool guided, const std::vector<double>* frozen_weights) {
    MAPNET_REQUIRE(boxes.rank() == 2 && boxes.dim(1) == 4, "cg_reg_loss: boxes must be {n,4}");
    MAPNET_REQUIRE(boxes.dim(0) == labels.total, "cg_reg_loss: label/box count mismatch");
    if (labels.np() == 0) throw NumericError("cg_reg_loss: undefined with zero positive samples");

    std::vector<double> conf_w;
    if (guided) {
        conf_w = frozen_weights ? *frozen_weights : confidence_guidance_weights(probs.val(), labels);
        MAPNET_REQUIRE(static_cast<int>(conf_w.size()) == labels.np(),
                       "cg_reg_loss: weight count mismatch");
    } else {
        conf_w.assign(static_cast<size_t>(labels.np()), 1.0);
    }

    Var pos_boxes = op::gather_rows(boxes, labels.pos);
    Var combined = op::add(op::mul_scalar(giou_loss_rows(pos_boxes, gt), w.lambda_giou),
                           op::mul_scalar(l1_loss_rows(pos_boxes, gt), w.lambda_l1));
    Tensor weight({labels.np()});
    for (int k = 0; k < labels.np(); ++k) weight[k] = conf_w[static_cast<size_t>(k)] / labels.np();
    return op::dot_const(combined, weight);
}

Var total_loss(const Var& probs, const Var& boxes, const Box& gt, const LabelAssignment& labels,
               const LossWeights& w, bool pg_guided, bool cg_guided,
               const std::vector<double>* frozen_iou_w,
               const std::vector<double>* frozen_conf_w) {
    Var cls = pg_cls_loss(probs, boxes, gt, labels, w, pg_guided, frozen_iou_w);
    Var reg = cg_reg_loss(probs, boxes, gt, labels, w, cg_guided, frozen_conf_w);
    return op::add(cls, reg);
}

}  // namespace mapnet
