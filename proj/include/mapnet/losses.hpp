#pragma once

#include <vector>

#include "mapnet/heads.hpp"

namespace mapnet {

// Candidate lattice partition: element i is positive iff its cell center lies
// inside the ground-truth box in the normalized search frame.
struct LabelAssignment {
    std::vector<int> pos;  // I_p
    std::vector<int> neg;  // I_n
    int total = 0;

    int np() const { return static_cast<int>(pos.size()); }
    int nn() const { return static_cast<int>(neg.size()); }
};

struct LossWeights {
    double beta = 0.0625;
    double lambda_giou = 2.0;
    double lambda_l1 = 5.0;
};

LabelAssignment assign_labels(int grid_h, int grid_w, const Box& gt_norm);

// Plain IoU of two well-formed boxes in a shared frame.
double box_iou(const Box& a, const Box& b);

// 1 - GIoU for well-formed boxes; throws DataError on zero-area ground truth.
double giou_loss_value(const Box& b, const Box& g);

// IoU of a raw (possibly inverted) predicted corner quadruple vs the ground
// truth; invalid boxes score 0. Used for the detached guidance weights.
double raw_corner_iou(double x1, double y1, double x2, double y2, const Box& g);

// Guidance weights over the positive set, mean-normalized to 1. Degenerate
// denominators fall back to uniform weights with a logged warning.
std::vector<double> iou_guidance_weights(const Tensor& boxes, const Box& gt,
                                         const LabelAssignment& labels);
std::vector<double> confidence_guidance_weights(const Tensor& probs,
                                                const LabelAssignment& labels);

// Differentiable per-row losses against a constant ground-truth box. Raw
// corner order is consumed as-is; widths clamp at zero, the enclosure uses
// the corner hull, so inverted predictions still receive useful gradients.
Var giou_loss_rows(const Var& boxes, const Box& gt);
Var l1_loss_rows(const Var& boxes, const Box& gt);

// Precision-guided classification loss. `guided=false` gives the plain
// beta-balanced cross entropy baseline. `frozen_weights`, when provided,
// replaces the internally computed (detached) IoU weights; the gradient
// checks use it to pin the weights across finite-difference evaluations.
Var pg_cls_loss(const Var& probs, const Var& boxes, const Box& gt, const LabelAssignment& labels,
                const LossWeights& w, bool guided = true,
                const std::vector<double>* frozen_weights = nullptr);

// Confidence-guided regression loss; same conventions as above.
Var cg_reg_loss(const Var& probs, const Var& boxes, const Box& gt, const LabelAssignment& labels,
                const LossWeights& w, bool guided = true,
                const std::vector<double>* frozen_weights = nullptr);

Var total_loss(const Var& probs, const Var& boxes, const Box& gt, const LabelAssignment& labels,
               const LossWeights& w, bool pg_guided = true, bool cg_guided = true,
               const std::vector<double>* frozen_iou_w = nullptr,
               const std::vector<double>* frozen_conf_w = nullptr);

}  // namespace mapnet
