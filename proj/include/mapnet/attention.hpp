#pragma once

#include "mapnet/ops.hpp"
#include "mapnet/rng.hpp"

namespace mapnet {

// Channel gate: x * sigmoid(MLP(maxpool_hw(x)) + MLP(avgpool_hw(x))), with a
// shared two-layer bottleneck MLP (ReLU between) and channel-wise product.
struct ChannelAttnParams {
    Var w1;  // {C, C/r}
    Var w2;  // {C/r, C}
    int reduction = 16;
};

// Spatial gate: x * sigmoid(Conv(maxpool_c(x)) + Conv(avgpool_c(x))), one
// shared k x k single-channel convolution, pixel-wise product.
struct SpatialAttnParams {
    Var kernel;  // {k, k, 1, 1}
    Var bias;    // {1}
    int kernel_size = 7;
};

struct MultiHeadParams {
    Var wq;  // {d_m, heads*d_k}, head i owns columns [i*d_k, (i+1)*d_k)
    Var wk;  // {d_m, heads*d_k}
    Var wv;  // {d_m, heads*d_v}
    Var wo;  // {heads*d_v, d_m}
    int heads = 8;
};

struct FfnParams {
    Var w1;  // {d, d_ff}
    Var b1;  // {d_ff}
    Var w2;  // {d_ff, d}
    Var b2;  // {d}
};

Var channel_attention(const Var& x, const ChannelAttnParams& p);
Var spatial_attention(const Var& x, const SpatialAttnParams& p);

// q/k/v are already-projected token sequences {n, d_m}; the per-head
// projections of the multi-head block are applied inside.
Var multi_head_attention(const Var& q, const Var& k, const Var& v, const MultiHeadParams& p);

// Deterministic 2-D sinusoidal encoding, rows laid out row-major over the
// grid. First half of the channels encodes the row coordinate, second half
// the column; sine/cosine interleave within each half; temperature 10000.
Tensor positional_encoding(int grid_h, int grid_w, int d);

// x + (w2 * relu(w1 * x + b1) + b2); optional inverted dropout on the hidden
// activation when training.
Var feed_forward(const Var& x, const FfnParams& p, double dropout_p = 0.0, Rng* rng = nullptr);

}  // namespace mapnet
