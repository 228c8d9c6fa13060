#pragma once

#include "mapnet/autograd.hpp"

namespace mapnet::ops {

// Elementwise / broadcast arithmetic
Var add(const Var& a, const Var& b);                 // same shape
Var add_rowvec(const Var& a, const Var& b);          // a {n,d}, b {d}
Var add_const(const Var& a, const Tensor& c);        // c constant, same shape
Var add_scalar(const Var& a, double s);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);                 // same shape
Var mul_scalar(const Var& a, double s);
Var div(const Var& a, const Var& b);                 // same shape, b nonzero
Var vmax(const Var& a, const Var& b);                // ties route to a
Var vmin(const Var& a, const Var& b);
Var vmax_scalar(const Var& a, double c);
Var vmin_scalar(const Var& a, double c);

// Nonlinearities
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var log_v(const Var& a);
Var abs_v(const Var& a);
Var sqrt_v(const Var& a);
Var softmax_rows(const Var& a);                      // {n,d}, rows sum to 1

// Linear algebra
Var matmul(const Var& a, const Var& b);              // {m,k} x {k,n}
Var transpose(const Var& a);                         // 2-D
Var linear(const Var& x, const Var& w, const Var& b);// x {n,d}, w {d,o}, b {o}

// Reductions / selection
Var sum_all(const Var& a);                           // -> {1}
Var mean_all(const Var& a);
Var dot_const(const Var& a, const Tensor& w);        // sum(a*w), w constant
Var gather_rows(const Var& a, std::vector<int> idx);
Var select_per_row(const Var& a, std::vector<int> idx);  // {n,d} -> {n}

// Shape manipulation
Var concat_rows(const Var& a, const Var& b);
Var concat_cols(const Var& a, const Var& b);
Var slice_rows(const Var& a, int lo, int hi);
Var slice_cols(const Var& a, int lo, int hi);
Var reshape(const Var& a, std::vector<int> shape);

// Spatial ops on {H,W,C} grids
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int dilation,
           bool same_pad);
Var maxpool2d(const Var& x, int k, int stride, int pad);
Var global_max_pool_hw(const Var& x);                // -> {C}
Var global_avg_pool_hw(const Var& x);                // -> {C}
Var channel_max_pool(const Var& x);                  // -> {H,W,1}
Var channel_avg_pool(const Var& x);                  // -> {H,W,1}
Var mul_channel_gate(const Var& x, const Var& g);    // g {C}
Var mul_pixel_gate(const Var& x, const Var& g);      // g {H,W,1}
Var channel_affine(const Var& x, const Var& s, const Var& t);  // x*s[c] + t[c]

// Normalization / regularization
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var dropout_mask(const Var& x, const Tensor& mask);  // mask constant, pre-scaled

// Graph control
Var detach(const Var& a);
Var constant(Tensor t);

}  // namespace mapnet::ops
