#include "mapnet/attention.hpp"

#include <cmath>

namespace mapnet {

namespace op = ops;

namespace {

Var gate_mlp(const Var& pooled, const ChannelAttnParams& p) {
    // pooled {C} -> {1,C} -> bottleneck -> {1,C}
    const int c = pooled.dim(0);
    Var row = op::reshape(pooled, {1, c});
    Var hidden = op::relu(op::matmul(row, p.w1));
    return op::matmul(hidden, p.w2);
}

}  // namespace

Var channel_attention(const Var& x, const ChannelAttnParams& p) {
    MAPNET_REQUIRE(x.rank() == 3, "channel_attention: expect {H,W,C}");
    const int c = x.dim(2);
    MAPNET_REQUIRE(p.w1.rank() == 2 && p.w1.dim(0) == c && p.w2.rank() == 2 &&
                       p.w2.dim(1) == c && p.w1.dim(1) == p.w2.dim(0),
                   "channel_attention: MLP dimensions do not match input channels");
    Var frm = gate_mlp(op::global_max_pool_hw(x), p);
    Var fra = gate_mlp(op::global_avg_pool_hw(x), p);
    Var gate = op::sigmoid(op::reshape(op::add(frm, fra), {c}));
    return op::mul_channel_gate(x, gate);
}

Var spatial_attention(const Var& x, const SpatialAttnParams& p) {
    MAPNET_REQUIRE(x.rank() == 3, "spatial_attention: expect {H,W,C}");
    const int k = p.kernel.dim(0);
    if (k % 2 == 0) throw ConfigError("spatial_attention: kernel size must be odd");
    MAPNET_REQUIRE(p.kernel.rank() == 4 && p.kernel.dim(1) == k && p.kernel.dim(2) == 1 &&
                       p.kernel.dim(3) == 1,
                   "spatial_attention: kernel must be {k,k,1,1}");
    MAPNET_REQUIRE(k <= std::min(x.dim(0), x.dim(1)),
                   "spatial_attention: kernel larger than feature grid");
    Var cm = op::conv2d(op::channel_max_pool(x), p.kernel, p.bias, 1, 1, true);
    Var ca = op::conv2d(op::channel_avg_pool(x), p.kernel, p.bias, 1, 1, true);
    Var gate = op::sigmoid(op::add(cm, ca));
    return op::mul_pixel_gate(x, gate);
}

Var multi_head_attention(const Var& q, const Var& k, const Var& v, const MultiHeadParams& p) {
    MAPNET_REQUIRE(q.rank() == 2 && k.rank() == 2 && v.rank() == 2,
                   "multi_head_attention: token sequences must be 2-D");
    MAPNET_REQUIRE(k.dim(0) == v.dim(0), "multi_head_attention: key/value length mismatch");
    const int dm = q.dim(1);
    MAPNET_REQUIRE(k.dim(1) == dm && v.dim(1) == dm,
                   "multi_head_attention: widths must all equal d_m");
    const int heads = p.heads;
    MAPNET_REQUIRE(p.wq.dim(0) == dm && p.wk.dim(0) == dm && p.wv.dim(0) == dm,
                   "multi_head_attention: projection input width mismatch");
    MAPNET_REQUIRE(p.wq.dim(1) % heads == 0 && p.wv.dim(1) % heads == 0 &&
                       p.wq.dim(1) == p.wk.dim(1),
                   "multi_head_attention: head split mismatch");
    const int dk = p.wq.dim(1) / heads;
    const int dv = p.wv.dim(1) / heads;
    MAPNET_REQUIRE(p.wo.dim(0) == heads * dv && p.wo.dim(1) == dm,
                   "multi_head_attention: output projection shape mismatch");

    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Var qh = op::matmul(q, p.wq);
    Var kh = op::matmul(k, p.wk);
    Var vh = op::matmul(v, p.wv);

    Var concat;
    for (int h = 0; h < heads; ++h) {
        Var qi = op::slice_cols(qh, h * dk, (h + 1) * dk);
        Var ki = op::slice_cols(kh, h * dk, (h + 1) * dk);
        Var vi = op::slice_cols(vh, h * dv, (h + 1) * dv);
        Var weights = op::softmax_rows(op::mul_scalar(op::matmul(qi, op::transpose(ki)), scale));
        Var head = op::matmul(weights, vi);
        concat = h == 0 ? head : op::concat_cols(concat, head);
    }
    return op::matmul(concat, p.wo);
}

Tensor positional_encoding(int grid_h, int grid_w, int d) {
    if (d % 4 != 0) throw ConfigError("positional_encoding: d must be divisible by 4");
    MAPNET_REQUIRE(grid_h >= 1 && grid_w >= 1, "positional_encoding: empty grid");
    const int half = d / 2;
    const double temperature = 10000.0;
    Tensor pe({grid_h * grid_w, d});
    for (int r = 0; r < grid_h; ++r) {
        for (int c = 0; c < grid_w; ++c) {
            const int row = r * grid_w + c;
            for (int j = 0; j < half; ++j) {
                const int pair = j / 2;
                const double div = std::pow(temperature, 2.0 * pair / half);
                const double ry = r / div;
                const double rx = c / div;
                pe.at(row, j) = (j % 2 == 0) ? std::sin(ry) : std::cos(ry);
                pe.at(row, half + j) = (j % 2 == 0) ? std::sin(rx) : std::cos(rx);
            }
        }
    }
    return pe;
}

Var feed_forward(const Var& x, const FfnParams& p, double dropout_p, Rng* rng) {
    MAPNET_REQUIRE(x.rank() == 2 && x.dim(1) == p.w1.dim(0) && p.w1.dim(1) == p.w2.dim(0) &&
                       p.w2.dim(1) == x.dim(1),
                   "feed_forward: dimension mismatch");
    Var hidden = op::relu(op::linear(x, p.w1, p.b1));
    if (dropout_p > 0.0) {
        MAPNET_REQUIRE(rng != nullptr, "feed_forward: dropout requires an RNG");
        Tensor mask(hidden.val().shape());
        const double keep = 1.0 - dropout_p;
        for (int i = 0; i < mask.size(); ++i)
            mask[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
        hidden = op::dropout_mask(hidden, mask);
    }
    return op::add(x, op::linear(hidden, p.w2, p.b2));
}

}  // namespace mapnet
