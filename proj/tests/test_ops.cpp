// Gradient and value checks for the autodiff primitives. Every op that can
// carry gradients is pushed through central finite differences here, so the
// composite blocks built on top of them inherit verified backward rules.

#include "doctest.h"

#include "mapnet/gradcheck.hpp"
#include "mapnet/ops.hpp"
#include "mapnet/rng.hpp"

using namespace mapnet;
namespace op = mapnet::ops;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

double fd_check(std::vector<Var>& leaves, const std::function<Var()>& f) {
    std::vector<std::string> names;
    for (size_t i = 0; i < leaves.size(); ++i) names.push_back("leaf" + std::to_string(i));
    return check_gradients(leaves, names, f, 1e-4, 0).max_rel_err;
}

}  // namespace

TEST_CASE("arithmetic op gradients") {
    Rng rng(1);
    Var a = Var::leaf(random_tensor({3, 4}, rng), true);
    Var b = Var::leaf(random_tensor({3, 4}, rng), true);
    Var v = Var::leaf(random_tensor({4}, rng), true);
    std::vector<Var> leaves = {a, b, v};

    CHECK(fd_check(leaves, [&] {
              Var y = op::add(op::mul(a, b), op::sub(a, b));
              y = op::add_rowvec(y, v);
              y = op::add_scalar(op::mul_scalar(y, 1.7), 0.3);
              return op::sum_all(op::mul(y, y));
          }) < 1e-6);

    CHECK(fd_check(leaves, [&] {
              Var y = op::div(a, op::add_scalar(op::mul(b, b), 1.0));
              return op::mean_all(op::mul(y, y));
          }) < 1e-6);
}

TEST_CASE("min/max and activation gradients") {
    Rng rng(2);
    Var a = Var::leaf(random_tensor({5, 3}, rng), true);
    Var b = Var::leaf(random_tensor({5, 3}, rng), true);
    std::vector<Var> leaves = {a, b};

    CHECK(fd_check(leaves, [&] {
              Var y = op::vmax(a, b);
              y = op::add(y, op::vmin(a, b));
              y = op::add(y, op::vmax_scalar(a, 0.25));
              y = op::add(y, op::vmin_scalar(b, -0.25));
              return op::sum_all(op::mul(y, y));
          }) < 1e-6);

    CHECK(fd_check(leaves, [&] {
              Var y = op::sigmoid(a);
              y = op::add(y, op::relu(b));
              y = op::add(y, op::abs_v(a));
              return op::sum_all(y);
          }) < 1e-6);

    Var c = Var::leaf(Tensor({2, 2}, {0.5, 1.5, 2.5, 0.25}), true);
    std::vector<Var> lc = {c};
    CHECK(fd_check(lc, [&] { return op::sum_all(op::log_v(c)); }) < 1e-6);
}

TEST_CASE("softmax rows sum to one and gradients match") {
    Rng rng(3);
    Var a = Var::leaf(random_tensor({4, 6}, rng, 2.0), true);
    Var y = op::softmax_rows(a);
    for (int i = 0; i < 4; ++i) {
        double s = 0.0;
        for (int j = 0; j < 6; ++j) s += y.val().at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    Var w = Var::leaf(random_tensor({4, 6}, rng), true);
    std::vector<Var> leaves = {a, w};
    CHECK(fd_check(leaves, [&] {
              return op::sum_all(op::mul(op::softmax_rows(a), op::sigmoid(w)));
          }) < 1e-6);
}

TEST_CASE("matmul / transpose / linear gradients") {
    Rng rng(4);
    Var a = Var::leaf(random_tensor({3, 5}, rng), true);
    Var b = Var::leaf(random_tensor({5, 2}, rng), true);
    Var bias = Var::leaf(random_tensor({2}, rng), true);
    std::vector<Var> leaves = {a, b, bias};
    CHECK(fd_check(leaves, [&] {
              Var y = op::linear(a, b, bias);
              y = op::matmul(op::transpose(y), y);
              return op::sum_all(y);
          }) < 1e-6);
}

TEST_CASE("selection and concatenation gradients") {
    Rng rng(5);
    Var a = Var::leaf(random_tensor({6, 3}, rng), true);
    Var b = Var::leaf(random_tensor({2, 3}, rng), true);
    std::vector<Var> leaves = {a, b};
    CHECK(fd_check(leaves, [&] {
              Var y = op::concat_rows(a, b);
              y = op::gather_rows(y, {0, 3, 7, 3});
              Var z = op::concat_cols(y, y);
              z = op::slice_cols(z, 1, 5);
              z = op::slice_rows(z, 0, 3);
              Var picked = op::select_per_row(z, {0, 3, 2});
              return op::sum_all(op::mul(picked, picked));
          }) < 1e-6);
}

TEST_CASE("reshape and dot_const gradients") {
    Rng rng(6);
    Var a = Var::leaf(random_tensor({2, 6}, rng), true);
    Tensor w = random_tensor({3, 4}, rng);
    std::vector<Var> leaves = {a};
    CHECK(fd_check(leaves, [&] {
              return op::dot_const(op::reshape(a, {3, 4}), w);
          }) < 1e-6);
}

TEST_CASE("conv2d value against naive loop") {
    Rng rng(7);
    const int H = 5, W = 4, C = 3, K = 3, CO = 2;
    Var x = Var::leaf(random_tensor({H, W, C}, rng), false);
    Var w = Var::leaf(random_tensor({K, K, C, CO}, rng), false);
    Var b = Var::leaf(random_tensor({CO}, rng), false);
    Var y = op::conv2d(x, w, b, 1, 1, true);
    REQUIRE(y.shape() == std::vector<int>{H, W, CO});
    for (int oy = 0; oy < H; ++oy) {
        for (int ox = 0; ox < W; ++ox) {
            for (int co = 0; co < CO; ++co) {
                double acc = b.val()[co];
                for (int ky = 0; ky < K; ++ky) {
                    for (int kx = 0; kx < K; ++kx) {
                        const int iy = oy - 1 + ky, ix = ox - 1 + kx;
                        if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                        for (int c = 0; c < C; ++c)
                            acc += x.val().at(iy, ix, c) * w.val()[((ky * K + kx) * C + c) * CO + co];
                    }
                }
                CHECK(y.val().at(oy, ox, co) == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("conv2d gradients (stride, dilation)") {
    Rng rng(8);
    Var x = Var::leaf(random_tensor({7, 7, 2}, rng), true);
    Var w = Var::leaf(random_tensor({3, 3, 2, 3}, rng), true);
    Var b = Var::leaf(random_tensor({3}, rng), true);
    std::vector<Var> leaves = {x, w, b};

    CHECK(fd_check(leaves, [&] {
              Var y = op::conv2d(x, w, b, 1, 1, true);
              return op::sum_all(op::mul(y, y));
          }) < 1e-6);
    CHECK(fd_check(leaves, [&] {
              Var y = op::conv2d(x, w, b, 2, 1, true);
              return op::sum_all(op::mul(y, y));
          }) < 1e-6);
    CHECK(fd_check(leaves, [&] {
              Var y = op::conv2d(x, w, b, 1, 2, true);
              return op::sum_all(op::mul(y, y));
          }) < 1e-6);
}

TEST_CASE("pooling and gate gradients") {
    Rng rng(9);
    Var x = Var::leaf(random_tensor({4, 4, 3}, rng), true);
    Var gc = Var::leaf(random_tensor({3}, rng), true);
    Var gp = Var::leaf(random_tensor({4, 4, 1}, rng), true);
    std::vector<Var> leaves = {x, gc, gp};
    CHECK(fd_check(leaves, [&] {
              Var y = op::mul_channel_gate(x, op::sigmoid(gc));
              y = op::mul_pixel_gate(y, op::sigmoid(gp));
              Var pooled = op::concat_cols(op::reshape(op::channel_avg_pool(y), {16, 1}),
                                           op::reshape(op::channel_max_pool(y), {16, 1}));
              Var g2 = op::global_avg_pool_hw(y);
              Var g3 = op::global_max_pool_hw(y);
              return op::add(op::sum_all(op::mul(pooled, pooled)),
                             op::sum_all(op::mul(g2, g3)));
          }) < 1e-6);

    CHECK(fd_check(leaves, [&] {
              Var y = op::maxpool2d(x, 3, 2, 1);
              return op::sum_all(op::mul(y, y));
          }) < 1e-6);
}

TEST_CASE("layer norm matches finite differences") {
    Rng rng(10);
    Var x = Var::leaf(random_tensor({3, 8}, rng, 2.0), true);
    Var gamma = Var::leaf(random_tensor({8}, rng), true);
    Var beta = Var::leaf(random_tensor({8}, rng), true);
    std::vector<Var> leaves = {x, gamma, beta};
    CHECK(fd_check(leaves, [&] {
              Var y = op::layer_norm_rows(x, gamma, beta);
              return op::sum_all(op::mul(y, y));
          }) < 1e-5);
}

TEST_CASE("dropout mask and detach") {
    Rng rng(11);
    Var x = Var::leaf(random_tensor({3, 3}, rng), true);
    Tensor mask({3, 3});
    for (int i = 0; i < 9; ++i) mask[i] = (i % 2 == 0) ? 2.0 : 0.0;
    std::vector<Var> leaves = {x};
    CHECK(fd_check(leaves, [&] {
              return op::sum_all(op::mul(op::dropout_mask(x, mask), x));
          }) < 1e-6);

    Var d = op::detach(x);
    CHECK_FALSE(d.requires_grad());
    CHECK(d.val().same_shape(x.val()));
}

TEST_CASE("no-grad graphs skip backward bookkeeping") {
    Rng rng(12);
    Var x = Var::leaf(random_tensor({4, 4}, rng), false);
    Var y = op::softmax_rows(op::matmul(x, op::transpose(x)));
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
}
