#include "doctest.h"

#include "mapnet/alignment.hpp"
#include "mapnet/gradcheck.hpp"

#include "oracle_helpers.hpp"

using namespace mapnet;
namespace op = mapnet::ops;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

struct Bag {
    std::vector<Var> leaves;
    std::vector<std::string> names;
    Var add(const std::string& n, Tensor t, bool train) {
        Var v = Var::leaf(std::move(t), train);
        leaves.push_back(v);
        names.push_back(n);
        return v;
    }
};

AlignmentParams make_align(Bag& bag, int d, int heads, int r, int k, Rng& rng, bool train) {
    AlignmentParams a;
    auto proj = [&](const std::string& p) {
        return QkvProj{bag.add(p + ".wq", random_tensor({d, d}, rng, 0.4), train),
                       bag.add(p + ".bq", random_tensor({d}, rng, 0.2), train),
                       bag.add(p + ".wk", random_tensor({d, d}, rng, 0.4), train),
                       bag.add(p + ".bk", random_tensor({d}, rng, 0.2), train),
                       bag.add(p + ".wv", random_tensor({d, d}, rng, 0.4), train),
                       bag.add(p + ".bv", random_tensor({d}, rng, 0.2), train)};
    };
    auto mha = [&](const std::string& p) {
        return MultiHeadParams{bag.add(p + ".wq", random_tensor({d, d}, rng, 0.4), train),
                               bag.add(p + ".wk", random_tensor({d, d}, rng, 0.4), train),
                               bag.add(p + ".wv", random_tensor({d, d}, rng, 0.4), train),
                               bag.add(p + ".wo", random_tensor({d, d}, rng, 0.4), train), heads};
    };
    a.proj_c = proj("c.proj");
    a.proj_p = proj("p.proj");
    a.cross_c = mha("c.mha");
    a.cross_p = mha("p.mha");
    a.gate_c = ChannelAttnParams{bag.add("gc.w1", random_tensor({d, d / r}, rng), train),
                                 bag.add("gc.w2", random_tensor({d / r, d}, rng), train), r};
    a.gate_p = SpatialAttnParams{bag.add("gp.k", random_tensor({k, k, 1, 1}, rng), train),
                                 bag.add("gp.b", random_tensor({1}, rng), train), k};
    return a;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (int i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("dual alignment: zero weights halve both streams") {
    Bag bag;
    Rng rng(81);
    AlignmentParams a = make_align(bag, 8, 2, 4, 1, rng, false);
    for (auto& leaf : bag.leaves) leaf.mutable_val().fill(0.0);
    Tokens s_c{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens s_p{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    const Tensor pe = positional_encoding(2, 2, 8);
    auto [c_out, p_out] = dual_align(s_c, s_p, a, pe);
    for (int i = 0; i < c_out.v.val().size(); ++i)
        CHECK(c_out.v.val()[i] == doctest::Approx(0.5 * s_c.v.val()[i]).epsilon(1e-12));
    for (int i = 0; i < p_out.v.val().size(); ++i)
        CHECK(p_out.v.val()[i] == doctest::Approx(0.5 * s_p.v.val()[i]).epsilon(1e-12));
}

TEST_CASE("dual alignment preserves shapes across grid sizes") {
    for (int g : {2, 4, 8}) {
        Bag bag;
        Rng rng(82);
        AlignmentParams a = make_align(bag, 8, 2, 4, 1, rng, false);
        Tokens s_c{Var::leaf(random_tensor({g * g, 8}, rng)), g, g};
        Tokens s_p{Var::leaf(random_tensor({g * g, 8}, rng)), g, g};
        const Tensor pe = positional_encoding(g, g, 8);
        auto [c_out, p_out] = dual_align(s_c, s_p, a, pe);
        CHECK(c_out.v.shape() == std::vector<int>{g * g, 8});
        CHECK(p_out.v.shape() == std::vector<int>{g * g, 8});
    }
}

TEST_CASE("dual alignment matches the chained oracle") {
    Bag bag;
    Rng rng(83);
    AlignmentParams a = make_align(bag, 8, 1, 4, 1, rng, false);
    Tokens s_c{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens s_p{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    const Tensor pe = positional_encoding(2, 2, 8);
    auto [c_out, p_out] = dual_align(s_c, s_p, a, pe);

    // Oracle: concat -> cross-attention -> channel gate; then the updated
    // concat -> cross-attention -> spatial gate.
    Tensor pe_m = oracle::concat_rows(pe, pe);
    Tensor s_m = oracle::concat_rows(s_c.v.val(), s_p.v.val());
    Tensor q_c = oracle::add(oracle::linear(s_c.v.val(), a.proj_c.wq.val(), a.proj_c.bq.val()), pe);
    Tensor k_m = oracle::add(oracle::linear(s_m, a.proj_c.wk.val(), a.proj_c.bk.val()), pe_m);
    Tensor v_m = oracle::linear(s_m, a.proj_c.wv.val(), a.proj_c.bv.val());
    Tensor u_c = oracle::add(s_c.v.val(),
                             oracle::multi_head_attention(q_c, k_m, v_m, a.cross_c.wq.val(),
                                                          a.cross_c.wk.val(), a.cross_c.wv.val(),
                                                          a.cross_c.wo.val(), 1));
    Tensor c_ref = oracle::reshape(
        oracle::channel_attention(oracle::reshape(u_c, {2, 2, 8}), a.gate_c.w1.val(),
                                  a.gate_c.w2.val()),
        {4, 8});
    CHECK(max_abs_diff(c_out.v.val(), c_ref) < 1e-8);

    Tensor s_m2 = oracle::concat_rows(c_ref, s_p.v.val());
    Tensor q_p = oracle::add(oracle::linear(s_p.v.val(), a.proj_p.wq.val(), a.proj_p.bq.val()), pe);
    Tensor k_m2 = oracle::add(oracle::linear(s_m2, a.proj_p.wk.val(), a.proj_p.bk.val()), pe_m);
    Tensor v_m2 = oracle::linear(s_m2, a.proj_p.wv.val(), a.proj_p.bv.val());
    Tensor u_p = oracle::add(s_p.v.val(),
                             oracle::multi_head_attention(q_p, k_m2, v_m2, a.cross_p.wq.val(),
                                                          a.cross_p.wk.val(), a.cross_p.wv.val(),
                                                          a.cross_p.wo.val(), 1));
    Tensor p_ref = oracle::reshape(
        oracle::spatial_attention(oracle::reshape(u_p, {2, 2, 8}),
                                  oracle::reshape(a.gate_p.kernel.val(), {1, 1}),
                                  a.gate_p.bias.val()[0]),
        {4, 8});
    CHECK(max_abs_diff(p_out.v.val(), p_ref) < 1e-8);
}

TEST_CASE("stage 2 consumes the updated classification tokens") {
    Bag bag;
    Rng rng(84);
    AlignmentParams a = make_align(bag, 8, 2, 4, 1, rng, false);
    Tokens s_c{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens s_p{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    const Tensor pe = positional_encoding(2, 2, 8);
    auto [c0, p0] = dual_align(s_c, s_p, a, pe);

    // Perturbing the classification gate must reach the regression output.
    a.gate_c.w2.mutable_val()[3] += 0.5;
    auto [c1, p1] = dual_align(s_c, s_p, a, pe);
    CHECK(max_abs_diff(p0.v.val(), p1.v.val()) > 1e-9);
}

TEST_CASE("both outputs depend on both inputs") {
    Bag bag;
    Rng rng(85);
    AlignmentParams a = make_align(bag, 8, 2, 4, 1, rng, false);
    Tokens s_c{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens s_p{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens s_p2{Var::leaf(random_tensor({4, 8}, rng, 2.0)), 2, 2};
    Tokens s_c2{Var::leaf(random_tensor({4, 8}, rng, 2.0)), 2, 2};
    const Tensor pe = positional_encoding(2, 2, 8);

    auto [c0, p0] = dual_align(s_c, s_p, a, pe);
    auto [c1, p1] = dual_align(s_c, s_p2, a, pe);
    CHECK(max_abs_diff(c0.v.val(), c1.v.val()) > 1e-9);  // s_p reaches s_c'

    auto [c2, p2] = dual_align(s_c2, s_p, a, pe);
    CHECK(max_abs_diff(p0.v.val(), p2.v.val()) > 1e-9);  // s_c reaches s_p'
}

TEST_CASE("dual alignment rejects mismatched token counts") {
    Bag bag;
    Rng rng(86);
    AlignmentParams a = make_align(bag, 8, 2, 4, 1, rng, false);
    Tokens s_c{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens s_p{Var::leaf(random_tensor({9, 8}, rng)), 3, 3};
    const Tensor pe = positional_encoding(2, 2, 8);
    CHECK_THROWS_AS(dual_align(s_c, s_p, a, pe), ContractViolation);
}

TEST_CASE("dual alignment gradient check") {
    Bag bag;
    Rng rng(87);
    AlignmentParams a = make_align(bag, 8, 2, 4, 1, rng, true);
    Var c_leaf = bag.add("s_c", random_tensor({4, 8}, rng), true);
    Var p_leaf = bag.add("s_p", random_tensor({4, 8}, rng), true);
    const Tensor pe = positional_encoding(2, 2, 8);
    auto rep = check_gradients(bag.leaves, bag.names, [&] {
        auto [c, p] = dual_align({c_leaf, 2, 2}, {p_leaf, 2, 2}, a, pe);
        return op::add(op::sum_all(op::mul(c.v, c.v)), op::sum_all(op::mul(p.v, p.v)));
    }, 1e-4, 6);
    INFO("worst leaf ", rep.worst_leaf);
    CHECK(rep.max_rel_err < 1e-3);
}
