#include "doctest.h"

#include "mapnet/gradcheck.hpp"
#include "mapnet/matcher.hpp"

#include "oracle_helpers.hpp"

using namespace mapnet;
namespace op = mapnet::ops;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

struct ParamBag {
    std::vector<Var> leaves;
    std::vector<std::string> names;

    Var add(const std::string& name, Tensor t, bool trainable) {
        Var v = Var::leaf(std::move(t), trainable);
        leaves.push_back(v);
        names.push_back(name);
        return v;
    }
};

QkvProj make_proj(ParamBag& bag, const std::string& p, int d, Rng& rng, bool train) {
    return QkvProj{bag.add(p + ".wq", random_tensor({d, d}, rng, 0.4), train),
                   bag.add(p + ".bq", random_tensor({d}, rng, 0.2), train),
                   bag.add(p + ".wk", random_tensor({d, d}, rng, 0.4), train),
                   bag.add(p + ".bk", random_tensor({d}, rng, 0.2), train),
                   bag.add(p + ".wv", random_tensor({d, d}, rng, 0.4), train),
                   bag.add(p + ".bv", random_tensor({d}, rng, 0.2), train)};
}

MultiHeadParams make_mha(ParamBag& bag, const std::string& p, int d, int heads, Rng& rng,
                         bool train) {
    return MultiHeadParams{bag.add(p + ".wq", random_tensor({d, d}, rng, 0.4), train),
                           bag.add(p + ".wk", random_tensor({d, d}, rng, 0.4), train),
                           bag.add(p + ".wv", random_tensor({d, d}, rng, 0.4), train),
                           bag.add(p + ".wo", random_tensor({d, d}, rng, 0.4), train), heads};
}

GateParams make_gate(ParamBag& bag, const std::string& p, GateKind kind, int d, int r, int k,
                     Rng& rng, bool train) {
    GateParams g;
    g.kind = kind;
    if (kind == GateKind::channel) {
        g.channel = ChannelAttnParams{bag.add(p + ".w1", random_tensor({d, d / r}, rng), train),
                                      bag.add(p + ".w2", random_tensor({d / r, d}, rng), train),
                                      r};
    } else if (kind == GateKind::spatial) {
        g.spatial = SpatialAttnParams{bag.add(p + ".k", random_tensor({k, k, 1, 1}, rng), train),
                                      bag.add(p + ".b", random_tensor({1}, rng), train), k};
    }
    return g;
}

FfnParams make_ffn(ParamBag& bag, const std::string& p, int d, int dff, Rng& rng, bool train) {
    return FfnParams{bag.add(p + ".w1", random_tensor({d, dff}, rng, 0.4), train),
                     bag.add(p + ".b1", random_tensor({dff}, rng, 0.2), train),
                     bag.add(p + ".w2", random_tensor({dff, d}, rng, 0.4), train),
                     bag.add(p + ".b2", random_tensor({d}, rng, 0.2), train)};
}

LayerNormParams make_ln(ParamBag& bag, const std::string& p, int d, Rng& rng, bool train) {
    Tensor g = random_tensor({d}, rng, 0.1);
    for (int i = 0; i < d; ++i) g[i] += 1.0;
    return LayerNormParams{bag.add(p + ".g", g, train),
                           bag.add(p + ".b", random_tensor({d}, rng, 0.1), train)};
}

MatcherParams make_matcher(ParamBag& bag, const std::string& p, GateKind kind, int d, int heads,
                           int r, int k, int dff, bool with_ln, Rng& rng, bool train) {
    MatcherParams m;
    m.proj_self_z = make_proj(bag, p + ".pz", d, rng, train);
    m.proj_self_x = make_proj(bag, p + ".px", d, rng, train);
    m.proj_cross = make_proj(bag, p + ".pc", d, rng, train);
    m.self_z = make_mha(bag, p + ".az", d, heads, rng, train);
    m.self_x = make_mha(bag, p + ".ax", d, heads, rng, train);
    m.cross = make_mha(bag, p + ".ac", d, heads, rng, train);
    m.gate_z = make_gate(bag, p + ".gz", kind, d, r, k, rng, train);
    m.gate_x = make_gate(bag, p + ".gx", kind, d, r, k, rng, train);
    m.gate_cross = make_gate(bag, p + ".gc", kind, d, r, k, rng, train);
    m.ffn_z = make_ffn(bag, p + ".fz", d, dff, rng, train);
    m.ffn_x = make_ffn(bag, p + ".fx", d, dff, rng, train);
    if (with_ln) {
        m.ln_self_z = make_ln(bag, p + ".l1z", d, rng, train);
        m.ln_self_x = make_ln(bag, p + ".l1x", d, rng, train);
        m.ln_cross = make_ln(bag, p + ".l2x", d, rng, train);
        m.ln_ffn_z = make_ln(bag, p + ".l3z", d, rng, train);
        m.ln_ffn_x = make_ln(bag, p + ".l3x", d, rng, train);
    }
    return m;
}

MatcherParams zero_matcher(ParamBag& bag, GateKind kind, int d, int heads, int r, int k) {
    Rng rng(0);
    MatcherParams m = make_matcher(bag, "z", kind, d, heads, r, k, d, false, rng, false);
    for (auto& leaf : bag.leaves) leaf.mutable_val().fill(0.0);
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (int i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// Scalar-loop reference for one matcher layer (literal mode), chaining the
// per-equation oracles: self-attention -> gate -> cross-attention -> gate ->
// feed-forward.
struct OracleMatcher {
    const MatcherParams& p;
    GateKind kind;
    int gh_z, gw_z, gh_x, gw_x;

    Tensor gate(const Tensor& tokens, const GateParams& g, int gh, int gw) const {
        if (kind == GateKind::none) return tokens;
        const int d = tokens.dim(1);
        Tensor grid = oracle::reshape(tokens, {gh, gw, d});
        Tensor out = kind == GateKind::channel
                         ? oracle::channel_attention(grid, g.channel.w1.val(), g.channel.w2.val())
                         : oracle::spatial_attention(
                               grid,
                               oracle::reshape(g.spatial.kernel.val(),
                                               {g.spatial.kernel.val().dim(0),
                                                g.spatial.kernel.val().dim(1)}),
                               g.spatial.bias.val()[0]);
        return oracle::reshape(out, {gh * gw, d});
    }

    Tensor self_stream(const Tensor& v, const QkvProj& proj, const MultiHeadParams& mha,
                       const GateParams& g, const Tensor& pe, int gh, int gw) const {
        Tensor q = oracle::add(oracle::linear(v, proj.wq.val(), proj.bq.val()), pe);
        Tensor k = oracle::add(oracle::linear(v, proj.wk.val(), proj.bk.val()), pe);
        Tensor vv = oracle::linear(v, proj.wv.val(), proj.bv.val());
        Tensor attn = oracle::multi_head_attention(q, k, vv, mha.wq.val(), mha.wk.val(),
                                                   mha.wv.val(), mha.wo.val(), mha.heads);
        return gate(oracle::add(v, attn), g, gh, gw);
    }

    std::pair<Tensor, Tensor> layer(const Tensor& vz, const Tensor& vx, const Tensor& pe_z,
                                    const Tensor& pe_x) const {
        Tensor z1 = self_stream(vz, p.proj_self_z, p.self_z, p.gate_z, pe_z, gh_z, gw_z);
        Tensor x1 = self_stream(vx, p.proj_self_x, p.self_x, p.gate_x, pe_x, gh_x, gw_x);
        Tensor q = oracle::add(oracle::linear(x1, p.proj_cross.wq.val(), p.proj_cross.bq.val()),
                               pe_x);
        Tensor k = oracle::add(oracle::linear(z1, p.proj_cross.wk.val(), p.proj_cross.bk.val()),
                               pe_z);
        Tensor vv = oracle::linear(z1, p.proj_cross.wv.val(), p.proj_cross.bv.val());
        Tensor attn = oracle::multi_head_attention(q, k, vv, p.cross.wq.val(), p.cross.wk.val(),
                                                   p.cross.wv.val(), p.cross.wo.val(),
                                                   p.cross.heads);
        Tensor x2 = gate(oracle::add(x1, attn), p.gate_cross, gh_x, gw_x);
        Tensor z_out = oracle::feed_forward(z1, p.ffn_z.w1.val(), p.ffn_z.b1.val(),
                                            p.ffn_z.w2.val(), p.ffn_z.b2.val());
        Tensor x_out = oracle::feed_forward(x2, p.ffn_x.w1.val(), p.ffn_x.b1.val(),
                                            p.ffn_x.w2.val(), p.ffn_x.b2.val());
        return {z_out, x_out};
    }
};

}  // namespace

TEST_CASE("matcher layer: zero weights with no gate is a pure residual path") {
    ParamBag bag;
    MatcherParams m = zero_matcher(bag, GateKind::none, 8, 2, 4, 3);
    Rng rng(61);
    Tokens vz{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens vx{Var::leaf(random_tensor({9, 8}, rng)), 3, 3};
    const Tensor pe_z = positional_encoding(2, 2, 8);
    const Tensor pe_x = positional_encoding(3, 3, 8);
    auto [z, x] = matcher_layer(vz, vx, m, NormMode::literal, pe_z, pe_x);
    CHECK(max_abs_diff(z.v.val(), vz.v.val()) == 0.0);
    CHECK(max_abs_diff(x.v.val(), vx.v.val()) == 0.0);
}

TEST_CASE("matcher layer: zero-weight channel gates halve each gated stage") {
    ParamBag bag;
    MatcherParams m = zero_matcher(bag, GateKind::channel, 8, 2, 4, 3);
    Rng rng(62);
    Tokens vz{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens vx{Var::leaf(random_tensor({9, 8}, rng)), 3, 3};
    const Tensor pe_z = positional_encoding(2, 2, 8);
    const Tensor pe_x = positional_encoding(3, 3, 8);
    auto [z, x] = matcher_layer(vz, vx, m, NormMode::literal, pe_z, pe_x);
    // Template stream passes one 0.5 gate; search stream passes two.
    for (int i = 0; i < z.v.val().size(); ++i)
        CHECK(z.v.val()[i] == doctest::Approx(0.5 * vz.v.val()[i]).epsilon(1e-12));
    for (int i = 0; i < x.v.val().size(); ++i)
        CHECK(x.v.val()[i] == doctest::Approx(0.25 * vx.v.val()[i]).epsilon(1e-12));
}

TEST_CASE("matcher layer matches the chained per-equation oracle") {
    for (GateKind kind : {GateKind::channel, GateKind::spatial, GateKind::none}) {
        ParamBag bag;
        Rng rng(63);
        // Spatial gate uses k=1 so it fits the 2x2 template grid.
        MatcherParams m = make_matcher(bag, "m", kind, 8, 1, 4, 1, 8, false, rng, false);
        Tokens vz{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
        Tokens vx{Var::leaf(random_tensor({9, 8}, rng)), 3, 3};
        const Tensor pe_z = positional_encoding(2, 2, 8);
        const Tensor pe_x = positional_encoding(3, 3, 8);
        auto [z, x] = matcher_layer(vz, vx, m, NormMode::literal, pe_z, pe_x);
        OracleMatcher om{m, kind, 2, 2, 3, 3};
        auto [zr, xr] = om.layer(vz.v.val(), vx.v.val(), pe_z, pe_x);
        CHECK(max_abs_diff(z.v.val(), zr) < 1e-8);
        CHECK(max_abs_diff(x.v.val(), xr) < 1e-8);
    }
}

TEST_CASE("stack: depth 1 equals a single layer and zero weights cascade gates") {
    ParamBag bag;
    Rng rng(64);
    MatcherParams m = make_matcher(bag, "m", GateKind::channel, 8, 2, 4, 3, 8, false, rng, false);
    Tokens vz{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens vx{Var::leaf(random_tensor({9, 8}, rng)), 3, 3};
    const Tensor pe_z = positional_encoding(2, 2, 8);
    const Tensor pe_x = positional_encoding(3, 3, 8);

    MatcherStackConfig cfg{1, GateKind::channel, NormMode::literal};
    Tokens stack_out = run_matcher_stack(vz, vx, cfg, {m}, pe_z, pe_x);
    auto [z1, x1] = matcher_layer(vz, vx, m, NormMode::literal, pe_z, pe_x);
    CHECK(max_abs_diff(stack_out.v.val(), x1.v.val()) == 0.0);

    // Depth 3, all-zero weights: each layer scales the search stream by 1/4.
    ParamBag zbag;
    MatcherParams zm = zero_matcher(zbag, GateKind::channel, 8, 2, 4, 3);
    MatcherStackConfig zcfg{3, GateKind::channel, NormMode::literal};
    Tokens cascaded = run_matcher_stack(vz, vx, zcfg, {zm, zm, zm}, pe_z, pe_x);
    for (int i = 0; i < cascaded.v.val().size(); ++i)
        CHECK(cascaded.v.val()[i] ==
              doctest::Approx(vx.v.val()[i] / 64.0).epsilon(1e-12));
}

TEST_CASE("stack rejects depth/parameter mismatches and non-square gating") {
    ParamBag bag;
    Rng rng(65);
    MatcherParams m = make_matcher(bag, "m", GateKind::channel, 8, 2, 4, 3, 8, false, rng, false);
    Tokens vz{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens vx{Var::leaf(random_tensor({9, 8}, rng)), 3, 3};
    const Tensor pe_z = positional_encoding(2, 2, 8);
    const Tensor pe_x = positional_encoding(3, 3, 8);
    MatcherStackConfig cfg{2, GateKind::channel, NormMode::literal};
    CHECK_THROWS_AS(run_matcher_stack(vz, vx, cfg, {m}, pe_z, pe_x), ConfigError);

    Tokens bad{Var::leaf(random_tensor({6, 8}, rng)), 2, 3};  // 2x3 grid: not square
    const Tensor pe_bad = positional_encoding(2, 3, 8);
    CHECK_THROWS_AS(matcher_layer(vz, bad, m, NormMode::literal, pe_z, pe_bad),
                    ContractViolation);
}

TEST_CASE("template stream never depends on the search stream") {
    ParamBag bag;
    Rng rng(66);
    MatcherParams m = make_matcher(bag, "m", GateKind::channel, 8, 2, 4, 3, 8, false, rng, false);
    Tokens vz{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens vx1{Var::leaf(random_tensor({9, 8}, rng)), 3, 3};
    Tokens vx2{Var::leaf(random_tensor({9, 8}, rng, 3.0)), 3, 3};
    const Tensor pe_z = positional_encoding(2, 2, 8);
    const Tensor pe_x = positional_encoding(3, 3, 8);
    auto [za, xa] = matcher_layer(vz, vx1, m, NormMode::literal, pe_z, pe_x);
    auto [zb, xb] = matcher_layer(vz, vx2, m, NormMode::literal, pe_z, pe_x);
    for (int i = 0; i < za.v.val().size(); ++i) CHECK(za.v.val()[i] == zb.v.val()[i]);
    CHECK(max_abs_diff(xa.v.val(), xb.v.val()) > 0.0);
}

TEST_CASE("channel-gated and spatial-gated stacks diverge with shared attention weights") {
    Rng rng(67);
    // Same attention/FFN weights, different gate kinds (random gate params).
    ParamBag bag_c, bag_s;
    Rng rng_c(68), rng_s(68);
    MatcherParams mc =
        make_matcher(bag_c, "c", GateKind::channel, 8, 2, 4, 3, 8, false, rng_c, false);
    MatcherParams ms =
        make_matcher(bag_s, "s", GateKind::spatial, 8, 2, 4, 3, 8, false, rng_s, false);
    Tokens vz{Var::leaf(random_tensor({9, 8}, rng)), 3, 3};
    Tokens vx{Var::leaf(random_tensor({16, 8}, rng)), 4, 4};
    const Tensor pe_z = positional_encoding(3, 3, 8);
    const Tensor pe_x = positional_encoding(4, 4, 8);
    MatcherStackConfig cc{1, GateKind::channel, NormMode::literal};
    MatcherStackConfig sc{1, GateKind::spatial, NormMode::literal};
    Tokens oc = run_matcher_stack(vz, vx, cc, {mc}, pe_z, pe_x);
    Tokens os = run_matcher_stack(vz, vx, sc, {ms}, pe_z, pe_x);
    CHECK(max_abs_diff(oc.v.val(), os.v.val()) > 1e-6);
}

TEST_CASE("stack output is deterministic") {
    ParamBag bag;
    Rng rng(69);
    MatcherParams m = make_matcher(bag, "m", GateKind::spatial, 8, 2, 4, 1, 8, true, rng, false);
    Tokens vz{Var::leaf(random_tensor({4, 8}, rng)), 2, 2};
    Tokens vx{Var::leaf(random_tensor({9, 8}, rng)), 3, 3};
    const Tensor pe_z = positional_encoding(2, 2, 8);
    const Tensor pe_x = positional_encoding(3, 3, 8);
    MatcherStackConfig cfg{1, GateKind::spatial, NormMode::post_norm};
    Tokens a = run_matcher_stack(vz, vx, cfg, {m}, pe_z, pe_x);
    Tokens b = run_matcher_stack(vz, vx, cfg, {m}, pe_z, pe_x);
    for (int i = 0; i < a.v.val().size(); ++i) CHECK(a.v.val()[i] == b.v.val()[i]);
}

TEST_CASE("gradients reach every matcher parameter") {
    ParamBag bag;
    Rng rng(70);
    MatcherParams m = make_matcher(bag, "m", GateKind::channel, 8, 2, 4, 3, 8, false, rng, true);
    Var vz_leaf = Var::leaf(random_tensor({4, 8}, rng), true);
    Var vx_leaf = Var::leaf(random_tensor({9, 8}, rng), true);
    bag.add("v_z", vz_leaf.val(), false);  // bookkeeping only
    const Tensor pe_z = positional_encoding(2, 2, 8);
    const Tensor pe_x = positional_encoding(3, 3, 8);

    auto [z, x] = matcher_layer({vz_leaf, 2, 2}, {vx_leaf, 3, 3}, m, NormMode::literal, pe_z,
                                pe_x);
    Var loss = op::add(op::sum_all(op::mul(z.v, z.v)), op::sum_all(op::mul(x.v, x.v)));
    backward(loss);
    for (size_t i = 0; i + 1 < bag.leaves.size(); ++i) {
        const Var& leaf = bag.leaves[i];
        INFO("parameter ", bag.names[i]);
        REQUIRE_FALSE(leaf.grad().empty());
        CHECK(leaf.grad().max_abs() > 0.0);
    }
    CHECK(vz_leaf.grad().max_abs() > 0.0);
    CHECK(vx_leaf.grad().max_abs() > 0.0);
}

TEST_CASE("matcher layer gradient check (literal and post-norm)") {
    for (NormMode norm : {NormMode::literal, NormMode::post_norm}) {
        ParamBag bag;
        Rng rng(71);
        MatcherParams m = make_matcher(bag, "m", GateKind::channel, 8, 2, 4, 3, 8,
                                       norm == NormMode::post_norm, rng, true);
        Var vz = bag.add("v_z", random_tensor({4, 8}, rng), true);
        Var vx = bag.add("v_x", random_tensor({9, 8}, rng), true);
        const Tensor pe_z = positional_encoding(2, 2, 8);
        const Tensor pe_x = positional_encoding(3, 3, 8);
        auto rep = check_gradients(bag.leaves, bag.names, [&] {
            auto [z, x] = matcher_layer({vz, 2, 2}, {vx, 3, 3}, m, norm, pe_z, pe_x);
            return op::add(op::sum_all(op::mul(z.v, z.v)), op::sum_all(op::mul(x.v, x.v)));
        }, 1e-4, 6);
        INFO("norm mode ", norm == NormMode::literal ? "literal" : "post_norm",
             " worst leaf ", rep.worst_leaf);
        CHECK(rep.max_rel_err < 1e-3);
    }
}
