#include "mapnet/matcher.hpp"

namespace mapnet {

namespace op = ops;

namespace {

Var with_ln(const Var& x, const LayerNormParams& ln, NormMode norm) {
    if (norm == NormMode::literal) return x;
    return op::layer_norm_rows(x, ln.gamma, ln.beta);
}

struct QkvTokens {
    Var q, k, v;
};

QkvTokens project_qkv(const Var& q_src, const Var& kv_src, const QkvProj& proj,
                      const Tensor& pe_q, const Tensor& pe_kv) {
    QkvTokens out;
    out.q = op::add_const(op::linear(q_src, proj.wq, proj.bq), pe_q);
    out.k = op::add_const(op::linear(kv_src, proj.wk, proj.bk), pe_kv);
    out.v = op::linear(kv_src, proj.wv, proj.bv);
    return out;
}

}  // namespace

Var apply_token_gate(const Tokens& t, const GateParams& gate) {
    if (gate.kind == GateKind::none) return t.v;
    const int n = t.v.dim(0), d = t.v.dim(1);
    MAPNET_REQUIRE(t.gh * t.gw == n, "token gate: grid provenance does not match token count");
    MAPNET_REQUIRE(t.gh == t.gw, "token gate: non-square token grid");
    Var grid = op::reshape(t.v, {t.gh, t.gw, d});
    Var gated = gate.kind == GateKind::channel ? channel_attention(grid, gate.channel)
                                               : spatial_attention(grid, gate.spatial);
    return op::reshape(gated, {n, d});
}

std::pair<Tokens, Tokens> matcher_layer(const Tokens& v_z, const Tokens& v_x,
                                        const MatcherParams& p, NormMode norm,
                                        const Tensor& pe_z, const Tensor& pe_x,
                                        double dropout_p, Rng* rng) {
    MAPNET_REQUIRE(v_z.v.dim(1) == v_x.v.dim(1), "matcher_layer: stream width mismatch");

    // Self-attention with gating, per stream.
    QkvTokens sz = project_qkv(v_z.v, v_z.v, p.proj_self_z, pe_z, pe_z);
    Var uz = with_ln(op::add(v_z.v, multi_head_attention(sz.q, sz.k, sz.v, p.self_z)),
                     p.ln_self_z, norm);
    Tokens z1{apply_token_gate({uz, v_z.gh, v_z.gw}, p.gate_z), v_z.gh, v_z.gw};

    QkvTokens sx = project_qkv(v_x.v, v_x.v, p.proj_self_x, pe_x, pe_x);
    Var ux = with_ln(op::add(v_x.v, multi_head_attention(sx.q, sx.k, sx.v, p.self_x)),
                     p.ln_self_x, norm);
    Tokens x1{apply_token_gate({ux, v_x.gh, v_x.gw}, p.gate_x), v_x.gh, v_x.gw};

    // Cross-attention: search queries template context, search stream only.
    QkvTokens cx = project_qkv(x1.v, z1.v, p.proj_cross, pe_x, pe_z);
    Var uc = with_ln(op::add(x1.v, multi_head_attention(cx.q, cx.k, cx.v, p.cross)),
                     p.ln_cross, norm);
    Tokens x2{apply_token_gate({uc, v_x.gh, v_x.gw}, p.gate_cross), v_x.gh, v_x.gw};

    // Feed-forward blocks close both streams.
    Var z_out = with_ln(feed_forward(z1.v, p.ffn_z, dropout_p, rng), p.ln_ffn_z, norm);
    Var x_out = with_ln(feed_forward(x2.v, p.ffn_x, dropout_p, rng), p.ln_ffn_x, norm);
    return {Tokens{z_out, v_z.gh, v_z.gw}, Tokens{x_out, v_x.gh, v_x.gw}};
}

Tokens run_matcher_stack(const Tokens& v_z, const Tokens& v_x, const MatcherStackConfig& cfg,
                         const std::vector<MatcherParams>& params, const Tensor& pe_z,
                         const Tensor& pe_x, double dropout_p, Rng* rng) {
    if (cfg.depth < 1) throw ConfigError("matcher stack: depth must be >= 1");
    if (static_cast<int>(params.size()) != cfg.depth)
        throw ConfigError("matcher stack: parameter count does not match depth");
    Tokens z = v_z, x = v_x;
    for (int i = 0; i < cfg.depth; ++i) {
        auto [z_next, x_next] =
            matcher_layer(z, x, params[static_cast<size_t>(i)], cfg.norm_mode, pe_z, pe_x,
                          dropout_p, rng);
        z = z_next;
        x = x_next;
    }
    return x;
}

}  // namespace mapnet
