#include "mapnet/alignment.hpp"

namespace mapnet {

namespace op = ops;

namespace {

// Encoding for the concatenated sequence: the two stacked grids both live on
// the search lattice, so their encodings stack in row order.
Tensor stacked_encoding(const Tensor& pe_x) {
    const int n = pe_x.dim(0), d = pe_x.dim(1);
    Tensor pe_m({2 * n, d});
    std::copy(pe_x.data(), pe_x.data() + n * d, pe_m.data());
    std::copy(pe_x.data(), pe_x.data() + n * d, pe_m.data() + n * d);
    return pe_m;
}

}  // namespace

std::pair<Tokens, Tokens> dual_align(const Tokens& s_c, const Tokens& s_p,
                                     const AlignmentParams& p, const Tensor& pe_x) {
    MAPNET_REQUIRE(s_c.v.dim(0) == s_p.v.dim(0), "dual_align: token count mismatch");
    MAPNET_REQUIRE(s_c.v.dim(1) == s_p.v.dim(1), "dual_align: width mismatch");
    const Tensor pe_m = stacked_encoding(pe_x);

    // Stage 1: classification tokens query the concatenated sequence.
    Var s_m = op::concat_rows(s_c.v, s_p.v);
    Var q_c = op::add_const(op::linear(s_c.v, p.proj_c.wq, p.proj_c.bq), pe_x);
    Var k_m = op::add_const(op::linear(s_m, p.proj_c.wk, p.proj_c.bk), pe_m);
    Var v_m = op::linear(s_m, p.proj_c.wv, p.proj_c.bv);
    Var u_c = op::add(s_c.v, multi_head_attention(q_c, k_m, v_m, p.cross_c));
    GateParams gc;
    gc.kind = GateKind::channel;
    gc.channel = p.gate_c;
    Tokens s_c_out{apply_token_gate({u_c, s_c.gh, s_c.gw}, gc), s_c.gh, s_c.gw};

    // Stage 2: regression tokens query the updated concatenation.
    Var s_m2 = op::concat_rows(s_c_out.v, s_p.v);
    Var q_p = op::add_const(op::linear(s_p.v, p.proj_p.wq, p.proj_p.bq), pe_x);
    Var k_m2 = op::add_const(op::linear(s_m2, p.proj_p.wk, p.proj_p.bk), pe_m);
    Var v_m2 = op::linear(s_m2, p.proj_p.wv, p.proj_p.bv);
    Var u_p = op::add(s_p.v, multi_head_attention(q_p, k_m2, v_m2, p.cross_p));
    GateParams gp;
    gp.kind = GateKind::spatial;
    gp.spatial = p.gate_p;
    Tokens s_p_out{apply_token_gate({u_p, s_p.gh, s_p.gw}, gp), s_p.gh, s_p.gw};

    return {s_c_out, s_p_out};
}

}  // namespace mapnet
