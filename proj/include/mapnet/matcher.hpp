#pragma once

#include <vector>

#include "mapnet/attention.hpp"

namespace mapnet {

enum class GateKind { channel, spatial, none };

// "literal" evaluates the matcher equations exactly as written (no
// normalization); "post_norm" adds layer normalization after each residual
// sum, which is what training uses. Oracle tests run literal mode.
enum class NormMode { literal, post_norm };

// Per-stream fully connected input projections producing the query/key/value
// token sequences fed to a multi-head block.
struct QkvProj {
    Var wq, bq;
    Var wk, bk;
    Var wv, bv;
};

struct LayerNormParams {
    Var gamma, beta;
};

struct GateParams {
    GateKind kind = GateKind::none;
    ChannelAttnParams channel;
    SpatialAttnParams spatial;
};

// Token sequence with its grid provenance; v is {gh*gw, d}.
struct Tokens {
    Var v;
    int gh = 0;
    int gw = 0;
};

struct MatcherParams {
    QkvProj proj_self_z, proj_self_x, proj_cross;
    MultiHeadParams self_z, self_x, cross;
    GateParams gate_z, gate_x, gate_cross;
    FfnParams ffn_z, ffn_x;
    // Present only in post_norm mode.
    LayerNormParams ln_self_z, ln_self_x, ln_cross, ln_ffn_z, ln_ffn_x;
};

struct MatcherStackConfig {
    int depth = 3;
    GateKind gate_kind = GateKind::channel;
    NormMode norm_mode = NormMode::literal;
};

// Applies a gate to tokens by unflattening them onto their (square) grid.
Var apply_token_gate(const Tokens& t, const GateParams& gate);

// One matcher: per-stream self-attention + gate, template->search
// cross-attention + gate, then per-stream feed-forward blocks. Positional
// encodings are added to the query/key token sequences of every attention.
std::pair<Tokens, Tokens> matcher_layer(const Tokens& v_z, const Tokens& v_x,
                                        const MatcherParams& p, NormMode norm,
                                        const Tensor& pe_z, const Tensor& pe_x,
                                        double dropout_p = 0.0, Rng* rng = nullptr);

// Threads both streams through cfg.depth matchers and returns the final
// search-stream tokens (the raw similarity tokens s_c or s_p).
Tokens run_matcher_stack(const Tokens& v_z, const Tokens& v_x, const MatcherStackConfig& cfg,
                         const std::vector<MatcherParams>& params, const Tensor& pe_z,
                         const Tensor& pe_x, double dropout_p = 0.0, Rng* rng = nullptr);

}  // namespace mapnet
