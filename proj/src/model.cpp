#include "mapnet/model.hpp"

#include <cmath>

namespace mapnet {

namespace op = ops;

namespace {

void register_mha(ParamStore& s, const std::string& p, int dim) {
    s.create(p + ".wq", {dim, dim});
    s.create(p + ".wk", {dim, dim});
    s.create(p + ".wv", {dim, dim});
    s.create(p + ".wo", {dim, dim});
}

void register_proj(ParamStore& s, const std::string& p, int dim) {
    for (const char* w : {".wq", ".wk", ".wv"}) s.create(p + w, {dim, dim});
    for (const char* b : {".bq", ".bk", ".bv"}) s.create(p + b, {dim});
}

void register_gate(ParamStore& s, const std::string& p, GateKind kind, const ModelConfig& cfg) {
    if (kind == GateKind::none) return;
    if (kind == GateKind::channel) {
        const int c = cfg.dim;
        if (c % cfg.reduction_ratio != 0)
            throw ConfigError("channel gate: reduction ratio must divide model width");
        s.create(p + ".mlp.w1", {c, c / cfg.reduction_ratio});
        s.create(p + ".mlp.w2", {c / cfg.reduction_ratio, c});
    } else {
        const int k = cfg.spatial_kernel;
        if (k % 2 == 0) throw ConfigError("spatial gate: kernel size must be odd");
        s.create(p + ".conv.w", {k, k, 1, 1});
        s.create(p + ".conv.b", {1});
    }
}

void register_ffn(ParamStore& s, const std::string& p, int dim, int dff) {
    s.create(p + ".w1", {dim, dff});
    s.create(p + ".b1", {dff});
    s.create(p + ".w2", {dff, dim});
    s.create(p + ".b2", {dim});
}

void register_ln(ParamStore& s, const std::string& p, int dim) {
    s.create(p + ".g", {dim});
    s.create(p + ".bt", {dim});
}

void register_matcher_layer(ParamStore& s, const std::string& p, GateKind kind,
                            const ModelConfig& cfg) {
    for (const char* stream : {".self_z", ".self_x", ".cross"}) {
        register_proj(s, p + stream + ".proj", cfg.dim);
        register_mha(s, p + stream + ".mha", cfg.dim);
    }
    register_gate(s, p + ".gate_z", kind, cfg);
    register_gate(s, p + ".gate_x", kind, cfg);
    register_gate(s, p + ".gate_cross", kind, cfg);
    register_ffn(s, p + ".ffn_z", cfg.dim, cfg.dff);
    register_ffn(s, p + ".ffn_x", cfg.dim, cfg.dff);
    if (cfg.norm_mode == NormMode::post_norm) {
        for (const char* ln : {".ln1z", ".ln1x", ".ln2x", ".ln3z", ".ln3x"})
            register_ln(s, p + ln, cfg.dim);
    }
}

void register_stack(ParamStore& s, const std::string& name, GateKind kind,
                    const ModelConfig& cfg) {
    for (int i = 0; i < cfg.depth; ++i)
        register_matcher_layer(s, name + ".l" + std::to_string(i), kind, cfg);
}

void register_head(ParamStore& s, const std::string& p, int dim, int hidden, int out) {
    s.create(p + ".w1", {dim, hidden});
    s.create(p + ".b1", {hidden});
    s.create(p + ".w2", {hidden, hidden});
    s.create(p + ".b2", {hidden});
    s.create(p + ".w3", {hidden, out});
    s.create(p + ".b3", {out});
}

MultiHeadParams bind_mha(ParamBinder& b, const std::string& p, int heads) {
    return MultiHeadParams{b(p + ".wq"), b(p + ".wk"), b(p + ".wv"), b(p + ".wo"), heads};
}

QkvProj bind_proj(ParamBinder& b, const std::string& p) {
    return QkvProj{b(p + ".wq"), b(p + ".bq"), b(p + ".wk"),
                   b(p + ".bk"), b(p + ".wv"), b(p + ".bv")};
}

GateParams bind_gate(ParamBinder& b, const std::string& p, GateKind kind,
                     const ModelConfig& cfg) {
    GateParams g;
    g.kind = kind;
    if (kind == GateKind::channel) {
        g.channel = ChannelAttnParams{b(p + ".mlp.w1"), b(p + ".mlp.w2"), cfg.reduction_ratio};
    } else if (kind == GateKind::spatial) {
        g.spatial = SpatialAttnParams{b(p + ".conv.w"), b(p + ".conv.b"), cfg.spatial_kernel};
    }
    return g;
}

FfnParams bind_ffn(ParamBinder& b, const std::string& p) {
    return FfnParams{b(p + ".w1"), b(p + ".b1"), b(p + ".w2"), b(p + ".b2")};
}

LayerNormParams bind_ln(ParamBinder& b, const std::string& p) {
    return LayerNormParams{b(p + ".g"), b(p + ".bt")};
}

MatcherParams bind_matcher_layer(ParamBinder& b, const std::string& p, GateKind kind,
                                 const ModelConfig& cfg) {
    MatcherParams m;
    m.proj_self_z = bind_proj(b, p + ".self_z.proj");
    m.proj_self_x = bind_proj(b, p + ".self_x.proj");
    m.proj_cross = bind_proj(b, p + ".cross.proj");
    m.self_z = bind_mha(b, p + ".self_z.mha", cfg.heads);
    m.self_x = bind_mha(b, p + ".self_x.mha", cfg.heads);
    m.cross = bind_mha(b, p + ".cross.mha", cfg.heads);
    m.gate_z = bind_gate(b, p + ".gate_z", kind, cfg);
    m.gate_x = bind_gate(b, p + ".gate_x", kind, cfg);
    m.gate_cross = bind_gate(b, p + ".gate_cross", kind, cfg);
    m.ffn_z = bind_ffn(b, p + ".ffn_z");
    m.ffn_x = bind_ffn(b, p + ".ffn_x");
    if (cfg.norm_mode == NormMode::post_norm) {
        m.ln_self_z = bind_ln(b, p + ".ln1z");
        m.ln_self_x = bind_ln(b, p + ".ln1x");
        m.ln_cross = bind_ln(b, p + ".ln2x");
        m.ln_ffn_z = bind_ln(b, p + ".ln3z");
        m.ln_ffn_x = bind_ln(b, p + ".ln3x");
    }
    return m;
}

std::vector<MatcherParams> bind_stack(ParamBinder& b, const std::string& name, GateKind kind,
                                      const ModelConfig& cfg) {
    std::vector<MatcherParams> layers;
    layers.reserve(static_cast<size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i)
        layers.push_back(bind_matcher_layer(b, name + ".l" + std::to_string(i), kind, cfg));
    return layers;
}

AlignmentParams bind_alignment(ParamBinder& b, const ModelConfig& cfg) {
    AlignmentParams a;
    a.proj_c = bind_proj(b, "align.c.proj");
    a.proj_p = bind_proj(b, "align.p.proj");
    a.cross_c = bind_mha(b, "align.c.mha", cfg.heads);
    a.cross_p = bind_mha(b, "align.p.mha", cfg.heads);
    a.gate_c = ChannelAttnParams{b("align.gate_c.mlp.w1"), b("align.gate_c.mlp.w2"),
                                 cfg.reduction_ratio};
    a.gate_p = SpatialAttnParams{b("align.gate_p.conv.w"), b("align.gate_p.conv.b"),
                                 cfg.spatial_kernel};
    return a;
}

HeadParams bind_head(ParamBinder& b, const std::string& p) {
    return HeadParams{b(p + ".w1"), b(p + ".b1"), b(p + ".w2"),
                      b(p + ".b2"), b(p + ".w3"), b(p + ".b3")};
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void ModelConfig::validate() const {
    if (dim % 4 != 0) throw ConfigError("model.dim must be divisible by 4");
    if (heads < 1 || dim % heads != 0) throw ConfigError("model.heads must divide model.dim");
    if (depth < 1) throw ConfigError("matcher.depth must be >= 1");
    if (dff < 1) throw ConfigError("model.dff must be >= 1");
    if (head_hidden < 1) throw ConfigError("model.head_hidden must be >= 1");
    if (template_size % 8 != 0 || search_size % 8 != 0)
        throw ConfigError("patch sizes must be divisible by 8");
    if (template_grid() < 1 || search_grid() < 1) throw ConfigError("patch sizes too small");
    const bool needs_channel = cls_gate == GateKind::channel || reg_gate == GateKind::channel ||
                               use_alignment;
    if (needs_channel && dim % reduction_ratio != 0)
        throw ConfigError("model.reduction_ratio must divide model.dim");
    if (spatial_kernel % 2 == 0) throw ConfigError("model.spatial_kernel must be odd");
    if (spatial_kernel > template_grid())
        throw ConfigError("model.spatial_kernel larger than the template grid");
    if (ffn_dropout < 0.0 || ffn_dropout >= 1.0) throw ConfigError("model.ffn_dropout in [0,1)");
    if (backbone.out_dim != dim)
        throw ConfigError("backbone.out_dim must equal model.dim");
}

void Model::register_only() {
    cfg.validate();
    register_backbone_params(params, cfg.backbone);
    if (cfg.shared_stacks) {
        register_stack(params, "mshared", cfg.cls_gate, cfg);
    } else {
        register_stack(params, "mcls", cfg.cls_gate, cfg);
        register_stack(params, "mreg", cfg.reg_gate, cfg);
    }
    if (cfg.use_alignment) {
        register_proj(params, "align.c.proj", cfg.dim);
        register_mha(params, "align.c.mha", cfg.dim);
        register_proj(params, "align.p.proj", cfg.dim);
        register_mha(params, "align.p.mha", cfg.dim);
        if (cfg.dim % cfg.reduction_ratio != 0)
            throw ConfigError("alignment channel gate: reduction ratio must divide width");
        params.create("align.gate_c.mlp.w1", {cfg.dim, cfg.dim / cfg.reduction_ratio});
        params.create("align.gate_c.mlp.w2", {cfg.dim / cfg.reduction_ratio, cfg.dim});
        params.create("align.gate_p.conv.w", {cfg.spatial_kernel, cfg.spatial_kernel, 1, 1});
        params.create("align.gate_p.conv.b", {1});
    }
    register_head(params, "head.cls", cfg.dim, cfg.head_hidden, 2);
    register_head(params, "head.reg", cfg.dim, cfg.head_hidden, 4);
}

void init_params(ParamStore& store, uint64_t seed) {
    Rng rng(seed);
    const double box_lo = std::log(0.375 / 0.625);  // corner prior ~ quarter-size object
    const double box_hi = -box_lo;
    for (const auto& name : store.names()) {
        Tensor& t = store.get(name);
        const bool is_gate = name.find("gate_") != std::string::npos;
        if (ends_with(name, ".rm")) {
            t.fill(0.0);
        } else if (ends_with(name, ".rv") || ends_with(name, ".g")) {
            t.fill(1.0);
        } else if (ends_with(name, ".bt")) {
            t.fill(0.0);
        } else if (is_gate && (ends_with(name, ".mlp.w2") || ends_with(name, ".conv.w") ||
                               ends_with(name, ".conv.b"))) {
            t.fill(0.0);  // gates open at sigmoid(0) = 0.5
        } else if (name == "head.reg.b3") {
            t[0] = box_lo;
            t[1] = box_lo;
            t[2] = box_hi;
            t[3] = box_hi;
        } else if (t.rank() == 1) {
            t.fill(0.0);
        } else {
            const int fan_in = t.rank() == 4 ? t.dim(0) * t.dim(1) * t.dim(2) : t.dim(0);
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
        }
    }
}

void Model::build(uint64_t init_seed) {
    register_only();
    init_params(params, init_seed);
}

Tensor Model::standardize(const Tensor& pixels01) const {
    MAPNET_REQUIRE(pixels01.rank() == 3 && pixels01.dim(2) == 3,
                   "standardize: expect {H,W,3}");
    Tensor out = pixels01;
    const int hw = out.dim(0) * out.dim(1);
    for (int i = 0; i < hw; ++i)
        for (int c = 0; c < 3; ++c)
            out[i * 3 + c] = (out[i * 3 + c] - cfg.pixel_mean[static_cast<size_t>(c)]) /
                             cfg.pixel_std[static_cast<size_t>(c)];
    return out;
}

ModelOutput Model::forward(ParamBinder& bind, const Tensor& template_pixels,
                           const Tensor& search_pixels, bool train_mode, Rng* dropout_rng) const {
    Var ti = op::constant(standardize(template_pixels));
    Var fz = extract_features(ti, cfg.backbone, bind);
    Tokens vz = flatten_features(fz);

    Var si = op::constant(standardize(search_pixels));
    Var fx = extract_features(si, cfg.backbone, bind);
    Tokens vx = flatten_features(fx);

    const Tensor pe_z = positional_encoding(vz.gh, vz.gw, cfg.dim);
    const Tensor pe_x = positional_encoding(vx.gh, vx.gw, cfg.dim);
    const double dropout = train_mode ? cfg.ffn_dropout : 0.0;

    Tokens s_c, s_p;
    if (cfg.shared_stacks) {
        MatcherStackConfig mc{cfg.depth, cfg.cls_gate, cfg.norm_mode};
        Tokens s = run_matcher_stack(vz, vx, mc, bind_stack(bind, "mshared", cfg.cls_gate, cfg),
                                     pe_z, pe_x, dropout, dropout_rng);
        s_c = s;
        s_p = s;
    } else {
        MatcherStackConfig cc{cfg.depth, cfg.cls_gate, cfg.norm_mode};
        MatcherStackConfig rc{cfg.depth, cfg.reg_gate, cfg.norm_mode};
        s_c = run_matcher_stack(vz, vx, cc, bind_stack(bind, "mcls", cfg.cls_gate, cfg), pe_z,
                                pe_x, dropout, dropout_rng);
        s_p = run_matcher_stack(vz, vx, rc, bind_stack(bind, "mreg", cfg.reg_gate, cfg), pe_z,
                                pe_x, dropout, dropout_rng);
    }
    if (cfg.use_alignment) {
        auto aligned = dual_align(s_c, s_p, bind_alignment(bind, cfg), pe_x);
        s_c = aligned.first;
        s_p = aligned.second;
    }

    ModelOutput out;
    out.cls_logits = classify(s_c.v, bind_head(bind, "head.cls"));
    out.cls_probs = op::softmax_rows(out.cls_logits);
    out.boxes = regress(s_p.v, bind_head(bind, "head.reg"));
    out.s_c = s_c;
    out.s_p = s_p;
    return out;
}

ModelOutput Model::forward_search(ParamBinder& bind, const Tensor& template_tokens,
                                  const Tensor& search_pixels) const {
    const int gz = cfg.template_grid();
    MAPNET_REQUIRE(template_tokens.rank() == 2 && template_tokens.dim(0) == gz * gz &&
                       template_tokens.dim(1) == cfg.dim,
                   "forward_search: template token shape mismatch");
    Tokens vz{op::constant(template_tokens), gz, gz};

    Var si = op::constant(standardize(search_pixels));
    Var fx = extract_features(si, cfg.backbone, bind);
    Tokens vx = flatten_features(fx);

    const Tensor pe_z = positional_encoding(vz.gh, vz.gw, cfg.dim);
    const Tensor pe_x = positional_encoding(vx.gh, vx.gw, cfg.dim);

    Tokens s_c, s_p;
    if (cfg.shared_stacks) {
        MatcherStackConfig mc{cfg.depth, cfg.cls_gate, cfg.norm_mode};
        Tokens s = run_matcher_stack(vz, vx, mc, bind_stack(bind, "mshared", cfg.cls_gate, cfg),
                                     pe_z, pe_x);
        s_c = s;
        s_p = s;
    } else {
        MatcherStackConfig cc{cfg.depth, cfg.cls_gate, cfg.norm_mode};
        MatcherStackConfig rc{cfg.depth, cfg.reg_gate, cfg.norm_mode};
        s_c = run_matcher_stack(vz, vx, cc, bind_stack(bind, "mcls", cfg.cls_gate, cfg), pe_z,
                                pe_x);
        s_p = run_matcher_stack(vz, vx, rc, bind_stack(bind, "mreg", cfg.reg_gate, cfg), pe_z,
                                pe_x);
    }
    if (cfg.use_alignment) {
        auto aligned = dual_align(s_c, s_p, bind_alignment(bind, cfg), pe_x);
        s_c = aligned.first;
        s_p = aligned.second;
    }

    ModelOutput out;
    out.cls_logits = classify(s_c.v, bind_head(bind, "head.cls"));
    out.cls_probs = op::softmax_rows(out.cls_logits);
    out.boxes = regress(s_p.v, bind_head(bind, "head.reg"));
    out.s_c = s_c;
    out.s_p = s_p;
    return out;
}

Tensor Model::template_tokens(const Tensor& template_pixels) const {
    ParamBinder bind(params, false);
    Var ti = op::constant(standardize(template_pixels));
    Var fz = extract_features(ti, cfg.backbone, bind);
    return flatten_features(fz).v.val();
}

}  // namespace mapnet
