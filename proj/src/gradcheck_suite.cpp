#include "mapnet/gradcheck_suite.hpp"

#include <cmath>

namespace mapnet {

namespace op = ops;

namespace {

Tensor randn(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

struct Bag {
    std::vector<Var> leaves;
    std::vector<std::string> names;
    Var add(const std::string& n, Tensor t, bool train = true) {
        Var v = Var::leaf(std::move(t), train);
        leaves.push_back(v);
        names.push_back(n);
        return v;
    }
};

BlockCheck check_channel(uint64_t seed) {
    Rng rng(seed);
    Bag bag;
    Var x = bag.add("x", randn({3, 3, 4}, rng));
    ChannelAttnParams p{bag.add("w1", randn({4, 2}, rng)), bag.add("w2", randn({2, 4}, rng)), 2};
    auto rep = check_gradients(bag.leaves, bag.names, [&] {
        Var y = channel_attention(x, p);
        return op::sum_all(op::mul(y, y));
    });
    return {"channel_attention", rep};
}

BlockCheck check_spatial(uint64_t seed) {
    Rng rng(seed);
    Bag bag;
    Var x = bag.add("x", randn({4, 4, 3}, rng));
    SpatialAttnParams p{bag.add("k", randn({3, 3, 1, 1}, rng)), bag.add("b", randn({1}, rng)), 3};
    auto rep = check_gradients(bag.leaves, bag.names, [&] {
        Var y = spatial_attention(x, p);
        return op::sum_all(op::mul(y, y));
    });
    return {"spatial_attention", rep};
}

BlockCheck check_mha(uint64_t seed) {
    Rng rng(seed);
    Bag bag;
    Var q = bag.add("q", randn({3, 8}, rng));
    Var k = bag.add("k", randn({4, 8}, rng));
    Var v = bag.add("v", randn({4, 8}, rng));
    MultiHeadParams p{bag.add("wq", randn({8, 8}, rng, 0.5)),
                      bag.add("wk", randn({8, 8}, rng, 0.5)),
                      bag.add("wv", randn({8, 8}, rng, 0.5)),
                      bag.add("wo", randn({8, 8}, rng, 0.5)), 2};
    auto rep = check_gradients(bag.leaves, bag.names, [&] {
        Var y = multi_head_attention(q, k, v, p);
        return op::sum_all(op::mul(y, y));
    });
    return {"multi_head_attention", rep};
}

QkvProj make_proj(Bag& bag, const std::string& p, int d, Rng& rng) {
    return QkvProj{bag.add(p + ".wq", randn({d, d}, rng, 0.4)),
                   bag.add(p + ".bq", randn({d}, rng, 0.2)),
                   bag.add(p + ".wk", randn({d, d}, rng, 0.4)),
                   bag.add(p + ".bk", randn({d}, rng, 0.2)),
                   bag.add(p + ".wv", randn({d, d}, rng, 0.4)),
                   bag.add(p + ".bv", randn({d}, rng, 0.2))};
}

MultiHeadParams make_mha(Bag& bag, const std::string& p, int d, int heads, Rng& rng) {
    return MultiHeadParams{bag.add(p + ".wq", randn({d, d}, rng, 0.4)),
                           bag.add(p + ".wk", randn({d, d}, rng, 0.4)),
                           bag.add(p + ".wv", randn({d, d}, rng, 0.4)),
                           bag.add(p + ".wo", randn({d, d}, rng, 0.4)), heads};
}

BlockCheck check_matcher(uint64_t seed) {
    Rng rng(seed);
    Bag bag;
    MatcherParams m;
    m.proj_self_z = make_proj(bag, "pz", 8, rng);
    m.proj_self_x = make_proj(bag, "px", 8, rng);
    m.proj_cross = make_proj(bag, "pc", 8, rng);
    m.self_z = make_mha(bag, "az", 8, 2, rng);
    m.self_x = make_mha(bag, "ax", 8, 2, rng);
    m.cross = make_mha(bag, "ac", 8, 2, rng);
    for (auto* g : {&m.gate_z, &m.gate_x, &m.gate_cross}) {
        g->kind = GateKind::channel;
        g->channel = ChannelAttnParams{bag.add("gw1", randn({8, 2}, rng)),
                                       bag.add("gw2", randn({2, 8}, rng)), 4};
    }
    m.ffn_z = FfnParams{bag.add("fz.w1", randn({8, 8}, rng, 0.4)),
                        bag.add("fz.b1", randn({8}, rng, 0.2)),
                        bag.add("fz.w2", randn({8, 8}, rng, 0.4)),
                        bag.add("fz.b2", randn({8}, rng, 0.2))};
    m.ffn_x = FfnParams{bag.add("fx.w1", randn({8, 8}, rng, 0.4)),
                        bag.add("fx.b1", randn({8}, rng, 0.2)),
                        bag.add("fx.w2", randn({8, 8}, rng, 0.4)),
                        bag.add("fx.b2", randn({8}, rng, 0.2))};
    Var vz = bag.add("v_z", randn({4, 8}, rng));
    Var vx = bag.add("v_x", randn({9, 8}, rng));
    const Tensor pe_z = positional_encoding(2, 2, 8);
    const Tensor pe_x = positional_encoding(3, 3, 8);
    auto rep = check_gradients(bag.leaves, bag.names, [&] {
        auto [z, x] = matcher_layer({vz, 2, 2}, {vx, 3, 3}, m, NormMode::literal, pe_z, pe_x);
        return op::add(op::sum_all(op::mul(z.v, z.v)), op::sum_all(op::mul(x.v, x.v)));
    }, 1e-4, 8);
    return {"matcher_layer", rep};
}

BlockCheck check_alignment(uint64_t seed) {
    Rng rng(seed);
    Bag bag;
    AlignmentParams a;
    a.proj_c = make_proj(bag, "pc", 8, rng);
    a.proj_p = make_proj(bag, "pp", 8, rng);
    a.cross_c = make_mha(bag, "ac", 8, 2, rng);
    a.cross_p = make_mha(bag, "ap", 8, 2, rng);
    a.gate_c = ChannelAttnParams{bag.add("gc.w1", randn({8, 2}, rng)),
                                 bag.add("gc.w2", randn({2, 8}, rng)), 4};
    a.gate_p = SpatialAttnParams{bag.add("gp.k", randn({1, 1, 1, 1}, rng)),
                                 bag.add("gp.b", randn({1}, rng)), 1};
    Var sc = bag.add("s_c", randn({4, 8}, rng));
    Var sp = bag.add("s_p", randn({4, 8}, rng));
    const Tensor pe = positional_encoding(2, 2, 8);
    auto rep = check_gradients(bag.leaves, bag.names, [&] {
        auto [c, p] = dual_align({sc, 2, 2}, {sp, 2, 2}, a, pe);
        return op::add(op::sum_all(op::mul(c.v, c.v)), op::sum_all(op::mul(p.v, p.v)));
    }, 1e-4, 8);
    return {"dual_alignment", rep};
}

std::pair<BlockCheck, BlockCheck> check_losses(uint64_t seed) {
    Rng rng(seed);
    Box gt{0.15, 0.2, 0.65, 0.7, BoxFrame::normalized_search};
    LabelAssignment labels = assign_labels(4, 4, gt);
    Bag bag;
    Var logits = bag.add("logits", randn({16, 2}, rng));
    Var raw = bag.add("raw_boxes", randn({16, 4}, rng, 0.8));
    LossWeights w;

    const auto iou_w =
        iou_guidance_weights(op::sigmoid(raw).val(), gt, labels);
    const auto conf_w = confidence_guidance_weights(op::softmax_rows(logits).val(), labels);

    auto rep_cls = check_gradients(bag.leaves, bag.names, [&] {
        return pg_cls_loss(op::softmax_rows(logits), op::sigmoid(raw), gt, labels, w, true,
                           &iou_w);
    });
    auto rep_reg = check_gradients(bag.leaves, bag.names, [&] {
        return cg_reg_loss(op::softmax_rows(logits), op::sigmoid(raw), gt, labels, w, true,
                           &conf_w);
    });
    return {{"pg_cls_loss", rep_cls}, {"cg_reg_loss", rep_reg}};
}

// Re-randomize all parameters generically so no gate sits at its zero init.
void randomize_params(ParamStore& store, uint64_t seed) {
    Rng rng(seed);
    const auto ends_with = [](const std::string& s, const std::string& x) {
        return s.size() >= x.size() && s.compare(s.size() - x.size(), x.size(), x) == 0;
    };
    for (const auto& name : store.names()) {
        Tensor& t = store.get(name);
        if (ends_with(name, ".rv")) {
            t.fill(1.0);
        } else if (ends_with(name, ".rm")) {
            t.fill(0.0);
        } else if (ends_with(name, ".g")) {
            for (int i = 0; i < t.size(); ++i) t[i] = 1.0 + 0.1 * rng.normal();
        } else {
            for (int i = 0; i < t.size(); ++i) t[i] = 0.3 * rng.normal();
        }
    }
}

BlockCheck check_full_model(uint64_t seed) {
    RunConfig cfg;
    cfg.model.dim = 8;
    cfg.model.heads = 2;
    cfg.model.dff = 8;
    cfg.model.depth = 1;
    cfg.model.head_hidden = 8;
    cfg.model.reduction_ratio = 4;
    cfg.model.spatial_kernel = 1;
    cfg.model.ffn_dropout = 0.0;
    cfg.model.template_size = 8;    // 1 template token
    cfg.model.search_size = 16;     // 4 candidate tokens
    cfg.model.norm_mode = NormMode::post_norm;
    cfg.model.backbone.stage_widths = {3, 4, 5};
    cfg.model.backbone.out_dim = 8;

    Model model;
    model.cfg = cfg.model;
    model.register_only();
    randomize_params(model.params, seed);

    Rng rng(Rng::derive(seed, 0xBEEF));
    TrainingPair pair;
    pair.template01 = Tensor({8, 8, 3});
    pair.search01 = Tensor({16, 16, 3});
    for (int i = 0; i < pair.template01.size(); ++i) pair.template01[i] = rng.uniform();
    for (int i = 0; i < pair.search01.size(); ++i) pair.search01[i] = rng.uniform();
    pair.gt_norm = Box{0.1, 0.1, 0.6, 0.6, BoxFrame::normalized_search};

    ParamBinder bind(model.params, true);
    std::vector<Var> leaves;
    std::vector<std::string> names;
    for (const auto& name : model.params.names()) {
        if (!is_trainable_param(name)) continue;
        leaves.push_back(bind(name));
        names.push_back(name);
    }

    // Freeze the guidance weights at the base point.
    SampleLoss base = sample_loss(model, bind, pair, cfg, false, nullptr);
    const int grid = model.cfg.search_grid();
    LabelAssignment labels = assign_labels(grid, grid, pair.gt_norm);
    const auto iou_w = iou_guidance_weights(base.out.boxes.val(), pair.gt_norm, labels);
    const auto conf_w = confidence_guidance_weights(base.out.cls_probs.val(), labels);

    auto rep = check_gradients(leaves, names, [&] {
        return sample_loss(model, bind, pair, cfg, false, nullptr, &iou_w, &conf_w).total;
    }, 1e-4, 3, seed);
    return {"full_model_total_loss", rep};
}

}  // namespace

std::vector<BlockCheck> run_gradcheck_suite(uint64_t seed, const std::string& only_block) {
    std::vector<BlockCheck> out;
    auto want = [&](const std::string& b) { return only_block.empty() || only_block == b; };
    if (want("channel_attention")) out.push_back(check_channel(seed + 1));
    if (want("spatial_attention")) out.push_back(check_spatial(seed + 2));
    if (want("multi_head_attention")) out.push_back(check_mha(seed + 3));
    if (want("matcher_layer")) out.push_back(check_matcher(seed + 4));
    if (want("dual_alignment")) out.push_back(check_alignment(seed + 5));
    if (want("pg_cls_loss") || want("cg_reg_loss")) {
        auto [cls, reg] = check_losses(seed + 6);
        if (want("pg_cls_loss")) out.push_back(cls);
        if (want("cg_reg_loss")) out.push_back(reg);
    }
    if (want("full_model_total_loss")) out.push_back(check_full_model(seed + 7));
    if (out.empty()) throw ConfigError("gradcheck: unknown block '" + only_block + "'");
    return out;
}

}  // namespace mapnet
