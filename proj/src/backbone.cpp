#include "mapnet/backbone.hpp"

namespace mapnet {

namespace op = ops;

namespace {

constexpr double kBnEps = 1e-5;

std::string stage_name(int i) {
    return "backbone.s" + std::to_string(i);
}

// ResNet-50 layout for the kept stages: {blocks, mid, out}.
struct ResStage {
    int blocks, mid, out, stride, dilation;
};

std::vector<ResStage> resnet_stages(const BackboneConfig& cfg) {
    const int s3_stride = cfg.dilation_in_last_stage ? 1 : 2;
    const int s3_dil = cfg.dilation_in_last_stage ? 2 : 1;
    return {{3, 64, 256, 1, 1}, {4, 128, 512, 2, 1}, {6, 256, 1024, s3_stride, s3_dil}};
}

void register_conv(ParamStore& s, const std::string& p, int k, int cin, int cout,
                   bool bias = true) {
    s.create(p + ".w", {k, k, cin, cout});
    if (bias) s.create(p + ".b", {cout});
}

void register_bn(ParamStore& s, const std::string& p, int c) {
    s.create(p + ".g", {c});
    s.create(p + ".bt", {c});
    s.create(p + ".rm", {c});
    s.create(p + ".rv", {c});
}

Var conv(const std::string& p, const Var& x, ParamBinder& bind, int stride = 1,
         int dilation = 1, bool bias = true) {
    return op::conv2d(x, bind(p + ".w"), bias ? bind(p + ".b") : Var(), stride, dilation, true);
}

// Inference-form batch normalization: a per-channel affine computed from the
// stored statistics.
Var bn(const std::string& p, const Var& x, ParamBinder& bind) {
    Var inv = op::div(bind(p + ".g"), op::sqrt_v(op::add_scalar(bind(p + ".rv"), kBnEps)));
    Var shift = op::sub(bind(p + ".bt"), op::mul(inv, bind(p + ".rm")));
    return op::channel_affine(x, inv, shift);
}

Var toy_forward(const Var& image, const BackboneConfig& cfg, ParamBinder& bind) {
    Var x = image;
    for (size_t i = 0; i < cfg.stage_widths.size(); ++i) {
        const std::string p = stage_name(static_cast<int>(i));
        x = op::relu(conv(p + ".down", x, bind, 2));
        Var r = conv(p + ".c2", op::relu(conv(p + ".c1", x, bind)), bind);
        x = op::relu(op::add(x, r));
    }
    return conv("backbone.proj", x, bind);
}

Var bottleneck(const std::string& p, const Var& x, int in_c, int out_c, int stride,
               int dilation, ParamBinder& bind) {
    Var y = op::relu(bn(p + ".bn1", conv(p + ".c1", x, bind, 1, 1, false), bind));
    y = op::relu(bn(p + ".bn2", conv(p + ".c2", y, bind, stride, dilation, false), bind));
    y = bn(p + ".bn3", conv(p + ".c3", y, bind, 1, 1, false), bind);
    Var skip = x;
    if (in_c != out_c || stride != 1)
        skip = bn(p + ".down.bn", conv(p + ".down", x, bind, stride, 1, false), bind);
    return op::relu(op::add(y, skip));
}

Var resnet_forward(const Var& image, const BackboneConfig& cfg, ParamBinder& bind) {
    Var x = op::relu(bn("backbone.stem.bn", conv("backbone.stem", image, bind, 2, 1, false), bind));
    x = op::maxpool2d(x, 3, 2, 1);
    int in_c = 64;
    const auto stages = resnet_stages(cfg);
    for (size_t si = 0; si < stages.size(); ++si) {
        const auto& st = stages[si];
        for (int b = 0; b < st.blocks; ++b) {
            const std::string p = stage_name(static_cast<int>(si)) + ".b" + std::to_string(b);
            const int stride = b == 0 ? st.stride : 1;
            x = bottleneck(p, x, in_c, st.out, stride, st.dilation, bind);
            in_c = st.out;
        }
    }
    return conv("backbone.proj", x, bind);
}

}  // namespace

void register_backbone_params(ParamStore& store, const BackboneConfig& cfg) {
    if (cfg.variant == BackboneVariant::toy) {
        MAPNET_REQUIRE(cfg.stage_widths.size() == 3, "toy backbone: expect 3 stage widths");
        int in_c = 3;
        for (size_t i = 0; i < cfg.stage_widths.size(); ++i) {
            const std::string p = stage_name(static_cast<int>(i));
            const int w = cfg.stage_widths[i];
            register_conv(store, p + ".down", 3, in_c, w);
            register_conv(store, p + ".c1", 3, w, w);
            register_conv(store, p + ".c2", 3, w, w);
            in_c = w;
        }
        register_conv(store, "backbone.proj", 1, in_c, cfg.out_dim);
        return;
    }

    register_conv(store, "backbone.stem", 7, 3, 64, false);
    register_bn(store, "backbone.stem.bn", 64);
    int in_c = 64;
    const auto stages = resnet_stages(cfg);
    for (size_t si = 0; si < stages.size(); ++si) {
        const auto& st = stages[si];
        for (int b = 0; b < st.blocks; ++b) {
            const std::string p = stage_name(static_cast<int>(si)) + ".b" + std::to_string(b);
            const int stride = b == 0 ? st.stride : 1;
            register_conv(store, p + ".c1", 1, in_c, st.mid, false);
            register_bn(store, p + ".bn1", st.mid);
            register_conv(store, p + ".c2", 3, st.mid, st.mid, false);
            register_bn(store, p + ".bn2", st.mid);
            register_conv(store, p + ".c3", 1, st.mid, st.out, false);
            register_bn(store, p + ".bn3", st.out);
            if (in_c != st.out || stride != 1) {
                register_conv(store, p + ".down", 1, in_c, st.out, false);
                register_bn(store, p + ".down.bn", st.out);
            }
            in_c = st.out;
        }
    }
    register_conv(store, "backbone.proj", 1, in_c, cfg.out_dim);
}

Var extract_features(const Var& image, const BackboneConfig& cfg, ParamBinder& bind) {
    MAPNET_REQUIRE(image.rank() == 3 && image.dim(2) == 3, "extract_features: expect {H,W,3}");
    if (image.dim(0) % 8 != 0 || image.dim(1) % 8 != 0)
        throw ConfigError("extract_features: patch sides must be divisible by 8");
    return cfg.variant == BackboneVariant::toy ? toy_forward(image, cfg, bind)
                                               : resnet_forward(image, cfg, bind);
}

Tokens flatten_features(const Var& grid) {
    MAPNET_REQUIRE(grid.rank() == 3, "flatten_features: expect {H,W,C}");
    const int h = grid.dim(0), w = grid.dim(1), c = grid.dim(2);
    return Tokens{op::reshape(grid, {h * w, c}), h, w};
}

Var unflatten_tokens(const Tokens& t) {
    MAPNET_REQUIRE(t.gh * t.gw == t.v.dim(0), "unflatten_tokens: grid provenance mismatch");
    return op::reshape(t.v, {t.gh, t.gw, t.v.dim(1)});
}

}  // namespace mapnet
