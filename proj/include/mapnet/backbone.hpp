#pragma once

#include "mapnet/matcher.hpp"
#include "mapnet/params.hpp"

namespace mapnet {

enum class BackboneVariant { toy, resnet50_style };

// Total stride is 8 for both variants. The toy variant is a small residual
// net trainable from scratch; resnet50_style mirrors the modified 50-layer
// topology (stem + three bottleneck stages, last stage stride 1 with dilated
// 3x3 convolutions) and is populated through the checkpoint import hook.
struct BackboneConfig {
    BackboneVariant variant = BackboneVariant::toy;
    std::vector<int> stage_widths = {32, 64, 128};  // toy variant
    int out_dim = 256;
    bool dilation_in_last_stage = true;
};

void register_backbone_params(ParamStore& store, const BackboneConfig& cfg);

// image: standardized {H,W,3}, H and W divisible by 8 -> {H/8, W/8, out_dim}.
Var extract_features(const Var& image, const BackboneConfig& cfg, ParamBinder& bind);

// Row-major flatten {H,W,C} -> tokens {H*W, C} with grid provenance.
Tokens flatten_features(const Var& grid);

// Inverse of flatten_features.
Var unflatten_tokens(const Tokens& t);

}  // namespace mapnet
