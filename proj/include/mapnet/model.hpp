#pragma once

#include <array>

#include "mapnet/alignment.hpp"
#include "mapnet/backbone.hpp"
#include "mapnet/heads.hpp"

namespace mapnet {

// Full network configuration. Defaults are the published constants: d = 256,
// 8 heads, N = 3 matchers per branch, channel gates for classification,
// spatial gates for regression, 128/256 patch sizes.
struct ModelConfig {
    int dim = 256;
    int heads = 8;
    int dff = 1024;
    int depth = 3;
    int head_hidden = 256;
    GateKind cls_gate = GateKind::channel;
    GateKind reg_gate = GateKind::spatial;
    bool use_alignment = true;
    // Ablation: one stack (gated per cls_gate) feeding both heads.
    bool shared_stacks = false;
    NormMode norm_mode = NormMode::post_norm;
    int reduction_ratio = 16;
    int spatial_kernel = 7;
    double ffn_dropout = 0.1;
    int template_size = 128;
    int search_size = 256;
    BackboneConfig backbone;
    std::array<double, 3> pixel_mean{0.485, 0.456, 0.406};
    std::array<double, 3> pixel_std{0.229, 0.224, 0.225};

    int template_grid() const { return template_size / 8; }
    int search_grid() const { return search_size / 8; }
    int num_candidates() const { return search_grid() * search_grid(); }

    void validate() const;  // throws ConfigError
};

struct ModelOutput {
    Var cls_logits;  // {n_x, 2}
    Var cls_probs;   // {n_x, 2}
    Var boxes;       // {n_x, 4}, normalized corners in [0,1]
    Tokens s_c;      // aligned classification tokens
    Tokens s_p;      // aligned regression tokens
};

class Model {
  public:
    ModelConfig cfg;
    ParamStore params;

    // Registers every parameter tensor and initializes it. Attention/linear
    // weights draw from a symmetric uniform fan-in scheme; gate output layers
    // start at zero so every gate opens at 0.5.
    void build(uint64_t init_seed);

    // Registers without touching values (checkpoint loading).
    void register_only();

    // Full two-patch forward. Pixel tensors are {H,W,3} in [0,1]; they are
    // standardized with the configured constants inside.
    ModelOutput forward(ParamBinder& bind, const Tensor& template_pixels,
                        const Tensor& search_pixels, bool train_mode = false,
                        Rng* dropout_rng = nullptr) const;

    // Search-side forward against frozen template tokens (tracking path).
    ModelOutput forward_search(ParamBinder& bind, const Tensor& template_tokens,
                               const Tensor& search_pixels) const;

    // Template feature tokens {n_z, d}, inference mode.
    Tensor template_tokens(const Tensor& template_pixels) const;

    Tensor standardize(const Tensor& pixels01) const;
};

void init_params(ParamStore& store, uint64_t seed);

}  // namespace mapnet
