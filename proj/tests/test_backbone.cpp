#include "doctest.h"

#include <cmath>

#include "mapnet/backbone.hpp"
#include "mapnet/model.hpp"

using namespace mapnet;
namespace op = mapnet::ops;

namespace {

Tensor random_image(int h, int w, Rng& rng) {
    Tensor t({h, w, 3});
    for (int i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

ParamStore make_store(const BackboneConfig& cfg, uint64_t seed) {
    ParamStore store;
    register_backbone_params(store, cfg);
    init_params(store, seed);
    return store;
}

}  // namespace

TEST_CASE("toy backbone produces the published token grids") {
    BackboneConfig cfg;  // toy, widths 32/64/128, out 256
    ParamStore store = make_store(cfg, 7);
    ParamBinder bind(store, false);
    Rng rng(7);

    Var tmpl = Var::leaf(random_image(128, 128, rng), false);
    Var fz = extract_features(tmpl, cfg, bind);
    CHECK(fz.shape() == std::vector<int>{16, 16, 256});
    Tokens vz = flatten_features(fz);
    CHECK(vz.v.shape() == std::vector<int>{256, 256});

    Var search = Var::leaf(random_image(256, 256, rng), false);
    Var fx = extract_features(search, cfg, bind);
    CHECK(fx.shape() == std::vector<int>{32, 32, 256});
    CHECK(flatten_features(fx).v.dim(0) == 1024);
}

TEST_CASE("indivisible patch sizes are a configuration error") {
    BackboneConfig cfg;
    cfg.stage_widths = {4, 8, 8};
    cfg.out_dim = 16;
    ParamStore store = make_store(cfg, 3);
    ParamBinder bind(store, false);
    Rng rng(3);
    Var bad = Var::leaf(random_image(60, 60, rng), false);
    CHECK_THROWS_AS(extract_features(bad, cfg, bind), ConfigError);
}

TEST_CASE("flatten is row-major and round-trips bit-exactly") {
    Tensor grid({2, 2, 1}, {1.5, 2.5, 3.5, 4.5});
    Tokens t = flatten_features(op::constant(grid));
    CHECK(t.v.val()[0] == 1.5);
    CHECK(t.v.val()[1] == 2.5);
    CHECK(t.v.val()[2] == 3.5);
    CHECK(t.v.val()[3] == 4.5);

    Rng rng(11);
    Tensor rnd({4, 4, 6});
    for (int i = 0; i < rnd.size(); ++i) rnd[i] = rng.normal();
    Tokens tok = flatten_features(op::constant(rnd));
    Var back = unflatten_tokens(tok);
    for (int i = 0; i < rnd.size(); ++i) CHECK(back.val()[i] == rnd[i]);
}

TEST_CASE("impulse response stays within the analytic receptive field") {
    BackboneConfig cfg;
    cfg.stage_widths = {4, 6, 8};
    cfg.out_dim = 8;
    ParamStore store = make_store(cfg, 13);
    ParamBinder bind(store, false);

    // Three stages of (down k3 s2) + two k3 convs: receptive field 71 px,
    // total stride 8, output cell i centered at input pixel 8*i.
    const int rf_radius = 35;
    const int H = 64;
    Tensor zeros({H, H, 3});
    Tensor delta = zeros;
    const int iy = 32, ix = 32;
    for (int c = 0; c < 3; ++c) delta.at(iy, ix, c) = 10.0;

    Var out0 = extract_features(op::constant(zeros), cfg, bind);
    Var out1 = extract_features(op::constant(delta), cfg, bind);
    const int G = H / 8;
    bool any_response = false;
    for (int oy = 0; oy < G; ++oy) {
        for (int ox = 0; ox < G; ++ox) {
            double diff = 0.0;
            for (int c = 0; c < 8; ++c)
                diff = std::max(diff, std::fabs(out1.val().at(oy, ox, c) -
                                                out0.val().at(oy, ox, c)));
            const bool inside = std::abs(8 * oy - iy) <= rf_radius &&
                                std::abs(8 * ox - ix) <= rf_radius;
            if (!inside) {
                CHECK(diff == 0.0);
            }
            any_response = any_response || diff > 0.0;
        }
    }
    CHECK(any_response);
}

TEST_CASE("toy backbone is translation covariant in the interior") {
    BackboneConfig cfg;
    cfg.stage_widths = {4, 6, 8};
    cfg.out_dim = 8;
    ParamStore store = make_store(cfg, 17);
    ParamBinder bind(store, false);
    Rng rng(17);

    const int H = 160;
    Tensor img = random_image(H, H, rng);
    Tensor shifted({H, H, 3});
    // Shift content down/right by 8 pixels.
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < H; ++x)
            for (int c = 0; c < 3; ++c)
                shifted.at(y, x, c) = (y >= 8 && x >= 8) ? img.at(y - 8, x - 8, c) : 0.0;

    Var f0 = extract_features(op::constant(img), cfg, bind);
    Var f1 = extract_features(op::constant(shifted), cfg, bind);
    // Interior cells: the 71-px receptive field must stay inside the frame
    // for both the original and the shifted evaluation.
    for (int y = 6; y <= 15; ++y)
        for (int x = 6; x <= 15; ++x)
            for (int c = 0; c < 8; ++c)
                CHECK(f1.val().at(y, x, c) ==
                      doctest::Approx(f0.val().at(y - 1, x - 1, c)).epsilon(1e-4));
}

TEST_CASE("shared weights: template and search roles see identical features") {
    BackboneConfig cfg;
    cfg.stage_widths = {4, 6, 8};
    cfg.out_dim = 8;
    ParamStore store = make_store(cfg, 19);
    ParamBinder bind(store, false);
    Rng rng(19);
    Tensor img = random_image(32, 32, rng);
    Var a = extract_features(op::constant(img), cfg, bind);
    Var b = extract_features(op::constant(img), cfg, bind);
    for (int i = 0; i < a.val().size(); ++i) CHECK(a.val()[i] == b.val()[i]);
}

TEST_CASE("resnet50-style variant keeps stride 8 and the 256-wide output") {
    BackboneConfig cfg;
    cfg.variant = BackboneVariant::resnet50_style;
    cfg.out_dim = 256;
    ParamStore store = make_store(cfg, 23);
    ParamBinder bind(store, false);
    Rng rng(23);
    Var tmpl = Var::leaf(random_image(128, 128, rng), false);
    Var fz = extract_features(tmpl, cfg, bind);
    CHECK(fz.shape() == std::vector<int>{16, 16, 256});
    CHECK(fz.val().all_finite());
}

TEST_CASE("toy backbone gradients flow to every stage") {
    BackboneConfig cfg;
    cfg.stage_widths = {4, 6, 8};
    cfg.out_dim = 8;
    ParamStore store = make_store(cfg, 29);
    ParamBinder bind(store, true);
    Rng rng(29);
    Var img = Var::leaf(random_image(32, 32, rng), false);
    Var f = extract_features(img, cfg, bind);
    backward(op::sum_all(op::mul(f, f)));
    for (const auto& name : store.names()) {
        INFO("parameter ", name);
        CHECK(bind.grad_or_zero(name).max_abs() > 0.0);
    }
}
