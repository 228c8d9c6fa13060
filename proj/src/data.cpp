#include "mapnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mapnet/common.hpp"

namespace fs = std::filesystem;

namespace mapnet {

namespace {

struct ObjectState {
    double cx, cy;
    double vx, vy;
    double log_w, log_h;
    std::array<double, 3> color;
    double tex_freq, tex_phase;
};

uint8_t clamp_u8(double v) {
    return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
}

ObjectState init_object(const SyntheticSequenceConfig& cfg, Rng& rng, bool distractor) {
    ObjectState s;
    const double side = rng.uniform(cfg.min_side, cfg.max_side);
    const double aspect = rng.uniform(cfg.aspect_min, cfg.aspect_max);
    s.log_w = std::log(side * std::sqrt(aspect));
    s.log_h = std::log(side / std::sqrt(aspect));
    const double hw = 0.5 * std::exp(s.log_w), hh = 0.5 * std::exp(s.log_h);
    s.cx = rng.uniform(hw + 2.0, cfg.frame_w - hw - 2.0);
    s.cy = rng.uniform(hh + 2.0, cfg.frame_h - hh - 2.0);
    const double dir = rng.uniform(0.0, 6.283185307179586);
    s.vx = cfg.speed * std::cos(dir);
    s.vy = cfg.speed * std::sin(dir);
    for (auto& c : s.color) c = rng.uniform(40.0, 215.0);
    if (distractor) {
        // Push the distractor's hue away from the target by inverting it.
        for (auto& c : s.color) c = 255.0 - c;
    }
    s.tex_freq = rng.uniform(0.25, 0.8);
    s.tex_phase = rng.uniform(0.0, 6.28);
    return s;
}

void advance_object(ObjectState& s, const SyntheticSequenceConfig& cfg, Rng& rng) {
    s.vx += rng.uniform(-cfg.jitter, cfg.jitter);
    s.vy += rng.uniform(-cfg.jitter, cfg.jitter);
    const double vmax = cfg.speed * 2.0 + 1.0;
    const double vnorm = std::hypot(s.vx, s.vy);
    if (vnorm > vmax) {
        s.vx *= vmax / vnorm;
        s.vy *= vmax / vnorm;
    }
    s.cx += s.vx;
    s.cy += s.vy;
    s.log_w += rng.uniform(-cfg.scale_drift, cfg.scale_drift);
    s.log_h += rng.uniform(-cfg.scale_drift, cfg.scale_drift);
    const double min_frame = std::min(cfg.frame_w, cfg.frame_h);
    const double min_log = std::log(8.0);
    const double max_log = std::log(std::min(min_frame - 6.0, cfg.max_side * 2.0));
    s.log_w = std::clamp(s.log_w, min_log, max_log);
    s.log_h = std::clamp(s.log_h, min_log, max_log);

    // Bounce off the walls so the object stays fully visible.
    const double hw = 0.5 * std::exp(s.log_w), hh = 0.5 * std::exp(s.log_h);
    if (s.cx - hw < 1.0) {
        s.cx = 1.0 + hw;
        s.vx = std::fabs(s.vx);
    }
    if (s.cx + hw > cfg.frame_w - 1.0) {
        s.cx = cfg.frame_w - 1.0 - hw;
        s.vx = -std::fabs(s.vx);
    }
    if (s.cy - hh < 1.0) {
        s.cy = 1.0 + hh;
        s.vy = std::fabs(s.vy);
    }
    if (s.cy + hh > cfg.frame_h - 1.0) {
        s.cy = cfg.frame_h - 1.0 - hh;
        s.vy = -std::fabs(s.vy);
    }
}

bool inside_object(const ObjectState& s, const SyntheticSequenceConfig& cfg, double px,
                   double py) {
    const double hw = 0.5 * std::exp(s.log_w), hh = 0.5 * std::exp(s.log_h);
    const double dx = (px - s.cx) / hw, dy = (py - s.cy) / hh;
    if (cfg.shape == SyntheticSequenceConfig::Shape::rectangle)
        return std::fabs(dx) <= 1.0 && std::fabs(dy) <= 1.0;
    return dx * dx + dy * dy <= 1.0;
}

void paint_object(Image& img, std::vector<uint8_t>* mask, const ObjectState& s,
                  const SyntheticSequenceConfig& cfg, Rng& noise_rng) {
    const double hw = 0.5 * std::exp(s.log_w), hh = 0.5 * std::exp(s.log_h);
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - hh)) - 1);
    const int y1 = std::min(cfg.frame_h - 1, static_cast<int>(std::ceil(s.cy + hh)) + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - hw)) - 1);
    const int x1 = std::min(cfg.frame_w - 1, static_cast<int>(std::ceil(s.cx + hw)) + 1);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            if (!inside_object(s, cfg, x + 0.5, y + 0.5)) continue;
            const double tex =
                12.0 * std::sin(s.tex_freq * x + s.tex_phase) * std::cos(s.tex_freq * y);
            for (int c = 0; c < 3; ++c) {
                const double n = cfg.noise * 255.0 * noise_rng.normal();
                img.at(y, x, c) = clamp_u8(s.color[static_cast<size_t>(c)] + tex + n);
            }
            if (mask) (*mask)[static_cast<size_t>(y) * cfg.frame_w + x] = 1;
        }
    }
}

Box mask_bounds(const std::vector<uint8_t>& mask, int w, int h) {
    int min_x = w, min_y = h, max_x = -1, max_y = -1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask[static_cast<size_t>(y) * w + x]) continue;
            min_x = std::min(min_x, x);
            min_y = std::min(min_y, y);
            max_x = std::max(max_x, x);
            max_y = std::max(max_y, y);
        }
    }
    MAPNET_REQUIRE(max_x >= min_x && max_y >= min_y, "mask_bounds: empty mask");
    return Box{static_cast<double>(min_x), static_cast<double>(min_y),
               static_cast<double>(max_x + 1), static_cast<double>(max_y + 1),
               BoxFrame::image_pixels};
}

}  // namespace

SyntheticSequence generate_synthetic_sequence(const SyntheticSequenceConfig& cfg, uint64_t seed) {
    if (cfg.frame_w < 32 || cfg.frame_h < 32) throw ConfigError("synthetic: frame too small");
    if (cfg.length < 1) throw ConfigError("synthetic: length must be >= 1");
    if (cfg.min_side < 8.0) throw ConfigError("synthetic: objects must stay >= 8 px per side");
    if (cfg.max_side + 6.0 > std::min(cfg.frame_w, cfg.frame_h))
        throw ConfigError("synthetic: object does not fit the frame");

    Rng rng(Rng::derive(seed, 0xDA7A));
    ObjectState target = init_object(cfg, rng, false);
    std::optional<ObjectState> distractor;
    if (cfg.distractor) distractor = init_object(cfg, rng, true);

    // Background: smooth two-tone gradient plus low-frequency ripples.
    std::array<double, 3> bg0, bg1;
    for (int c = 0; c < 3; ++c) {
        bg0[static_cast<size_t>(c)] = rng.uniform(30.0, 225.0);
        bg1[static_cast<size_t>(c)] = rng.uniform(30.0, 225.0);
    }
    // Keep the target color separated from the background band.
    for (int c = 0; c < 3; ++c) {
        const double mid = 0.5 * (bg0[static_cast<size_t>(c)] + bg1[static_cast<size_t>(c)]);
        if (std::fabs(target.color[static_cast<size_t>(c)] - mid) < 45.0)
            target.color[static_cast<size_t>(c)] =
                mid > 127.0 ? mid - rng.uniform(60.0, 90.0) : mid + rng.uniform(60.0, 90.0);
    }
    const double bg_freq = rng.uniform(0.03, 0.09);
    const double bg_phase = rng.uniform(0.0, 6.28);

    SyntheticSequence out;
    out.frames.reserve(static_cast<size_t>(cfg.length));
    out.boxes.reserve(static_cast<size_t>(cfg.length));
    out.masks.reserve(static_cast<size_t>(cfg.length));

    for (int t = 0; t < cfg.length; ++t) {
        Rng noise_rng(Rng::derive(seed, 0xF00D, static_cast<uint64_t>(t)));
        Image img = Image::blank(cfg.frame_h, cfg.frame_w);
        for (int y = 0; y < cfg.frame_h; ++y) {
            const double gy = static_cast<double>(y) / cfg.frame_h;
            for (int x = 0; x < cfg.frame_w; ++x) {
                const double gx = static_cast<double>(x) / cfg.frame_w;
                const double mix =
                    0.5 + 0.25 * (gx + gy) -
                    0.25 * std::sin(bg_freq * (x + y) + bg_phase) *
                        std::cos(bg_freq * 1.7 * (x - y));
                for (int c = 0; c < 3; ++c) {
                    const double base = bg0[static_cast<size_t>(c)] * (1.0 - mix) +
                                        bg1[static_cast<size_t>(c)] * mix;
                    const double n = cfg.noise * 255.0 * noise_rng.normal();
                    img.at(y, x, c) = clamp_u8(base + n);
                }
            }
        }

        std::vector<uint8_t> mask(static_cast<size_t>(cfg.frame_w) * cfg.frame_h, 0);
        if (distractor) paint_object(img, nullptr, *distractor, cfg, noise_rng);
        // Target painted last so occlusion never hides it completely.
        paint_object(img, &mask, target, cfg, noise_rng);

        out.boxes.push_back(mask_bounds(mask, cfg.frame_w, cfg.frame_h));
        out.frames.push_back(std::move(img));
        out.masks.push_back(std::move(mask));

        advance_object(target, cfg, rng);
        if (distractor) advance_object(*distractor, cfg, rng);
    }
    return out;
}

std::optional<TrainingPair> sample_training_pair(const SyntheticSequence& seq,
                                                 const AugmentConfig& aug, uint64_t seed) {
    MAPNET_REQUIRE(!seq.frames.empty() && seq.frames.size() == seq.boxes.size(),
                   "sample_training_pair: annotated sequence required");
    Rng rng(Rng::derive(seed, 0x5A3E));
    const int n = static_cast<int>(seq.frames.size());
    const int ti = rng.uniform_int(0, n - 1);
    const int si = aug.still_image ? ti : rng.uniform_int(0, n - 1);

    const Box& tbox = seq.boxes[static_cast<size_t>(ti)];
    const Box& sbox = seq.boxes[static_cast<size_t>(si)];

    auto [tpatch, tgeo] = crop_patch(seq.frames[static_cast<size_t>(ti)], tbox,
                                     aug.template_area, aug.template_size, aug.pad_fill01,
                                     PatchRole::template_patch);
    (void)tgeo;

    const double base_side = aug.search_area * std::sqrt(sbox.width() * sbox.height());
    for (int attempt = 0; attempt < 8; ++attempt) {
        const double scale =
            rng.uniform(1.0 / (1.0 + aug.scale_jitter), 1.0 + aug.scale_jitter);
        const double side = base_side * scale;
        const double cx = sbox.cx() + rng.uniform(-aug.shift_frac, aug.shift_frac) * side;
        const double cy = sbox.cy() + rng.uniform(-aug.shift_frac, aug.shift_frac) * side;
        auto [spatch, sgeo] = crop_region(seq.frames[static_cast<size_t>(si)], cx, cy, side,
                                          aug.search_size, aug.pad_fill01,
                                          PatchRole::search_patch);
        Box gt = encode_box(sbox, sgeo);
        if (gt.x2 <= 0.0 || gt.x1 >= 1.0 || gt.y2 <= 0.0 || gt.y1 >= 1.0) continue;
        TrainingPair pair;
        pair.template01 = std::move(tpatch.pixels01);
        pair.search01 = std::move(spatch.pixels01);
        pair.gt_norm = gt;
        return pair;
    }
    return std::nullopt;
}

void write_sequence_dir(const std::string& dir, const SyntheticSequence& seq) {
    fs::create_directories(fs::path(dir) / "frames");
    std::ofstream gt(fs::path(dir) / "groundtruth.txt");
    if (!gt) throw DataError("cannot write " + dir + "/groundtruth.txt");
    char name[32];
    for (size_t i = 0; i < seq.frames.size(); ++i) {
        std::snprintf(name, sizeof(name), "%08zu.png", i + 1);
        save_png((fs::path(dir) / "frames" / name).string(), seq.frames[i]);
        const Box& b = seq.boxes[i];
        char line[128];
        std::snprintf(line, sizeof(line), "%.3f,%.3f,%.3f,%.3f\n", b.x1, b.y1, b.width(),
                      b.height());
        gt << line;
    }
}

SequenceDir load_sequence_dir(const std::string& dir) {
    SequenceDir out;
    out.name = fs::path(dir).filename().string();
    const fs::path gt_path = fs::path(dir) / "groundtruth.txt";
    std::ifstream gt(gt_path);
    if (!gt) throw DataError("missing ground truth: " + gt_path.string());
    std::string line;
    while (std::getline(gt, line)) {
        if (line.empty()) continue;
        double x, y, w, h;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &x, &y, &w, &h) != 4)
            throw DataError("malformed ground-truth line in " + gt_path.string() + ": " + line);
        out.boxes.push_back(Box::from_xywh(x, y, w, h));
    }

    const fs::path frames = fs::path(dir) / "frames";
    if (!fs::is_directory(frames)) throw DataError("missing frames directory: " + frames.string());
    for (const auto& e : fs::directory_iterator(frames)) {
        if (e.path().extension() == ".png") out.frame_paths.push_back(e.path().string());
    }
    std::sort(out.frame_paths.begin(), out.frame_paths.end());
    if (out.frame_paths.empty()) throw DataError("no frames in " + frames.string());
    if (out.frame_paths.size() != out.boxes.size())
        throw DataError("frame/annotation count mismatch in " + dir);
    return out;
}

std::vector<std::string> list_sequence_dirs(const std::string& dataset_root) {
    if (!fs::is_directory(dataset_root))
        throw DataError("dataset root is not a directory: " + dataset_root);
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(dataset_root)) {
        if (e.is_directory() && fs::exists(e.path() / "frames")) dirs.push_back(e.path().string());
    }
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

}  // namespace mapnet
