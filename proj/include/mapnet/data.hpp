#pragma once

#include <optional>

#include "mapnet/image.hpp"
#include "mapnet/rng.hpp"

namespace mapnet {

// Seeded moving-object sequences standing in for real tracking footage.
// One textured object (plus an optional distractor) drifts over a textured
// background with velocity jitter and a slow log-scale random walk.
struct SyntheticSequenceConfig {
    int frame_w = 128, frame_h = 128;
    int length = 40;
    enum class Shape { rectangle, ellipse } shape = Shape::rectangle;
    double min_side = 18.0, max_side = 34.0;  // initial object side range, px
    double speed = 2.5;                       // mean velocity magnitude, px/frame
    double jitter = 0.8;                      // velocity noise, px/frame
    double scale_drift = 0.01;                // log-scale random walk step
    double aspect_min = 0.7, aspect_max = 1.4;
    bool distractor = false;  // second moving object that may occlude
    double noise = 0.015;     // per-pixel appearance noise (fraction of 255)
};

struct SyntheticSequence {
    std::vector<Image> frames;
    std::vector<Box> boxes;                 // tight mask bounds, image pixels
    std::vector<std::vector<uint8_t>> masks;  // per-frame object mask (H*W)
};

SyntheticSequence generate_synthetic_sequence(const SyntheticSequenceConfig& cfg, uint64_t seed);

// Template/search pair sampling with shift/scale augmentation on the search
// crop. The ground truth comes back in the search patch's normalized frame.
struct AugmentConfig {
    double template_area = 2.0;
    double search_area = 4.0;
    int template_size = 128;
    int search_size = 256;
    double shift_frac = 0.18;     // crop-center jitter, fraction of crop side
    double scale_jitter = 0.25;   // crop-side multiplier in [1/(1+s), 1+s]
    bool still_image = false;     // template and search from the same frame
    std::array<double, 3> pad_fill01{0.485, 0.456, 0.406};
};

struct TrainingPair {
    Tensor template01;  // {T,T,3}
    Tensor search01;    // {S,S,3}
    Box gt_norm;        // normalized search frame
};

// Returns nullopt when repeated jitter draws cannot keep the target inside
// the crop (callers resample with a new seed).
std::optional<TrainingPair> sample_training_pair(const SyntheticSequence& seq,
                                                 const AugmentConfig& aug, uint64_t seed);

// Sequence directory format shared by training and evaluation:
//   <dir>/frames/%08d.png and <dir>/groundtruth.txt ("x,y,w,h" per line).
void write_sequence_dir(const std::string& dir, const SyntheticSequence& seq);

struct SequenceDir {
    std::string name;
    std::vector<std::string> frame_paths;
    std::vector<Box> boxes;
};

SequenceDir load_sequence_dir(const std::string& dir);
std::vector<std::string> list_sequence_dirs(const std::string& dataset_root);

}  // namespace mapnet
