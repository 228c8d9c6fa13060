#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mapnet/heads.hpp"

namespace mapnet {

// 8-bit RGB image, row-major.
struct Image {
    int height = 0, width = 0;
    std::vector<uint8_t> rgb;  // height * width * 3

    static Image blank(int h, int w, uint8_t r = 0, uint8_t g = 0, uint8_t b = 0);
    uint8_t& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    uint8_t at(int y, int x, int c) const {
        return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
};

Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& img);

enum class PatchRole { template_patch, search_patch };

struct ImagePatch {
    Tensor pixels01;  // {S,S,3}, values in [0,1]
    PatchRole role = PatchRole::search_patch;
};

// Square crop centered on the box center with side = area_factor*sqrt(w*h),
// bilinearly resized to out_size; out-of-frame samples take pad_fill01.
std::pair<ImagePatch, CropGeometry> crop_patch(const Image& frame, const Box& box,
                                               double area_factor, int out_size,
                                               const std::array<double, 3>& pad_fill01,
                                               PatchRole role = PatchRole::search_patch);

// Crop defined by an explicit center/side (used by augmentation jitter).
std::pair<ImagePatch, CropGeometry> crop_region(const Image& frame, double cx, double cy,
                                                double side, int out_size,
                                                const std::array<double, 3>& pad_fill01,
                                                PatchRole role = PatchRole::search_patch);

}  // namespace mapnet
