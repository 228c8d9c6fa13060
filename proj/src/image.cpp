#include "mapnet/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "mapnet/common.hpp"

namespace mapnet {

Image Image::blank(int h, int w, uint8_t r, uint8_t g, uint8_t b) {
    Image img;
    img.height = h;
    img.width = w;
    img.rgb.resize(static_cast<size_t>(h) * w * 3);
    for (size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = r;
        img.rgb[i + 1] = g;
        img.rgb[i + 2] = b;
    }
    return img;
}

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

Image load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng init failed reading " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt PNG file: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    Image img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = img.rgb.data() + static_cast<size_t>(y) * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const std::string& path, const Image& img) {
    MAPNET_REQUIRE(img.height > 0 && img.width > 0 &&
                       img.rgb.size() == static_cast<size_t>(img.height) * img.width * 3,
                   "save_png: malformed image");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot write PNG file: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng init failed writing " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(img.rgb.data() + static_cast<size_t>(y) * img.width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::pair<ImagePatch, CropGeometry> crop_region(const Image& frame, double cx, double cy,
                                                double side, int out_size,
                                                const std::array<double, 3>& pad_fill01,
                                                PatchRole role) {
    MAPNET_REQUIRE(side > 0.0 && out_size > 0, "crop_region: side and out_size must be positive");
    CropGeometry geo{cx, cy, side, out_size, pad_fill01};

    ImagePatch patch;
    patch.role = role;
    patch.pixels01 = Tensor({out_size, out_size, 3});
    const double scale = geo.scale();
    const double ox = geo.origin_x(), oy = geo.origin_y();

    auto sample = [&](double sy, double sx, int c) -> double {
        // Bilinear with pad fill outside the frame.
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const double fx = sx - x0, fy = sy - y0;
        double acc = 0.0;
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                const int yy = y0 + dy, xx = x0 + dx;
                const double wgt = (dy == 0 ? 1.0 - fy : fy) * (dx == 0 ? 1.0 - fx : fx);
                const double v = (yy >= 0 && yy < frame.height && xx >= 0 && xx < frame.width)
                                     ? frame.at(yy, xx, c) / 255.0
                                     : pad_fill01[static_cast<size_t>(c)];
                acc += wgt * v;
            }
        }
        return acc;
    };

    for (int y = 0; y < out_size; ++y) {
        const double sy = oy + (y + 0.5) * scale - 0.5;
        for (int x = 0; x < out_size; ++x) {
            const double sx = ox + (x + 0.5) * scale - 0.5;
            for (int c = 0; c < 3; ++c) patch.pixels01.at(y, x, c) = sample(sy, sx, c);
        }
    }
    return {std::move(patch), geo};
}

std::pair<ImagePatch, CropGeometry> crop_patch(const Image& frame, const Box& box,
                                               double area_factor, int out_size,
                                               const std::array<double, 3>& pad_fill01,
                                               PatchRole role) {
    if (box.area() <= 0.0) throw DataError("crop_patch: zero-area box");
    const double side = area_factor * std::sqrt(box.width() * box.height());
    return crop_region(frame, box.cx(), box.cy(), side, out_size, pad_fill01, role);
}

}  // namespace mapnet
