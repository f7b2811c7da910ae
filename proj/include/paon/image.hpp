#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paon/tensor.hpp"

namespace paon {

// 8-bit sRGB image, interleaved RGB rows.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // height * width * 3

    ImageU8() = default;
    ImageU8(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0) {}

    std::uint8_t& px(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t px(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }

    ImageU8 crop(int y0, int x0, int h, int w) const;
};

// Lossless 8-bit RGB(A) PNG round trip; alpha is dropped on load. 16-bit and
// non-RGB color types are rejected with an explicit error.
ImageU8 load_png(const std::string& path);
void save_png(const ImageU8& img, const std::string& path);

// u8 [0,255] <-> model range [-1,1]: x/127.5 - 1, inverse clamps and rounds
// half away from zero.
Tensor to_model_range(const ImageU8& img);
ImageU8 from_model_range(const Tensor& t);

// Catmull-Rom bicubic (a = -0.5), half-pixel-center alignment, reflected
// boundary. Output dims are floor(dim * scale).
ImageU8 bicubic_resize(const ImageU8& img, double scale);

}  // namespace paon
