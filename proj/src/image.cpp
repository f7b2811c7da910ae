#include "paon/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace paon {

ImageU8 ImageU8::crop(int y0, int x0, int h, int w) const {
    if (y0 < 0 || x0 < 0 || y0 + h > height || x0 + w > width)
        throw UsageError("crop window out of bounds");
    ImageU8 out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.px(y, x, c) = px(y0 + y, x0 + x, c);
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw IoError(path + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": libpng initialization failed");
    }
    std::vector<png_bytep> rows;
    ImageU8 img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": malformed PNG");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": unsupported bit depth 16 (only 8-bit RGB/RGBA)");
    }
    if (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_RGB_ALPHA) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path + ": unsupported color type (only 8-bit RGB/RGBA)");
    }
    if (color == PNG_COLOR_TYPE_RGB_ALPHA) png_set_strip_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.data.resize(static_cast<size_t>(img.width) * img.height * 3);
    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.data.data() + static_cast<size_t>(y) * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const ImageU8& img, const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path + ": PNG write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.data.data() +
                                        static_cast<size_t>(y) * img.width * 3);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor to_model_range(const ImageU8& img) {
    Tensor t{Shape(1, 3, img.height, img.width)};
    float* d = t.data();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                *d++ = static_cast<float>(img.px(y, x, c)) / 127.5f - 1.0f;
    return t;
}

ImageU8 from_model_range(const Tensor& t) {
    const Shape s = t.shape();
    if (s.n != 1 || s.c != 3)
        throw UsageError("from_model_range expects a (1,3,H,W) tensor, got " + s.str());
    ImageU8 img(s.w, s.h);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                float v = t.at(0, c, y, x);
                v = v < -1.0f ? -1.0f : v > 1.0f ? 1.0f : v;
                img.px(y, x, c) = static_cast<std::uint8_t>(
                    std::lround((static_cast<double>(v) + 1.0) * 127.5));
            }
    return img;
}

namespace {

// Catmull-Rom kernel, a = -0.5.
double cubic_weight(double t) {
    t = std::fabs(t);
    if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0);
    return 0.0;
}

int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// One separable pass along a line family of length `in_len` to `out_len`.
// src(line, i) reads, dst(line, o, value) writes.
template <class Src, class Dst>
void resample_axis(int lines, int in_len, int out_len, Src src, Dst dst) {
    const double ratio = static_cast<double>(in_len) / out_len;
    for (int o = 0; o < out_len; ++o) {
        const double center = (o + 0.5) * ratio - 0.5;
        const int base = static_cast<int>(std::floor(center));
        double w[4], wsum = 0.0;
        for (int k = 0; k < 4; ++k) {
            w[k] = cubic_weight(center - (base - 1 + k));
            wsum += w[k];
        }
        for (int k = 0; k < 4; ++k) w[k] /= wsum;
        int idx[4];
        for (int k = 0; k < 4; ++k) idx[k] = reflect(base - 1 + k, in_len);
        for (int line = 0; line < lines; ++line) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) acc += w[k] * src(line, idx[k]);
            dst(line, o, acc);
        }
    }
}

}  // namespace

ImageU8 bicubic_resize(const ImageU8& img, double scale) {
    if (!(scale > 0.0)) throw UsageError("bicubic_resize: scale must be positive");
    const int ow = static_cast<int>(std::floor(img.width * scale));
    const int oh = static_cast<int>(std::floor(img.height * scale));
    if (ow < 1 || oh < 1)
        throw UsageError("bicubic_resize: output dimension would be below 1");
    if (ow == img.width && oh == img.height) {
        // scale 1 is the identity
        ImageU8 same = img;
        return same;
    }

    ImageU8 out(ow, oh);
    for (int c = 0; c < 3; ++c) {
        // horizontal pass: (H, W) -> (H, ow), kept in double
        std::vector<double> mid(static_cast<size_t>(img.height) * ow);
        resample_axis(
            img.height, img.width, ow,
            [&](int line, int i) { return static_cast<double>(img.px(line, i, c)); },
            [&](int line, int o, double v) { mid[static_cast<size_t>(line) * ow + o] = v; });
        // vertical pass: (H, ow) -> (oh, ow)
        resample_axis(
            ow, img.height, oh,
            [&](int line, int i) { return mid[static_cast<size_t>(i) * ow + line]; },
            [&](int line, int o, double v) {
                const double r = std::lround(v < 0.0 ? 0.0 : v > 255.0 ? 255.0 : v);
                out.px(o, line, c) = static_cast<std::uint8_t>(r);
            });
    }
    return out;
}

}  // namespace paon
