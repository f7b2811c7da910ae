// Scalar reference implementations of the fidelity metrics, written directly
// from the definitions with per-window loops. Independent of src/metrics.cpp
// (which uses separable filtering).
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "paon/image.hpp"

namespace oracle {

inline double ref_psnr_rgb(const paon::ImageU8& a, const paon::ImageU8& b) {
    double sq = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        sq += d * d;
    }
    if (sq == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / (sq / double(a.data.size())));
}

inline double ref_ssim_y(const paon::ImageU8& a, const paon::ImageU8& b) {
    const int H = a.height, W = a.width;
    auto luma = [](const paon::ImageU8& img, int y, int x) {
        return 0.299 * img.px(y, x, 0) + 0.587 * img.px(y, x, 1) +
               0.114 * img.px(y, x, 2);
    };
    // 11x11 Gaussian, sigma 1.5, normalized in 2D
    double w[11][11], wsum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double dy = i - 5.0, dx = j - 5.0;
            w[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
            wsum += w[i][j];
        }
    for (auto& row : w)
        for (auto& v : row) v /= wsum;

    const double c1 = 6.5025, c2 = 58.5225;  // (0.01*255)^2, (0.03*255)^2
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + 11 <= H; ++y)
        for (int x = 0; x + 11 <= W; ++x) {
            double mu1 = 0, mu2 = 0, e11 = 0, e22 = 0, e12 = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double p = luma(a, y + i, x + j);
                    const double q = luma(b, y + i, x + j);
                    mu1 += w[i][j] * p;
                    mu2 += w[i][j] * q;
                    e11 += w[i][j] * p * p;
                    e22 += w[i][j] * q * q;
                    e12 += w[i][j] * p * q;
                }
            const double v1 = e11 - mu1 * mu1, v2 = e22 - mu2 * mu2;
            const double cov = e12 - mu1 * mu2;
            acc += (2 * mu1 * mu2 + c1) * (2 * cov + c2) /
                   ((mu1 * mu1 + mu2 * mu2 + c1) * (v1 + v2 + c2));
            ++count;
        }
    return acc / count;
}

}  // namespace oracle
