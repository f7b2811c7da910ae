#pragma once

#include <functional>
#include <string>
#include <vector>

#include "paon/image.hpp"

namespace paon {

// 10*log10(255^2 / MSE) over all RGB samples; +inf for identical images.
double psnr_rgb(const ImageU8& a, const ImageU8& b);

// SSIM on the BT.601 full-range Y channel: 11x11 Gaussian window sigma 1.5,
// K1 = 0.01, K2 = 0.03, L = 255, averaged over valid window positions.
double ssim_y(const ImageU8& a, const ImageU8& b);

struct EvalRecord {
    std::string dataset;
    std::string image;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalResult {
    std::vector<EvalRecord> records;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

using SrFunction = std::function<ImageU8(const ImageU8& lr)>;

// Runs `sr` on every image of `<dataset_dir>/HR/*.png` (LR loaded from
// LRx{2,4}/ when present, synthesized by bicubic downscale otherwise) and
// scores PSNR/SSIM against the HR images, in filename order.
EvalResult evaluate(const SrFunction& sr, const std::string& dataset_dir, int upscale);

// CSV rows `dataset,image,psnr,ssim` plus a final MEAN row.
void write_eval_csv(const EvalResult& result, const std::string& path);
std::string eval_csv_string(const EvalResult& result);

}  // namespace paon
