#include "paon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

namespace paon {

double psnr_rgb(const ImageU8& a, const ImageU8& b) {
    if (a.width != b.width || a.height != b.height)
        throw UsageError("psnr_rgb: image dimensions differ (" +
                         std::to_string(a.width) + "x" + std::to_string(a.height) +
                         " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height) + ")");
    double sq = 0.0;
    const size_t n = a.data.size();
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        sq += d * d;
    }
    if (sq == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sq / static_cast<double>(n);
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

namespace {

std::vector<double> to_luma(const ImageU8& img) {
    std::vector<double> y(static_cast<size_t>(img.width) * img.height);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            y[static_cast<size_t>(r) * img.width + c] = 0.299 * img.px(r, c, 0) +
                                                        0.587 * img.px(r, c, 1) +
                                                        0.114 * img.px(r, c, 2);
    return y;
}

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
    std::array<double, kWin> g{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
}

// Separable valid-mode Gaussian filtering: (H, W) -> (H - 10, W - 10).
std::vector<double> blur_valid(const std::vector<double>& src, int H, int W) {
    static const std::array<double, kWin> g = gaussian_window();
    const int ow = W - kWin + 1, oh = H - kWin + 1;
    std::vector<double> mid(static_cast<size_t>(H) * ow);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < ow; ++c) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) acc += g[k] * src[static_cast<size_t>(r) * W + c + k];
            mid[static_cast<size_t>(r) * ow + c] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) acc += g[k] * mid[static_cast<size_t>(r + k) * ow + c];
            out[static_cast<size_t>(r) * ow + c] = acc;
        }
    return out;
}

}  // namespace

double ssim_y(const ImageU8& a, const ImageU8& b) {
    if (a.width != b.width || a.height != b.height)
        throw UsageError("ssim_y: image dimensions differ");
    if (a.width < kWin || a.height < kWin)
        throw UsageError("ssim_y: images must be at least 11x11");

    const int H = a.height, W = a.width;
    std::vector<double> ya = to_luma(a), yb = to_luma(b);
    std::vector<double> ya2(ya.size()), yb2(ya.size()), yab(ya.size());
    for (size_t i = 0; i < ya.size(); ++i) {
        ya2[i] = ya[i] * ya[i];
        yb2[i] = yb[i] * yb[i];
        yab[i] = ya[i] * yb[i];
    }
    const auto mu_a = blur_valid(ya, H, W);
    const auto mu_b = blur_valid(yb, H, W);
    const auto e_a2 = blur_valid(ya2, H, W);
    const auto e_b2 = blur_valid(yb2, H, W);
    const auto e_ab = blur_valid(yab, H, W);

    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_a2[i] - mu_a[i] * mu_a[i];
        const double vb = e_b2[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        acc += (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

EvalResult evaluate(const SrFunction& sr, const std::string& dataset_dir, int upscale) {
    namespace fs = std::filesystem;
    const fs::path hr_dir = fs::path(dataset_dir) / "HR";
    if (!fs::is_directory(hr_dir))
        throw UsageError("evaluate: missing HR directory under " + dataset_dir);
    const fs::path lr_dir = fs::path(dataset_dir) / ("LRx" + std::to_string(upscale));
    const bool have_lr = fs::is_directory(lr_dir);

    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(hr_dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw UsageError("evaluate: no PNG images in " + hr_dir.string());

    const std::string dataset_name = fs::path(dataset_dir).filename().string();
    EvalResult result;
    for (const auto& name : names) {
        ImageU8 hr = load_png((hr_dir / name).string());
        ImageU8 lr;
        if (have_lr) {
            lr = load_png((lr_dir / name).string());
        } else {
            hr = hr.crop(0, 0, hr.height / upscale * upscale, hr.width / upscale * upscale);
            lr = bicubic_resize(hr, 1.0 / upscale);
        }
        // crop HR to the region the SR output covers
        hr = hr.crop(0, 0, lr.height * upscale, lr.width * upscale);
        ImageU8 out = sr(lr);
        if (out.width != hr.width || out.height != hr.height)
            throw UsageError("evaluate: SR output " + std::to_string(out.width) + "x" +
                             std::to_string(out.height) + " does not match HR for " + name);
        EvalRecord rec;
        rec.dataset = dataset_name;
        rec.image = name;
        rec.psnr = psnr_rgb(out, hr);
        rec.ssim = ssim_y(out, hr);
        result.records.push_back(std::move(rec));
    }
    for (const auto& r : result.records) {
        result.mean_psnr += r.psnr;
        result.mean_ssim += r.ssim;
    }
    result.mean_psnr /= static_cast<double>(result.records.size());
    result.mean_ssim /= static_cast<double>(result.records.size());
    return result;
}

namespace {

std::string metric_str(double v) {
    char buf[48];
    if (std::isinf(v)) return "inf";
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string eval_csv_string(const EvalResult& result) {
    std::string out = "dataset,image,psnr,ssim\n";
    for (const auto& r : result.records)
        out += r.dataset + "," + r.image + "," + metric_str(r.psnr) + "," +
               metric_str(r.ssim) + "\n";
    if (!result.records.empty())
        out += result.records.front().dataset + ",MEAN," + metric_str(result.mean_psnr) +
               "," + metric_str(result.mean_ssim) + "\n";
    return out;
}

void write_eval_csv(const EvalResult& result, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot write " + tmp);
        f << eval_csv_string(result);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace paon
