#include "paon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace paon {

ImageSet load_image_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir);
    ImageSet set;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            set.names.push_back(e.path().filename().string());
    std::sort(set.names.begin(), set.names.end());
    for (const auto& n : set.names)
        set.images.push_back(load_png((fs::path(dir) / n).string()));
    return set;
}

ImageSet synth_textures(int count, int size, std::uint64_t seed) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    ImageSet set;
    for (int idx = 0; idx < count; ++idx) {
        Rng rng(derive_seed(seed, 0x7465780aULL, static_cast<std::uint64_t>(idx)));
        const int K = 8;
        struct Component {
            double fy, fx, phase, amp, gain[3];
        };
        std::vector<Component> comps(K);
        for (auto& c : comps) {
            // bias towards lower frequencies, reach up near 0.23 cycles/px
            const double u = rng.uniform();
            const double freq = 0.04 + 0.19 * u * u;
            const double theta = rng.uniform(0.0, two_pi);
            c.fy = freq * std::sin(theta);
            c.fx = freq * std::cos(theta);
            c.phase = rng.uniform(0.0, two_pi);
            c.amp = rng.uniform(0.3, 1.0);
            for (double& g : c.gain) g = rng.uniform(0.4, 1.0);
        }

        std::vector<double> vals(static_cast<size_t>(size) * size * 3);
        double max_abs = 1e-9;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double base[3] = {0, 0, 0};
                for (const auto& c : comps) {
                    const double v =
                        c.amp * std::cos(two_pi * (c.fy * y + c.fx * x) + c.phase);
                    for (int ch = 0; ch < 3; ++ch) base[ch] += c.gain[ch] * v;
                }
                for (int ch = 0; ch < 3; ++ch) {
                    vals[(static_cast<size_t>(y) * size + x) * 3 + ch] = base[ch];
                    max_abs = std::max(max_abs, std::fabs(base[ch]));
                }
            }

        ImageU8 img(size, size);
        const double scale = 112.0 / max_abs;
        for (size_t i = 0; i < vals.size(); ++i) {
            const double v = 128.0 + scale * vals[i];
            img.data[i] = static_cast<std::uint8_t>(
                std::lround(v < 0.0 ? 0.0 : v > 255.0 ? 255.0 : v));
        }
        set.images.push_back(std::move(img));
        char name[32];
        std::snprintf(name, sizeof(name), "tex%03d.png", idx);
        set.names.push_back(name);
    }
    return set;
}

void write_image_set(const ImageSet& set, const std::string& root) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(root) / "HR");
    for (size_t i = 0; i < set.images.size(); ++i)
        save_png(set.images[i], (fs::path(root) / "HR" / set.names[i]).string());
}

}  // namespace paon
