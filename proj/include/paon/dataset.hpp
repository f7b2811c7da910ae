#pragma once

#include <string>
#include <vector>

#include "paon/image.hpp"

namespace paon {

struct ImageSet {
    std::vector<ImageU8> images;
    std::vector<std::string> names;

    bool empty() const { return images.empty(); }
    size_t size() const { return images.size(); }
};

// All PNGs under `dir`, sorted by filename.
ImageSet load_image_dir(const std::string& dir);

// Band-limited color textures: sums of oriented sinusoids with spatial
// frequencies up to ~0.23 cycles/px, so a x2 downscale loses recoverable
// high-band detail. Deterministic in (count, size, seed).
ImageSet synth_textures(int count, int size, std::uint64_t seed);

// Writes `set` as <root>/HR/*.png.
void write_image_set(const ImageSet& set, const std::string& root);

}  // namespace paon
