#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paon/network.hpp"
#include "paon/training.hpp"

namespace paon {

// Portable binary checkpoint. Fixed little-endian layout:
//   magic "PAON1" | u32 version | u64 config_len | config bytes
//   | u64 fnv1a64(config) | u32 param_count | entries | u32 state_count
//   | entries | f32 best_val_psnr
// where each entry is u32 name_len | name | u32 shape[4] | f32 data[numel].
struct TensorEntry {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::string config_json;  // canonical textual config
    std::vector<TensorEntry> params;
    std::vector<TensorEntry> opt_state;  // includes trainer bookkeeping
    float best_val_psnr = -1.0f;

    std::int64_t trainer_iter() const;
};

std::uint64_t fnv1a64(const std::string& s);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot of network parameters plus (optionally) optimizer state.
Checkpoint make_checkpoint(const SrNetwork& net, const Optimizer* opt,
                           float best_val_psnr, std::int64_t iter,
                           const std::string& config_json);

// Restores parameters by name into an already-built network; shapes must
// match. Returns the stored iteration counter.
std::int64_t load_into(SrNetwork& net, Optimizer* opt, const Checkpoint& ckpt);

}  // namespace paon
