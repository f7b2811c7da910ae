#pragma once

#include <string>

#include "paon/network.hpp"
#include "paon/training.hpp"

namespace paon {

// A training/eval run as described by a config file. Unknown keys anywhere in
// the file are rejected.
struct RunConfig {
    NetworkConfig network;
    TrainConfig train;

    enum class DatasetKind { synthetic, dir };
    DatasetKind dataset_kind = DatasetKind::synthetic;
    int synth_train_count = 40;
    int synth_val_count = 10;
    int synth_size = 32;
    std::uint64_t synth_seed = 7;
    std::string train_dir;  // roots containing HR/ when dataset_kind == dir
    std::string val_dir;

    std::string out_dir = "run_out";

    ImageSet load_train_set() const;
    ImageSet load_val_set() const;
};

RunConfig parse_run_config_file(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);

// CI-scale preset: 1 block, 8 channels, x2, 500 iterations, 32x32 synthetic
// textures, validation every 100 iterations.
void apply_toy_overrides(RunConfig& cfg);

// Canonical textual form of the effective network + train configuration;
// embedded in checkpoints and hash-compared on resume.
std::string train_config_blob(const NetworkConfig& net, const TrainConfig& train);
void parse_config_blob(const std::string& blob, NetworkConfig& net, TrainConfig& train);

}  // namespace paon
