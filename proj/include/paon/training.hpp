#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paon/dataset.hpp"
#include "paon/network.hpp"

namespace paon {

enum class OptimizerKind { adan, adam };

struct TrainConfig {
    int patch = 64;
    int batch = 25;
    std::int64_t iterations = 500000;
    double lr_init = 1e-3;
    double lr_final = 1e-6;
    double loss_alpha = 1.5;
    double loss_c = 2.0;
    double noise_snr_db = 40.0;
    int upscale = 2;
    std::uint64_t seed = 1;
    bool augment = true;
    std::int64_t val_interval = 1000;
    OptimizerKind optimizer = OptimizerKind::adan;

    void validate() const {
        if (!(lr_final < lr_init))
            throw ConfigError("lr_final must be below lr_init");
        if (patch % upscale != 0)
            throw ConfigError("patch size " + std::to_string(patch) +
                              " must be divisible by upscale " + std::to_string(upscale));
        if (batch < 1 || iterations < 1 || val_interval < 1)
            throw ConfigError("batch, iterations and val_interval must be positive");
    }
};

// Mean robust loss over elements of (pred - target).
Tensor barron_loss(const Tensor& pred, const Tensor& target, double alpha = 1.5,
                   double c = 2.0);

// lr_final + 0.5 (lr_init - lr_final) (1 + cos(pi step/total)); endpoints exact.
double cosine_lr(std::int64_t step, std::int64_t total, double lr_init, double lr_final);

// Three-moment optimizer (gradient momentum, gradient-difference momentum,
// second moment) with bias correction, betas (0.98, 0.92, 0.99), eps 1e-8,
// decoupled weight decay 0; plus a two-moment fallback for cross-checking.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, const std::vector<NamedParam>& params);

    // Reads accumulated gradients, updates parameter values in place, then
    // clears the gradients.
    void step(std::vector<NamedParam>& params, double lr);

    std::int64_t step_count() const { return step_count_; }

    // Serialized as named state tensors aligned with the parameter names.
    std::vector<NamedParam> state_entries(const std::vector<NamedParam>& params) const;
    void load_state(const std::vector<NamedParam>& params,
                    const std::vector<std::pair<std::string, std::vector<float>>>& entries);

    OptimizerKind kind() const { return kind_; }

private:
    OptimizerKind kind_;
    std::int64_t step_count_ = 0;
    std::vector<std::vector<float>> m_, v_, n_, prev_grad_;
};

// --- Augmentation and degradation --------------------------------------------

ImageU8 rot90(const ImageU8& img, int quarter_turns);
ImageU8 flip_h(const ImageU8& img);
ImageU8 flip_v(const ImageU8& img);
ImageU8 permute_channels(const ImageU8& img, const int perm[3]);

// Random 90-degree rotation, horizontal/vertical flips, color channel
// shuffle. Requires a square patch.
ImageU8 augment(const ImageU8& hr_patch, Rng& rng);

// Additive white Gaussian noise at the given SNR; noise variance is
// signal_power / 10^(snr_db/10) with signal power the mean squared value.
// A zero-power patch is returned unchanged.
Tensor add_noise_snr(const Tensor& patch, double snr_db, Rng& rng);

// --- Training loop -------------------------------------------------------------

struct SamplePair {
    Tensor lr;  // (1, 3, p/s, p/s)
    Tensor hr;  // (1, 3, p, p)
};

// Deterministic in (cfg.seed, iter, slot): crop + augment + bicubic LR
// synthesis + LR noise injection.
SamplePair sample_pair(const ImageSet& train, const TrainConfig& cfg,
                       std::int64_t iter, int slot);

// Mean PSNR of the clamped SR output over a validation set (LR synthesized
// by bicubic downscale).
double validation_psnr(const SrNetwork& net, const ImageSet& val, int upscale);

struct TrainResult {
    float best_val_psnr = -1.0f;
    float final_val_psnr = -1.0f;
    float initial_loss = 0.0f;
    float final_loss = 0.0f;
    std::int64_t iterations_run = 0;
};

// Runs the iteration loop (sample, augment, noise, forward, robust loss,
// backward, optimizer step, cosine schedule), appending one metrics row per
// iteration and checkpointing best/final into out_dir.
// Aborts with NumericError naming the first non-finite layer if the loss
// leaves the finite range. `stop_iter` > 0 interrupts the run early while
// keeping cfg.iterations as the schedule horizon (resumable from final.ckpt).
TrainResult train(SrNetwork& net, const ImageSet& train_set, const ImageSet& val_set,
                  const TrainConfig& cfg, const std::string& out_dir,
                  std::int64_t start_iter = 0, Optimizer* resume_opt = nullptr,
                  float resume_best = -1.0f, bool quiet = false,
                  std::int64_t stop_iter = 0);

}  // namespace paon
