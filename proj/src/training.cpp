#include "paon/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "paon/checkpoint.hpp"
#include "paon/metrics.hpp"
#include "paon/runconfig.hpp"

namespace paon {

Tensor barron_loss(const Tensor& pred, const Tensor& target, double alpha, double c) {
    if (pred.shape() != target.shape())
        throw UsageError("barron_loss: shapes differ, " + pred.shape().str() +
                         " vs " + target.shape().str());
    return mean(barron_rho(sub(pred, target), alpha, c));
}

double cosine_lr(std::int64_t step, std::int64_t total, double lr_init, double lr_final) {
    if (step <= 0) return lr_init;
    if (step >= total) return lr_final;
    const double t = static_cast<double>(step) / static_cast<double>(total);
    return lr_final + 0.5 * (lr_init - lr_final) *
                          (1.0 + std::cos(3.14159265358979323846 * t));
}

// --- Optimizer -----------------------------------------------------------------

namespace {
constexpr double kAdanBeta1 = 0.98, kAdanBeta2 = 0.92, kAdanBeta3 = 0.99;
constexpr double kAdamBeta1 = 0.9, kAdamBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

Optimizer::Optimizer(OptimizerKind kind, const std::vector<NamedParam>& params)
    : kind_(kind) {
    for (const auto& p : params) {
        const size_t n = static_cast<size_t>(p.tensor.numel());
        m_.emplace_back(n, 0.0f);
        v_.emplace_back(n, 0.0f);
        if (kind_ == OptimizerKind::adan) {
            n_.emplace_back(n, 0.0f);
            prev_grad_.emplace_back(n, 0.0f);
        }
    }
}

void Optimizer::step(std::vector<NamedParam>& params, double lr) {
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    if (kind_ == OptimizerKind::adan) {
        const double bc1 = 1.0 - std::pow(kAdanBeta1, t);
        const double bc2 = 1.0 - std::pow(kAdanBeta2, t);
        const double bc3 = 1.0 - std::pow(kAdanBeta3, t);
        for (size_t i = 0; i < params.size(); ++i) {
            auto& tensor = params[i].tensor;
            auto& grad = tensor.grad();
            float* value = tensor.data();
            for (size_t j = 0; j < grad.size(); ++j) {
                const double g = grad[j];
                const double diff = step_count_ == 1 ? 0.0 : g - prev_grad_[i][j];
                const double m = kAdanBeta1 * m_[i][j] + (1.0 - kAdanBeta1) * g;
                const double v = kAdanBeta2 * v_[i][j] + (1.0 - kAdanBeta2) * diff;
                const double u = g + kAdanBeta2 * diff;
                const double n = kAdanBeta3 * n_[i][j] + (1.0 - kAdanBeta3) * u * u;
                const double denom = std::sqrt(n / bc3) + kEps;
                value[j] -= static_cast<float>(lr * (m / bc1 + kAdanBeta2 * v / bc2) / denom);
                m_[i][j] = static_cast<float>(m);
                v_[i][j] = static_cast<float>(v);
                n_[i][j] = static_cast<float>(n);
                prev_grad_[i][j] = static_cast<float>(g);
            }
            tensor.zero_grad();
        }
    } else {
        const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
        const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
        for (size_t i = 0; i < params.size(); ++i) {
            auto& tensor = params[i].tensor;
            auto& grad = tensor.grad();
            float* value = tensor.data();
            for (size_t j = 0; j < grad.size(); ++j) {
                const double g = grad[j];
                const double m = kAdamBeta1 * m_[i][j] + (1.0 - kAdamBeta1) * g;
                const double v = kAdamBeta2 * v_[i][j] + (1.0 - kAdamBeta2) * g * g;
                value[j] -= static_cast<float>(lr * (m / bc1) / (std::sqrt(v / bc2) + kEps));
                m_[i][j] = static_cast<float>(m);
                v_[i][j] = static_cast<float>(v);
            }
            tensor.zero_grad();
        }
    }
}

std::vector<NamedParam> Optimizer::state_entries(const std::vector<NamedParam>& params) const {
    const std::string prefix = kind_ == OptimizerKind::adan ? "adan." : "adam.";
    std::vector<NamedParam> out;
    auto push = [&](const std::string& tag, size_t i, const std::vector<float>& buf) {
        Tensor t = Tensor::from_data(params[i].tensor.shape(), buf);
        out.push_back({prefix + tag + "." + params[i].name, t});
    };
    for (size_t i = 0; i < params.size(); ++i) {
        push("m", i, m_[i]);
        push("v", i, v_[i]);
        if (kind_ == OptimizerKind::adan) {
            push("n", i, n_[i]);
            push("prev", i, prev_grad_[i]);
        }
    }
    Tensor step = Tensor::from_data(Shape(1, 1, 1, 1), {static_cast<float>(step_count_)});
    out.push_back({prefix + "step", step});
    return out;
}

void Optimizer::load_state(
    const std::vector<NamedParam>& params,
    const std::vector<std::pair<std::string, std::vector<float>>>& entries) {
    const std::string prefix = kind_ == OptimizerKind::adan ? "adan." : "adam.";
    auto find = [&](const std::string& name) -> const std::vector<float>* {
        for (const auto& e : entries)
            if (e.first == name) return &e.second;
        return nullptr;
    };
    const std::vector<float>* step = find(prefix + "step");
    if (!step || step->empty())
        throw ConfigError("checkpoint optimizer state does not match the configured " +
                          std::string(kind_ == OptimizerKind::adan ? "adan" : "adam") +
                          " optimizer");
    step_count_ = static_cast<std::int64_t>((*step)[0]);
    for (size_t i = 0; i < params.size(); ++i) {
        auto expect = [&](const char* tag, std::vector<float>& dst) {
            const auto* src = find(prefix + tag + "." + params[i].name);
            if (!src || src->size() != dst.size())
                throw ConfigError("checkpoint optimizer state missing entry for '" +
                                  params[i].name + "'");
            dst = *src;
        };
        expect("m", m_[i]);
        expect("v", v_[i]);
        if (kind_ == OptimizerKind::adan) {
            expect("n", n_[i]);
            expect("prev", prev_grad_[i]);
        }
    }
}

// --- Augmentation ----------------------------------------------------------------

ImageU8 rot90(const ImageU8& img, int quarter_turns) {
    const int k = ((quarter_turns % 4) + 4) % 4;
    if (k == 0) return img;
    ImageU8 out(k == 2 ? img.width : img.height, k == 2 ? img.height : img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                int ny, nx;
                if (k == 1) {  // 90 degrees counterclockwise
                    ny = img.width - 1 - x;
                    nx = y;
                } else if (k == 2) {
                    ny = img.height - 1 - y;
                    nx = img.width - 1 - x;
                } else {
                    ny = x;
                    nx = img.height - 1 - y;
                }
                out.px(ny, nx, c) = img.px(y, x, c);
            }
    return out;
}

ImageU8 flip_h(const ImageU8& img) {
    ImageU8 out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.px(y, img.width - 1 - x, c) = img.px(y, x, c);
    return out;
}

ImageU8 flip_v(const ImageU8& img) {
    ImageU8 out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.px(img.height - 1 - y, x, c) = img.px(y, x, c);
    return out;
}

ImageU8 permute_channels(const ImageU8& img, const int perm[3]) {
    ImageU8 out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.px(y, x, c) = img.px(y, x, perm[c]);
    return out;
}

ImageU8 augment(const ImageU8& hr_patch, Rng& rng) {
    if (hr_patch.width != hr_patch.height)
        throw UsageError("augment expects a square patch");
    static const int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                     {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    const int turns = static_cast<int>(rng.uniform_int(4));
    const bool hf = rng.uniform_int(2) != 0;
    const bool vf = rng.uniform_int(2) != 0;
    const int perm = static_cast<int>(rng.uniform_int(6));

    ImageU8 out = rot90(hr_patch, turns);
    if (hf) out = flip_h(out);
    if (vf) out = flip_v(out);
    if (perm != 0) out = permute_channels(out, kPerms[perm]);
    return out;
}

Tensor add_noise_snr(const Tensor& patch, double snr_db, Rng& rng) {
    double power = 0.0;
    const float* v = patch.data();
    const std::int64_t n = patch.numel();
    for (std::int64_t i = 0; i < n; ++i) power += static_cast<double>(v[i]) * v[i];
    power /= static_cast<double>(n);
    if (power == 0.0) return patch.clone();  // zero signal: nothing to scale against

    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    Tensor out{patch.shape()};
    float* o = out.data();
    for (std::int64_t i = 0; i < n; ++i)
        o[i] = v[i] + static_cast<float>(sigma * rng.normal());
    return out;
}

// --- Sampling and the training loop ----------------------------------------------

SamplePair sample_pair(const ImageSet& train, const TrainConfig& cfg,
                       std::int64_t iter, int slot) {
    Rng rng(derive_seed(cfg.seed, 0x5a6d70ULL, static_cast<std::uint64_t>(iter),
                        static_cast<std::uint64_t>(slot)));
    const int p = cfg.patch;
    const ImageU8& img = train.images[rng.uniform_int(train.size())];
    if (img.width < p || img.height < p)
        throw UsageError("patch size " + std::to_string(p) +
                         " exceeds training image " + std::to_string(img.width) + "x" +
                         std::to_string(img.height));
    const int y0 = static_cast<int>(rng.uniform_int(img.height - p + 1));
    const int x0 = static_cast<int>(rng.uniform_int(img.width - p + 1));
    ImageU8 hr = img.crop(y0, x0, p, p);
    if (cfg.augment) hr = augment(hr, rng);
    ImageU8 lr = bicubic_resize(hr, 1.0 / cfg.upscale);

    SamplePair pair;
    pair.hr = to_model_range(hr);
    pair.lr = add_noise_snr(to_model_range(lr), cfg.noise_snr_db, rng);
    return pair;
}

namespace {

Tensor stack_batch(const std::vector<Tensor>& items) {
    const Shape s = items.front().shape();
    Tensor out{Shape(static_cast<int>(items.size()), s.c, s.h, s.w)};
    float* dst = out.data();
    for (const auto& t : items) {
        std::copy(t.data(), t.data() + t.numel(), dst);
        dst += t.numel();
    }
    return out;
}

std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

double validation_psnr(const SrNetwork& net, const ImageSet& val, int upscale) {
    if (val.empty()) throw UsageError("validation set is empty");
    double acc = 0.0;
    for (const auto& img : val.images) {
        ImageU8 hr = img.crop(0, 0, img.height / upscale * upscale,
                              img.width / upscale * upscale);
        ImageU8 lr = bicubic_resize(hr, 1.0 / upscale);
        Tensor out = net.forward(to_model_range(lr));
        acc += psnr_rgb(from_model_range(out), hr);
    }
    return acc / static_cast<double>(val.images.size());
}

TrainResult train(SrNetwork& net, const ImageSet& train_set, const ImageSet& val_set,
                  const TrainConfig& cfg, const std::string& out_dir,
                  std::int64_t start_iter, Optimizer* resume_opt, float resume_best,
                  bool quiet, std::int64_t stop_iter) {
    cfg.validate();
    if (train_set.empty()) throw UsageError("training set is empty");
    if (val_set.empty()) throw UsageError("validation set is empty");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    Optimizer local_opt(cfg.optimizer, net.params());
    Optimizer& opt = resume_opt ? *resume_opt : local_opt;

    const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    std::FILE* metrics = std::fopen(metrics_path.c_str(), start_iter > 0 ? "ab" : "wb");
    if (!metrics) throw IoError("cannot open " + metrics_path);
    if (start_iter == 0) std::fputs("iter,loss,lr,val_psnr\n", metrics);

    TrainResult result;
    result.best_val_psnr = resume_best;
    auto save = [&](const char* name, std::int64_t iter) {
        save_checkpoint(make_checkpoint(net, &opt, result.best_val_psnr, iter,
                                        train_config_blob(net.config(), cfg)),
                        (fs::path(out_dir) / name).string());
    };

    const std::int64_t last_iter =
        stop_iter > 0 ? std::min(stop_iter, cfg.iterations) : cfg.iterations;
    for (std::int64_t iter = start_iter + 1; iter <= last_iter; ++iter) {
        const double lr = cosine_lr(iter - 1, cfg.iterations, cfg.lr_init, cfg.lr_final);

        std::vector<Tensor> lrs, hrs;
        for (int slot = 0; slot < cfg.batch; ++slot) {
            SamplePair pair = sample_pair(train_set, cfg, iter, slot);
            lrs.push_back(pair.lr);
            hrs.push_back(pair.hr);
        }
        Tensor lr_batch = stack_batch(lrs);
        Tensor hr_batch = stack_batch(hrs);

        Tape tape;
        float loss_value;
        {
            Tape::Scope scope(tape);
            Tensor pred = net.forward(lr_batch);
            Tensor loss = barron_loss(pred, hr_batch, cfg.loss_alpha, cfg.loss_c);
            loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                // replay without the tape to find the first offending layer
                std::vector<std::pair<std::string, Tensor>> trace;
                net.forward(lr_batch, &trace);
                std::string layer = "loss";
                for (const auto& [name, t] : trace)
                    if (!t.all_finite()) {
                        layer = name;
                        break;
                    }
                std::fclose(metrics);
                throw NumericError("training aborted at iteration " + std::to_string(iter) +
                                   ": first non-finite output in layer '" + layer + "'");
            }
            tape.backward(loss);
        }
        opt.step(net.params(), lr);

        if (iter == start_iter + 1) result.initial_loss = loss_value;
        result.final_loss = loss_value;

        std::string val_field;
        if (iter % cfg.val_interval == 0 || iter == cfg.iterations) {
            const double v = validation_psnr(net, val_set, cfg.upscale);
            val_field = format_g(v);
            result.final_val_psnr = static_cast<float>(v);
            if (static_cast<float>(v) > result.best_val_psnr) {
                result.best_val_psnr = static_cast<float>(v);
                save("best.ckpt", iter);
            }
            if (!quiet)
                std::fprintf(stderr, "iter %lld loss %.5f lr %.3g val_psnr %.3f\n",
                             static_cast<long long>(iter), loss_value, lr, v);
        }
        std::fprintf(metrics, "%lld,%s,%s,%s\n", static_cast<long long>(iter),
                     format_g(loss_value).c_str(), format_g(lr).c_str(),
                     val_field.c_str());
        result.iterations_run = iter;
    }
    std::fclose(metrics);
    save("final.ckpt", last_iter);
    return result;
}

}  // namespace paon
