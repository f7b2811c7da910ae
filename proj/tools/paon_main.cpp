#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "paon/checkpoint.hpp"
#include "paon/metrics.hpp"
#include "paon/runconfig.hpp"
#include "paon/training.hpp"

namespace fs = std::filesystem;
using namespace paon;

namespace {

SrFunction model_sr_function(const SrNetwork& net) {
    return [&net](const ImageU8& lr) {
        return from_model_range(net.forward(to_model_range(lr)));
    };
}

int cmd_train(const std::string& config_path, bool toy, const std::string& resume,
              bool force, bool quiet) {
    RunConfig cfg = parse_run_config_file(config_path);
    if (toy) apply_toy_overrides(cfg);
    cfg.network.validate();
    cfg.train.validate();

    ImageSet train_set = cfg.load_train_set();
    ImageSet val_set = cfg.load_val_set();
    if (train_set.empty()) throw UsageError("training set is empty");

    SrNetwork net(cfg.network, cfg.train.seed);
    const std::string blob = train_config_blob(cfg.network, cfg.train);

    std::int64_t start_iter = 0;
    float best = -1.0f;
    Optimizer opt(cfg.train.optimizer, net.params());
    if (!resume.empty()) {
        Checkpoint ckpt = load_checkpoint(resume);
        if (fnv1a64(ckpt.config_json) != fnv1a64(blob) && !force)
            throw ConfigError(
                "checkpoint config does not match the run config (use --force to "
                "override)");
        start_iter = load_into(net, &opt, ckpt);
        best = ckpt.best_val_psnr;
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res =
        train(net, train_set, val_set, cfg.train, cfg.out_dir, start_iter, &opt, best, quiet);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("trained %lld iterations in %.1f s\n",
                static_cast<long long>(res.iterations_run - start_iter), secs);
    std::printf("loss %.6g -> %.6g, best val PSNR %.3f dB (final %.3f dB)\n",
                double(res.initial_loss), double(res.final_loss),
                double(res.best_val_psnr), double(res.final_val_psnr));
    std::printf("artifacts: %s/{best.ckpt,final.ckpt,metrics.csv}\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_dir, int scale,
             const std::string& csv_path, bool bicubic) {
    EvalResult result;
    if (bicubic) {
        const double factor = scale;
        result = evaluate(
            [factor](const ImageU8& lr) { return bicubic_resize(lr, factor); },
            dataset_dir, scale);
    } else {
        if (ckpt_path.empty())
            throw UsageError("eval needs a checkpoint (or --bicubic)");
        Checkpoint ckpt = load_checkpoint(ckpt_path);
        NetworkConfig ncfg;
        TrainConfig tcfg;
        parse_config_blob(ckpt.config_json, ncfg, tcfg);
        if (ncfg.upscale != scale)
            throw ConfigError("checkpoint was trained for x" +
                              std::to_string(ncfg.upscale) + ", requested x" +
                              std::to_string(scale));
        SrNetwork net(ncfg, 0);
        load_into(net, nullptr, ckpt);
        result = evaluate(model_sr_function(net), dataset_dir, scale);
    }
    std::fputs(eval_csv_string(result).c_str(), stdout);
    if (!csv_path.empty()) write_eval_csv(result, csv_path);
    return 0;
}

int cmd_sr(const std::string& ckpt_path, const std::string& input,
           const std::string& output) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    NetworkConfig ncfg;
    TrainConfig tcfg;
    parse_config_blob(ckpt.config_json, ncfg, tcfg);
    SrNetwork net(ncfg, 0);
    load_into(net, nullptr, ckpt);

    ImageU8 lr = load_png(input);
    ImageU8 out = from_model_range(net.forward(to_model_range(lr)));
    save_png(out, output);
    std::printf("%s: %dx%d -> %s: %dx%d\n", input.c_str(), lr.width, lr.height,
                output.c_str(), out.width, out.height);
    return 0;
}

int cmd_inspect(const std::string& ckpt_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    NetworkConfig ncfg;
    TrainConfig tcfg;
    parse_config_blob(ckpt.config_json, ncfg, tcfg);
    SrNetwork net(ncfg, 0);
    load_into(net, nullptr, ckpt);

    std::printf("config: %s\n", ckpt.config_json.c_str());
    std::printf("trained iterations: %lld\n", static_cast<long long>(ckpt.trainer_iter()));
    std::printf("best val PSNR: %.4f dB\n", double(ckpt.best_val_psnr));
    std::printf("\nper-layer parameter counts:\n");
    std::int64_t total = 0;
    for (const auto& [name, count] : net.layer_param_counts()) {
        std::printf("  %-18s %10lld\n", name.c_str(), static_cast<long long>(count));
        total += count;
    }
    std::printf("  %-18s %10lld\n", "total", static_cast<long long>(total));

    const auto shifts = net.shifter_rest_shifts();
    if (!shifts.empty()) {
        std::printf("\nshifter rest shifts (mean |dy|, |dx| per layer):\n");
        for (const auto& [name, dy, dx] : shifts)
            std::printf("  %-18s %.6f %.6f\n", name.c_str(), dy, dx);
    }
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& table_path) {
    RunConfig base = parse_run_config_file(config_path);

    struct Column {
        const char* title;
        PaonVariant variant;
        bool shift;
        PaonPlacement placement;
    };
    const Column columns[] = {
        {"No Shift", PaonVariant::smooth, false, PaonPlacement::all_layers},
        {"Shift", PaonVariant::smooth, true, PaonPlacement::all_layers},
        {"Paon-A", PaonVariant::abs_denom, true, PaonPlacement::all_layers},
        {"Paon-S", PaonVariant::smooth, true, PaonPlacement::all_layers},
        {"FL", PaonVariant::smooth, true, PaonPlacement::first_layer},
        {"LL", PaonVariant::smooth, true, PaonPlacement::last_layer},
        {"AL", PaonVariant::smooth, true, PaonPlacement::all_layers},
    };

    ImageSet train_set = base.load_train_set();
    ImageSet val_set = base.load_val_set();

    // identical configurations share one training run
    std::map<std::string, double> cache;
    std::vector<double> scores;
    int run_idx = 0;
    for (const auto& col : columns) {
        RunConfig cfg = base;
        cfg.network.block.variant = col.variant;
        cfg.network.block.shift = col.shift;
        cfg.network.block.placement = col.placement;
        cfg.network.validate();
        const std::string blob = train_config_blob(cfg.network, cfg.train);
        auto it = cache.find(blob);
        if (it == cache.end()) {
            SrNetwork net(cfg.network, cfg.train.seed);
            const std::string out =
                (fs::path(base.out_dir) / ("ablate_" + std::to_string(run_idx++))).string();
            TrainResult res =
                train(net, train_set, val_set, cfg.train, out, 0, nullptr, -1.0f, true);
            it = cache.emplace(blob, double(res.best_val_psnr)).first;
            std::fprintf(stderr, "%s: best val PSNR %.3f dB\n", col.title, it->second);
        }
        scores.push_back(it->second);
    }

    std::string md = "|";
    for (const auto& col : columns) md += std::string(" ") + col.title + " |";
    md += "\n|";
    for (size_t i = 0; i < std::size(columns); ++i) md += "---|";
    md += "\n|";
    for (double s : scores) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " %.2f |", s);
        md += buf;
    }
    md += "\n";

    std::fputs(md.c_str(), stdout);
    fs::create_directories(base.out_dir);
    const std::string out_md =
        table_path.empty() ? (fs::path(base.out_dir) / "ablation.md").string() : table_path;
    {
        std::ofstream f(out_md, std::ios::binary);
        if (!f) throw IoError("cannot write " + out_md);
        f << md;
    }
    std::printf("wrote %s\n", out_md.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Padé-approximant neuron networks for single-image super-resolution"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker thread count (default: hardware)");

    std::string config_path, resume, ckpt_path, dataset_dir, input, output, csv_path,
        table_path;
    bool toy = false, force = false, quiet = false, bicubic = false;
    int scale = 2;

    CLI::App* tr = app.add_subcommand("train", "train a model from a config file");
    tr->add_option("config", config_path, "JSON run config")->required();
    tr->add_flag("--toy", toy, "CI-scale preset: 1 block, 8 channels, 500 iterations");
    tr->add_option("--resume", resume, "continue from a checkpoint");
    tr->add_flag("--force", force, "resume even if the config hash differs");
    tr->add_flag("--quiet", quiet, "suppress progress lines");

    CLI::App* ev = app.add_subcommand("eval", "PSNR/SSIM over a dataset directory");
    ev->add_option("ckpt", ckpt_path, "checkpoint (omit with --bicubic)");
    ev->add_option("dataset", dataset_dir, "dataset root containing HR/");
    ev->add_option("--scale", scale, "upscale factor (2 or 4)")->required();
    ev->add_option("--csv", csv_path, "CSV output path");
    ev->add_flag("--bicubic", bicubic, "score the bicubic upscaling baseline");

    CLI::App* sr = app.add_subcommand("sr", "super-resolve one PNG");
    sr->add_option("ckpt", ckpt_path, "checkpoint")->required();
    sr->add_option("input", input, "input PNG")->required();
    sr->add_option("output", output, "output PNG")->required();

    CLI::App* ab = app.add_subcommand("ablate", "train the Table-1 style ablation grid");
    ab->add_option("config", config_path, "JSON run config (toy scale)")->required();
    ab->add_option("--out", table_path, "markdown table path");

    CLI::App* in = app.add_subcommand("inspect", "describe a checkpoint");
    in->add_option("ckpt", ckpt_path, "checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (threads > 0) set_worker_count(threads);

    try {
        if (tr->parsed()) return cmd_train(config_path, toy, resume, force, quiet);
        if (ev->parsed()) {
            // with --bicubic the checkpoint slot may be omitted entirely
            if (bicubic && dataset_dir.empty()) std::swap(dataset_dir, ckpt_path);
            if (dataset_dir.empty()) throw UsageError("eval needs a dataset directory");
            return cmd_eval(ckpt_path, dataset_dir, scale, csv_path, bicubic);
        }
        if (sr->parsed()) return cmd_sr(ckpt_path, input, output);
        if (ab->parsed()) return cmd_ablate(config_path, table_path);
        if (in->parsed()) return cmd_inspect(ckpt_path);
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
