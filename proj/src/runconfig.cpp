#include "paon/runconfig.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace paon {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for '") + key + "'");
    }
}

PaonVariant parse_variant(const std::string& s) {
    if (s == "vanilla") return PaonVariant::vanilla;
    if (s == "A" || s == "a") return PaonVariant::abs_denom;
    if (s == "S" || s == "s") return PaonVariant::smooth;
    throw ConfigError("unknown paon variant '" + s + "' (expected vanilla, A or S)");
}

ActivationKind parse_activation(const std::string& s) {
    if (s == "gelu") return ActivationKind::gelu;
    if (s == "tanh") return ActivationKind::tanh;
    if (s == "pau") return ActivationKind::pau;
    throw ConfigError("unknown activation '" + s + "'");
}

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adan") return OptimizerKind::adan;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + s + "' (expected adan or adam)");
}

json network_to_json(const NetworkConfig& n) {
    json b;
    b["kind"] = n.block.kind == BlockKind::wrb ? "wrb" : "rb";
    b["width_mult"] = n.block.width_mult;
    b["activation"] = activation_name(n.block.activation);
    b["scaler_init"] = n.block.scaler_init;
    b["numer_degree"] = n.block.numer_degree;
    b["denom_degree"] = n.block.denom_degree;
    b["variant"] = variant_name(n.block.variant);
    b["shift"] = n.block.shift;
    b["shift_bound"] = n.block.shift_bound;
    b["placement"] = placement_name(n.block.placement);
    b["share_lower_order"] = n.block.share_lower_order;
    b["tanh_block_output"] = n.block.tanh_block_output;

    json j;
    j["model"] = model_name(n.model);
    j["blocks"] = n.blocks;
    j["channels"] = n.channels;
    j["upscale"] = n.upscale;
    j["block"] = b;
    j["pau_numer_degree"] = n.pau_numer_degree;
    j["pau_denom_degree"] = n.pau_denom_degree;
    return j;
}

NetworkConfig network_from_json(const json& j) {
    NetworkConfig n;
    n.model = parse_model(j.at("model").get<std::string>());
    n.blocks = j.at("blocks").get<int>();
    n.channels = j.at("channels").get<int>();
    n.upscale = j.at("upscale").get<int>();
    n.pau_numer_degree = j.at("pau_numer_degree").get<int>();
    n.pau_denom_degree = j.at("pau_denom_degree").get<int>();
    const json& b = j.at("block");
    n.block.kind = b.at("kind").get<std::string>() == "wrb" ? BlockKind::wrb : BlockKind::rb;
    n.block.width_mult = b.at("width_mult").get<double>();
    n.block.activation = parse_activation(b.at("activation").get<std::string>());
    n.block.scaler_init = b.at("scaler_init").get<float>();
    n.block.numer_degree = b.at("numer_degree").get<int>();
    n.block.denom_degree = b.at("denom_degree").get<int>();
    n.block.variant = parse_variant(b.at("variant").get<std::string>());
    n.block.shift = b.at("shift").get<bool>();
    n.block.shift_bound = b.at("shift_bound").get<int>();
    n.block.placement = parse_placement(b.at("placement").get<std::string>());
    n.block.share_lower_order = b.at("share_lower_order").get<bool>();
    n.block.tanh_block_output = b.at("tanh_block_output").get<bool>();
    return n;
}

json train_to_json(const TrainConfig& t) {
    json j;
    j["patch"] = t.patch;
    j["batch"] = t.batch;
    j["iterations"] = t.iterations;
    j["lr_init"] = t.lr_init;
    j["lr_final"] = t.lr_final;
    j["loss_alpha"] = t.loss_alpha;
    j["loss_c"] = t.loss_c;
    j["noise_snr_db"] = t.noise_snr_db;
    j["upscale"] = t.upscale;
    j["seed"] = t.seed;
    j["augment"] = t.augment;
    j["val_interval"] = t.val_interval;
    j["optimizer"] = t.optimizer == OptimizerKind::adan ? "adan" : "adam";
    return j;
}

TrainConfig train_from_json(const json& j) {
    TrainConfig t;
    t.patch = j.at("patch").get<int>();
    t.batch = j.at("batch").get<int>();
    t.iterations = j.at("iterations").get<std::int64_t>();
    t.lr_init = j.at("lr_init").get<double>();
    t.lr_final = j.at("lr_final").get<double>();
    t.loss_alpha = j.at("loss_alpha").get<double>();
    t.loss_c = j.at("loss_c").get<double>();
    t.noise_snr_db = j.at("noise_snr_db").get<double>();
    t.upscale = j.at("upscale").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.augment = j.at("augment").get<bool>();
    t.val_interval = j.at("val_interval").get<std::int64_t>();
    t.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    return t;
}

}  // namespace

std::string train_config_blob(const NetworkConfig& net, const TrainConfig& train) {
    json j;
    j["network"] = network_to_json(net);
    j["train"] = train_to_json(train);
    return j.dump();
}

void parse_config_blob(const std::string& blob, NetworkConfig& net, TrainConfig& train) {
    json j;
    try {
        j = json::parse(blob);
        net = network_from_json(j.at("network"));
        train = train_from_json(j.at("train"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config blob: ") + e.what());
    }
}

RunConfig parse_run_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown_keys(j,
                        {"model", "upscale", "channels", "blocks", "variant", "shift",
                         "shift_bound", "placement", "width_mult", "activation",
                         "share_lower_order", "train", "dataset", "out_dir"},
                        "config root");

    RunConfig cfg;
    const std::string model = get_or<std::string>(j, "model", "padenet");
    const int upscale = get_or<int>(j, "upscale", 2);
    const int channels = get_or<int>(j, "channels", 48);
    const int blocks = get_or<int>(j, "blocks", 3);
    cfg.network = make_preset(parse_model(model), upscale, channels, blocks);
    if (j.contains("variant"))
        cfg.network.block.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("shift")) cfg.network.block.shift = j.at("shift").get<bool>();
    if (j.contains("shift_bound"))
        cfg.network.block.shift_bound = j.at("shift_bound").get<int>();
    if (j.contains("placement"))
        cfg.network.block.placement = parse_placement(j.at("placement").get<std::string>());
    if (j.contains("width_mult"))
        cfg.network.block.width_mult = j.at("width_mult").get<double>();
    if (j.contains("activation"))
        cfg.network.block.activation = parse_activation(j.at("activation").get<std::string>());
    if (j.contains("share_lower_order"))
        cfg.network.block.share_lower_order = j.at("share_lower_order").get<bool>();

    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown_keys(t,
                            {"patch", "batch", "iterations", "lr_init", "lr_final",
                             "loss_alpha", "loss_c", "noise_snr_db", "seed", "augment",
                             "val_interval", "optimizer"},
                            "train section");
        cfg.train.patch = get_or<int>(t, "patch", cfg.train.patch);
        cfg.train.batch = get_or<int>(t, "batch", cfg.train.batch);
        cfg.train.iterations = get_or<std::int64_t>(t, "iterations", cfg.train.iterations);
        cfg.train.lr_init = get_or<double>(t, "lr_init", cfg.train.lr_init);
        cfg.train.lr_final = get_or<double>(t, "lr_final", cfg.train.lr_final);
        cfg.train.loss_alpha = get_or<double>(t, "loss_alpha", cfg.train.loss_alpha);
        cfg.train.loss_c = get_or<double>(t, "loss_c", cfg.train.loss_c);
        cfg.train.noise_snr_db = get_or<double>(t, "noise_snr_db", cfg.train.noise_snr_db);
        cfg.train.seed = get_or<std::uint64_t>(t, "seed", cfg.train.seed);
        cfg.train.augment = get_or<bool>(t, "augment", cfg.train.augment);
        cfg.train.val_interval = get_or<std::int64_t>(t, "val_interval", cfg.train.val_interval);
        if (t.contains("optimizer"))
            cfg.train.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
    }
    cfg.train.upscale = cfg.network.upscale;

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        reject_unknown_keys(d,
                            {"kind", "train_count", "val_count", "size", "seed",
                             "train", "val"},
                            "dataset section");
        const std::string kind = get_or<std::string>(d, "kind", "synthetic");
        if (kind == "synthetic") {
            cfg.dataset_kind = RunConfig::DatasetKind::synthetic;
            cfg.synth_train_count = get_or<int>(d, "train_count", cfg.synth_train_count);
            cfg.synth_val_count = get_or<int>(d, "val_count", cfg.synth_val_count);
            cfg.synth_size = get_or<int>(d, "size", cfg.synth_size);
            cfg.synth_seed = get_or<std::uint64_t>(d, "seed", cfg.synth_seed);
        } else if (kind == "dir") {
            cfg.dataset_kind = RunConfig::DatasetKind::dir;
            if (!d.contains("train") || !d.contains("val"))
                throw ConfigError("dataset kind 'dir' needs 'train' and 'val' paths");
            cfg.train_dir = d.at("train").get<std::string>();
            cfg.val_dir = d.at("val").get<std::string>();
        } else {
            throw ConfigError("unknown dataset kind '" + kind + "'");
        }
    }
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);

    cfg.network.validate();
    cfg.train.validate();
    return cfg;
}

RunConfig parse_run_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config_text(text);
}

void apply_toy_overrides(RunConfig& cfg) {
    cfg.network.blocks = 1;
    cfg.network.channels = 8;
    cfg.network.upscale = 2;
    cfg.train.upscale = 2;
    cfg.train.iterations = 500;
    cfg.train.patch = 32;
    cfg.train.batch = 25;
    cfg.train.val_interval = 100;
    cfg.dataset_kind = RunConfig::DatasetKind::synthetic;
    cfg.synth_train_count = 40;
    cfg.synth_val_count = 10;
    cfg.synth_size = 32;
}

ImageSet RunConfig::load_train_set() const {
    if (dataset_kind == DatasetKind::synthetic)
        return synth_textures(synth_train_count, synth_size, synth_seed);
    return load_image_dir((std::string(train_dir) + "/HR"));
}

ImageSet RunConfig::load_val_set() const {
    if (dataset_kind == DatasetKind::synthetic)
        return synth_textures(synth_val_count, synth_size,
                              derive_seed(synth_seed, 0x76616cULL));
    return load_image_dir((std::string(val_dir) + "/HR"));
}

}  // namespace paon
