#include "paon/network.hpp"

#include <cmath>

namespace paon {

const char* model_name(ModelKind m) {
    switch (m) {
        case ModelKind::resnet: return "resnet";
        case ModelKind::pau_net: return "pau_net";
        case ModelKind::selfonn: return "selfonn";
        case ModelKind::superonn: return "superonn";
        case ModelKind::padenet: return "padenet";
    }
    return "?";
}

ModelKind parse_model(const std::string& s) {
    if (s == "resnet") return ModelKind::resnet;
    if (s == "pau_net") return ModelKind::pau_net;
    if (s == "selfonn") return ModelKind::selfonn;
    if (s == "superonn") return ModelKind::superonn;
    if (s == "padenet") return ModelKind::padenet;
    throw ConfigError("unknown model preset '" + s + "'");
}

const char* activation_name(ActivationKind a) {
    switch (a) {
        case ActivationKind::gelu: return "gelu";
        case ActivationKind::tanh: return "tanh";
        case ActivationKind::pau: return "pau";
    }
    return "?";
}

const char* placement_name(PaonPlacement p) {
    switch (p) {
        case PaonPlacement::first_layer: return "fl";
        case PaonPlacement::last_layer: return "ll";
        case PaonPlacement::all_layers: return "al";
    }
    return "?";
}

PaonPlacement parse_placement(const std::string& s) {
    if (s == "fl") return PaonPlacement::first_layer;
    if (s == "ll") return PaonPlacement::last_layer;
    if (s == "al") return PaonPlacement::all_layers;
    throw ConfigError("unknown placement '" + s + "' (expected fl, ll or al)");
}

void NetworkConfig::validate() const {
    if (upscale != 2 && upscale != 4)
        throw ConfigError("upscale must be 2 or 4, got " + std::to_string(upscale));
    if (blocks < 1) throw ConfigError("block count must be >= 1");
    if (channels < 1) throw ConfigError("channel count must be >= 1");
    if (block.kind == BlockKind::rb && block.width_mult != 1.0)
        throw ConfigError("RB requires width multiplier 1");
    if (block.kind == BlockKind::wrb && block.width_mult <= 1.0)
        throw ConfigError("WRB requires width multiplier > 1");
    if (block.numer_degree < 1 || block.denom_degree < 0)
        throw ConfigError("invalid paon degrees in block config");
}

NetworkConfig make_preset(ModelKind model, int upscale, int channels, int blocks) {
    NetworkConfig cfg;
    cfg.model = model;
    cfg.upscale = upscale;
    cfg.channels = channels;
    cfg.blocks = blocks;
    BlockConfig& b = cfg.block;
    switch (model) {
        case ModelKind::resnet:
            b.kind = BlockKind::wrb;
            b.width_mult = 4.0;
            b.activation = ActivationKind::gelu;
            b.numer_degree = 1;
            b.denom_degree = 0;
            break;
        case ModelKind::pau_net:
            b.kind = BlockKind::wrb;
            b.width_mult = 4.0;
            b.activation = ActivationKind::pau;
            b.numer_degree = 1;
            b.denom_degree = 0;
            cfg.pau_numer_degree = 7;
            cfg.pau_denom_degree = 6;
            break;
        case ModelKind::selfonn:
            b.kind = BlockKind::rb;
            b.width_mult = 1.0;
            b.activation = ActivationKind::tanh;
            b.numer_degree = 3;
            b.denom_degree = 0;
            b.variant = PaonVariant::abs_denom;
            b.tanh_block_output = true;
            break;
        case ModelKind::superonn:
            b.kind = BlockKind::rb;
            b.width_mult = 1.0;
            b.activation = ActivationKind::tanh;
            b.numer_degree = 3;
            b.denom_degree = 0;
            b.variant = PaonVariant::abs_denom;
            b.shift = true;
            b.shift_bound = 0;
            b.tanh_block_output = true;
            break;
        case ModelKind::padenet:
            b.kind = BlockKind::rb;
            b.width_mult = 1.0;
            b.activation = ActivationKind::gelu;
            b.numer_degree = 2;
            b.denom_degree = 1;
            b.variant = PaonVariant::smooth;
            b.shift = true;
            b.shift_bound = 0;
            break;
    }
    return cfg;
}

namespace {

PaonSpec plain_conv_spec(int in_ch, int out_ch) {
    PaonSpec s;
    s.numer_degree = 1;
    s.denom_degree = 0;
    s.variant = PaonVariant::abs_denom;  // irrelevant at [1/0]
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.shift_param = -1;
    return s;
}

PaonSpec block_slot_spec(const BlockConfig& b, int in_ch, int out_ch, bool is_paon) {
    if (!is_paon) return plain_conv_spec(in_ch, out_ch);
    PaonSpec s;
    s.numer_degree = b.numer_degree;
    s.denom_degree = b.denom_degree;
    s.variant = b.variant;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.shift_param = b.shift ? b.shift_bound : -1;
    s.share_lower_order = b.share_lower_order;
    return s;
}

}  // namespace

SrNetwork::Activation SrNetwork::make_activation(const std::string& name,
                                                 std::uint64_t seed) {
    Activation a;
    a.kind = cfg_.block.activation;
    if (a.kind == ActivationKind::pau) {
        (void)seed;  // PAU initialization is deterministic (GELU fit)
        a.pau.emplace(cfg_.pau_numer_degree, cfg_.pau_denom_degree, name);
    }
    return a;
}

Tensor SrNetwork::Activation::apply(const Tensor& x) const {
    switch (kind) {
        case ActivationKind::gelu: return paon::gelu(x);
        case ActivationKind::tanh: return paon::tanh(x);
        case ActivationKind::pau: return pau->forward(x);
    }
    throw ConfigError("unknown activation");
}

SrNetwork::SrNetwork(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const int C = cfg_.channels;
    std::uint64_t layer_idx = 0;
    auto next_seed = [&] { return derive_seed(seed, 0x6e657431ULL, layer_idx++); };

    feat_ = PaonLayer(plain_conv_spec(3, C), next_seed(), "feat");

    const int wide = std::max(C + 1, static_cast<int>(std::lround(C * cfg_.block.width_mult)));
    const int hidden = cfg_.block.kind == BlockKind::wrb ? wide : C;
    for (int r = 0; r < cfg_.blocks; ++r) {
        Block blk;
        blk.name = "block" + std::to_string(r);
        const bool paon_l1 = cfg_.block.placement != PaonPlacement::last_layer;
        const bool paon_l2 = cfg_.block.placement != PaonPlacement::first_layer;
        blk.l1 = PaonLayer(block_slot_spec(cfg_.block, C, hidden, paon_l1),
                           next_seed(), blk.name + ".l1");
        blk.l2 = PaonLayer(block_slot_spec(cfg_.block, hidden, C, paon_l2),
                           next_seed(), blk.name + ".l2");
        blk.act = make_activation(blk.name + ".act", next_seed());
        blk.scaler = Tensor::full(Shape(1, C, 1, 1), cfg_.block.scaler_init);
        blk.scaler.set_requires_grad(true);
        blk.tanh_output = cfg_.block.tanh_block_output;
        blocks_.push_back(std::move(blk));
    }

    end_ = PaonLayer(plain_conv_spec(C, C), next_seed(), "end");

    const int stages = cfg_.upscale == 4 ? 2 : 1;
    for (int s = 0; s < stages; ++s) {
        UpStage st;
        st.conv = PaonLayer(plain_conv_spec(C, 4 * C), next_seed(),
                            "up" + std::to_string(s));
        st.act = make_activation("up" + std::to_string(s) + ".act", next_seed());
        upsampler_.push_back(std::move(st));
    }

    final_ = PaonLayer(plain_conv_spec(C, 3), next_seed(), "final");

    feat_.collect(params_);
    for (auto& blk : blocks_) {
        blk.l1.collect(params_);
        blk.l2.collect(params_);
        if (blk.act.pau) blk.act.pau->collect(params_);
        params_.push_back({blk.name + ".scaler", blk.scaler});
    }
    end_.collect(params_);
    for (auto& st : upsampler_) {
        st.conv.collect(params_);
        if (st.act.pau) st.act.pau->collect(params_);
    }
    final_.collect(params_);
}

Tensor SrNetwork::forward(const Tensor& lr,
                          std::vector<std::pair<std::string, Tensor>>* trace) const {
    if (lr.shape().c != 3)
        throw UsageError("forward expects a 3-channel input, got " + lr.shape().str());
    auto probe = [&](const std::string& name, const Tensor& t) {
        if (trace) trace->push_back({name, t});
    };

    Tensor feat = feat_.forward(lr);
    probe("feat", feat);

    Tensor x = feat;
    for (const auto& blk : blocks_) {
        Tensor branch = blk.l1.forward(x);
        probe(blk.name + ".l1", branch);
        branch = blk.act.apply(branch);
        branch = blk.l2.forward(branch);
        probe(blk.name + ".l2", branch);
        Tensor y = add(x, mul(blk.scaler, branch));
        if (blk.tanh_output) y = paon::tanh(y);
        probe(blk.name, y);
        x = y;
    }

    x = end_.forward(x);
    probe("end", x);
    x = add(x, feat);  // global skip

    for (size_t s = 0; s < upsampler_.size(); ++s) {
        x = upsampler_[s].conv.forward(x);
        probe("up" + std::to_string(s), x);
        x = upsampler_[s].act.apply(x);
        x = pixel_shuffle(x, 2);
    }

    x = final_.forward(x);
    probe("final", x);
    return x;
}

std::int64_t SrNetwork::num_scalars() const {
    std::int64_t total = 0;
    for (const auto& p : params_) total += p.tensor.numel();
    return total;
}

std::vector<std::pair<std::string, std::int64_t>> SrNetwork::layer_param_counts() const {
    std::vector<std::pair<std::string, std::int64_t>> out;
    auto count_layer = [&](const std::string& name, const PaonLayer& layer) {
        std::vector<NamedParam> tmp;
        layer.collect(tmp);
        std::int64_t n = 0;
        for (auto& p : tmp) n += p.tensor.numel();
        out.push_back({name, n});
    };
    count_layer("feat", feat_);
    for (const auto& blk : blocks_) {
        count_layer(blk.name + ".l1", blk.l1);
        count_layer(blk.name + ".l2", blk.l2);
        if (blk.act.pau) {
            std::vector<NamedParam> tmp;
            blk.act.pau->collect(tmp);
            std::int64_t n = 0;
            for (auto& p : tmp) n += p.tensor.numel();
            out.push_back({blk.name + ".act", n});
        }
        out.push_back({blk.name + ".scaler", blk.scaler.numel()});
    }
    count_layer("end", end_);
    for (size_t s = 0; s < upsampler_.size(); ++s) {
        count_layer("up" + std::to_string(s), upsampler_[s].conv);
        if (upsampler_[s].act.pau) {
            std::vector<NamedParam> tmp;
            upsampler_[s].act.pau->collect(tmp);
            std::int64_t n = 0;
            for (auto& p : tmp) n += p.tensor.numel();
            out.push_back({"up" + std::to_string(s) + ".act", n});
        }
    }
    count_layer("final", final_);
    return out;
}

std::vector<std::tuple<std::string, double, double>> SrNetwork::shifter_rest_shifts() const {
    std::vector<std::tuple<std::string, double, double>> out;
    auto add_layer = [&](const PaonLayer& layer) {
        const auto& p = layer.params();
        if (!p.shifter) return;
        const int b = layer.spec().shift_param;
        const auto& bias = p.shifter->bias;
        double dy = 0.0, dx = 0.0;
        const int pairs = static_cast<int>(bias.numel()) / 2;
        for (int c = 0; c < pairs; ++c) {
            double sy = bias.data()[2 * c], sx = bias.data()[2 * c + 1];
            if (b > 0) {
                sy = b * std::tanh(sy);
                sx = b * std::tanh(sx);
            }
            dy += std::fabs(sy);
            dx += std::fabs(sx);
        }
        out.push_back({layer.name(), dy / pairs, dx / pairs});
    };
    add_layer(feat_);
    for (const auto& blk : blocks_) {
        add_layer(blk.l1);
        add_layer(blk.l2);
    }
    add_layer(end_);
    for (const auto& st : upsampler_) add_layer(st.conv);
    add_layer(final_);
    return out;
}

}  // namespace paon
