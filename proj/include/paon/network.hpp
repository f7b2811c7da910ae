#pragma once

#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "paon/layers.hpp"

namespace paon {

enum class ModelKind { resnet, pau_net, selfonn, superonn, padenet };
enum class ActivationKind { gelu, tanh, pau };
enum class BlockKind { rb, wrb };
enum class PaonPlacement { first_layer, last_layer, all_layers };

const char* model_name(ModelKind m);
ModelKind parse_model(const std::string& s);
const char* activation_name(ActivationKind a);
const char* placement_name(PaonPlacement p);
PaonPlacement parse_placement(const std::string& s);

// Refinement block description (Fig. 2b): two conv slots, an activation, and
// a per-channel residual scaler. WRB widens the hidden channels by w.
struct BlockConfig {
    BlockKind kind = BlockKind::rb;
    double width_mult = 1.0;
    ActivationKind activation = ActivationKind::gelu;
    float scaler_init = 0.1f;
    // Degrees/variant/shift of the Paon slots, plus which slots use them.
    int numer_degree = 1;
    int denom_degree = 0;
    PaonVariant variant = PaonVariant::smooth;
    bool shift = false;
    int shift_bound = 0;  // b when shift is on
    PaonPlacement placement = PaonPlacement::all_layers;
    bool share_lower_order = true;
    // tanh presets clamp the block output as well
    bool tanh_block_output = false;
};

struct NetworkConfig {
    ModelKind model = ModelKind::padenet;
    int blocks = 3;
    int channels = 48;
    int upscale = 2;
    BlockConfig block;
    int pau_numer_degree = 7;
    int pau_denom_degree = 6;

    void validate() const;
};

// Table 2 preset at paper scale (R = 3, 48 channels); channels/blocks may be
// overridden for toy runs.
NetworkConfig make_preset(ModelKind model, int upscale, int channels = 48,
                          int blocks = 3);

// The Fig. 2a pipeline: [1/0] feature extractor, R refinement blocks, [1/0]
// conv, global skip, PixelShuffle upsampler (x4 = two x2 stages), [1/0]
// reconstruction to 3 channels.
class SrNetwork {
public:
    SrNetwork(const NetworkConfig& cfg, std::uint64_t seed);

    // lr: (N, 3, h, w) in [-1, 1]; returns (N, 3, h*s, w*s), unclamped.
    // `trace` collects named intermediate outputs for diagnostics.
    Tensor forward(const Tensor& lr,
                   std::vector<std::pair<std::string, Tensor>>* trace = nullptr) const;

    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }
    std::int64_t num_scalars() const;
    std::vector<std::pair<std::string, std::int64_t>> layer_param_counts() const;
    // Rest shift (activation of the 1x1 bias at zero input) per shifter layer:
    // (layer name, mean |dy|, mean |dx|).
    std::vector<std::tuple<std::string, double, double>> shifter_rest_shifts() const;

    const NetworkConfig& config() const { return cfg_; }

private:
    struct Activation {
        ActivationKind kind = ActivationKind::gelu;
        std::optional<PauLayer> pau;
        Tensor apply(const Tensor& x) const;
    };
    struct Block {
        PaonLayer l1, l2;
        Activation act;
        Tensor scaler;  // (1, C, 1, 1)
        bool tanh_output = false;
        std::string name;
    };
    struct UpStage {
        PaonLayer conv;
        Activation act;
    };

    Activation make_activation(const std::string& name, std::uint64_t seed);

    NetworkConfig cfg_;
    PaonLayer feat_;
    std::vector<Block> blocks_;
    PaonLayer end_;
    std::vector<UpStage> upsampler_;
    PaonLayer final_;
    std::vector<NamedParam> params_;
};

}  // namespace paon
