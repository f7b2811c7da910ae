#include <doctest.h>

#include <cmath>

#include "paon/network.hpp"
#include "oracles.hpp"

using namespace paon;

namespace {

Tensor get_param(SrNetwork& net, const std::string& name) {
    for (auto& p : net.params())
        if (p.name == name) return p.tensor;
    FAIL("missing parameter ", name);
    return {};
}

bool has_param(SrNetwork& net, const std::string& name) {
    for (auto& p : net.params())
        if (p.name == name) return true;
    return false;
}

void zero_params_with_prefix(SrNetwork& net, const std::string& prefix) {
    for (auto& p : net.params())
        if (p.name.rfind(prefix, 0) == 0)
            std::fill(p.tensor.vec().begin(), p.tensor.vec().end(), 0.0f);
}

Tensor random_input(Shape s, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t{s};
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-1, 1));
    return t;
}

// Closed-form scalar count of one paon layer:
// M*(Cout*Cin*k^2) + Cout + N*(Cout*Cin*k^2) (+ shifter: 2Cin*Cin + 2Cin).
std::int64_t paon_count(int m, int n, int cin, int cout, bool shifter) {
    std::int64_t c = static_cast<std::int64_t>(m) * cout * cin * 9 + cout +
                     static_cast<std::int64_t>(n) * cout * cin * 9;
    if (shifter) c += 2LL * cin * cin + 2LL * cin;
    return c;
}

// Independent count of a whole configuration, assembled from the preset
// definition rather than from the built network.
std::int64_t closed_form_count(const NetworkConfig& cfg) {
    const int C = cfg.channels;
    const int hidden = cfg.block.kind == BlockKind::wrb
                           ? static_cast<int>(std::lround(C * cfg.block.width_mult))
                           : C;
    const bool sh = cfg.block.shift;
    const int m = cfg.block.numer_degree, n = cfg.block.denom_degree;
    const int pau = cfg.block.activation == ActivationKind::pau
                        ? cfg.pau_numer_degree + 1 + cfg.pau_denom_degree
                        : 0;

    std::int64_t total = paon_count(1, 0, 3, C, false);  // feature extractor
    const bool l1_paon = cfg.block.placement != PaonPlacement::last_layer;
    const bool l2_paon = cfg.block.placement != PaonPlacement::first_layer;
    for (int r = 0; r < cfg.blocks; ++r) {
        total += l1_paon ? paon_count(m, n, C, hidden, sh) : paon_count(1, 0, C, hidden, false);
        total += l2_paon ? paon_count(m, n, hidden, C, sh) : paon_count(1, 0, hidden, C, false);
        total += pau;
        total += C;  // residual scaler
    }
    total += paon_count(1, 0, C, C, false);  // end of refinement
    const int stages = cfg.upscale == 4 ? 2 : 1;
    for (int s = 0; s < stages; ++s) {
        total += paon_count(1, 0, C, 4 * C, false);
        total += pau;
    }
    total += paon_count(1, 0, C, 3, false);  // reconstruction
    return total;
}

}  // namespace

TEST_CASE("toy padenet parameter count matches the closed form") {
    NetworkConfig cfg = make_preset(ModelKind::padenet, 2, 8, 1);
    SrNetwork net(cfg, 77);
    CHECK(net.num_scalars() == closed_form_count(cfg));

    std::int64_t from_layers = 0;
    for (const auto& [name, count] : net.layer_param_counts()) from_layers += count;
    CHECK(from_layers == net.num_scalars());
}

TEST_CASE("resnet preset is pure [1/0]: no denominator kernels anywhere") {
    SrNetwork net(make_preset(ModelKind::resnet, 2, 8, 1), 5);
    for (const auto& p : net.params())
        CHECK(p.name.find(".den.") == std::string::npos);
    CHECK_FALSE(has_param(net, "block0.l1.shift.weight"));
}

TEST_CASE("same seed builds identical parameter vectors") {
    NetworkConfig cfg = make_preset(ModelKind::padenet, 2, 8, 1);
    SrNetwork a(cfg, 123), b(cfg, 123), c(cfg, 124);
    REQUIRE(a.params().size() == b.params().size());
    for (size_t i = 0; i < a.params().size(); ++i)
        CHECK(a.params()[i].tensor.vec() == b.params()[i].tensor.vec());
    bool differ = false;
    for (size_t i = 0; i < a.params().size(); ++i)
        if (a.params()[i].tensor.vec() != c.params()[i].tensor.vec()) differ = true;
    CHECK(differ);
}

TEST_CASE("network forward equals a manually assembled pipeline") {
    NetworkConfig cfg = make_preset(ModelKind::padenet, 2, 8, 1);
    SrNetwork net(cfg, 2024);
    Tensor x = random_input(Shape(2, 3, 10, 10), 31);
    Tensor got = net.forward(x);

    auto fetch_paon = [&](const std::string& base, int m, int n, bool shifter) {
        PaonParamsT<float> p;
        for (int k = 1; k <= m; ++k)
            p.numer.push_back(get_param(net, base + ".num.w" + std::to_string(k)));
        p.bias = get_param(net, base + ".num.bias");
        for (int l = 1; l <= n; ++l)
            p.denom.push_back(get_param(net, base + ".den.w" + std::to_string(l)));
        if (shifter) {
            ShifterParamsT<float> sh;
            sh.weight = get_param(net, base + ".shift.weight");
            sh.bias = get_param(net, base + ".shift.bias");
            p.shifter = sh;
        }
        return p;
    };
    auto conv_spec = [&](int cin, int cout) {
        PaonSpec s;
        s.numer_degree = 1;
        s.denom_degree = 0;
        s.variant = PaonVariant::abs_denom;
        s.in_ch = cin;
        s.out_ch = cout;
        return s;
    };
    PaonSpec paon_spec;
    paon_spec.numer_degree = 2;
    paon_spec.denom_degree = 1;
    paon_spec.variant = PaonVariant::smooth;
    paon_spec.in_ch = 8;
    paon_spec.out_ch = 8;
    paon_spec.shift_param = 0;

    Tensor feat = paon_forward(x, conv_spec(3, 8), fetch_paon("feat", 1, 0, false));
    Tensor b1 = paon_forward(feat, paon_spec, fetch_paon("block0.l1", 2, 1, true));
    Tensor branch = paon_forward(gelu(b1), paon_spec, fetch_paon("block0.l2", 2, 1, true));
    Tensor y = add(feat, mul(get_param(net, "block0.scaler"), branch));
    Tensor e = paon_forward(y, conv_spec(8, 8), fetch_paon("end", 1, 0, false));
    Tensor skip = add(e, feat);
    Tensor up = paon_forward(skip, conv_spec(8, 32), fetch_paon("up0", 1, 0, false));
    Tensor ps = pixel_shuffle(gelu(up), 2);
    Tensor expected = paon_forward(ps, conv_spec(8, 3), fetch_paon("final", 1, 0, false));

    CHECK(got.vec() == expected.vec());
}

TEST_CASE("global skip: zeroed refinement blocks are exact identities") {
    NetworkConfig cfg = make_preset(ModelKind::padenet, 2, 8, 2);
    SrNetwork full(cfg, 99);
    Tensor x = random_input(Shape(1, 3, 8, 8), 41);

    SrNetwork zeroed(cfg, 99);
    zero_params_with_prefix(zeroed, "block");
    Tensor out_zeroed = zeroed.forward(x);

    // scaler = 0 with arbitrary block weights must match as well
    SrNetwork scaler0(cfg, 99);
    for (auto& p : scaler0.params())
        if (p.name.find(".scaler") != std::string::npos)
            std::fill(p.tensor.vec().begin(), p.tensor.vec().end(), 0.0f);
    Tensor out_scaler0 = scaler0.forward(x);
    CHECK(out_zeroed.vec() == out_scaler0.vec());

    // reduced path computed without any blocks
    Tensor feat = conv2d(x, get_param(zeroed, "feat.num.w1"),
                         get_param(zeroed, "feat.num.bias"));
    Tensor e = conv2d(feat, get_param(zeroed, "end.num.w1"),
                      get_param(zeroed, "end.num.bias"));
    Tensor skip = add(e, feat);
    Tensor up = conv2d(skip, get_param(zeroed, "up0.num.w1"),
                       get_param(zeroed, "up0.num.bias"));
    Tensor expected = conv2d(pixel_shuffle(gelu(up), 2),
                             get_param(zeroed, "final.num.w1"),
                             get_param(zeroed, "final.num.bias"));
    CHECK(out_zeroed.vec() == expected.vec());
}

TEST_CASE("shape contract for x2, x4, and odd sizes") {
    SrNetwork two(make_preset(ModelKind::padenet, 2, 8, 1), 1);
    Tensor a = random_input(Shape(1, 3, 16, 16), 1);
    CHECK(two.forward(a).shape() == Shape(1, 3, 32, 32));

    Tensor odd = random_input(Shape(1, 3, 13, 11), 2);
    CHECK(two.forward(odd).shape() == Shape(1, 3, 26, 22));

    SrNetwork four(make_preset(ModelKind::padenet, 4, 8, 1), 1);
    CHECK(four.forward(a).shape() == Shape(1, 3, 64, 64));

    Tensor bad = random_input(Shape(1, 4, 8, 8), 3);
    CHECK_THROWS_AS(two.forward(bad), UsageError);
}

TEST_CASE("degenerate net: output follows the bias/activation composition") {
    NetworkConfig cfg = make_preset(ModelKind::padenet, 2, 8, 1);
    SrNetwork net(cfg, 7);
    for (auto& p : net.params())
        std::fill(p.tensor.vec().begin(), p.tensor.vec().end(), 0.0f);

    const float b_feat = 0.2f, b_up = 0.3f, b_final = 0.1f;
    auto set_all = [&](const std::string& name, float v) {
        auto t = get_param(net, name);
        std::fill(t.vec().begin(), t.vec().end(), v);
    };
    set_all("feat.num.bias", b_feat);
    set_all("up0.num.bias", b_up);
    set_all("final.num.bias", b_final);
    // delta kernels passing channel 0 straight through
    auto up_w = get_param(net, "up0.num.w1");
    for (int oc = 0; oc < 32; ++oc) up_w.at(oc, 0, 1, 1) = 1.0f;
    auto fin_w = get_param(net, "final.num.w1");
    for (int oc = 0; oc < 3; ++oc) fin_w.at(oc, 0, 1, 1) = 1.0f;

    Tensor x = random_input(Shape(1, 3, 6, 6), 11);
    Tensor out = net.forward(x);

    // blocks and end are zero, so skip = feat bias; then conv(delta)+b_up,
    // gelu, pixel shuffle, conv(delta)+b_final
    const double expected =
        (b_feat + b_up) * 0.5 * (1.0 + std::erf((b_feat + b_up) / std::sqrt(2.0))) +
        b_final;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        CHECK(out.data()[i] == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("parameter parity across the Table 2 presets at paper scale") {
    std::int64_t lo = INT64_MAX, hi = 0;
    for (ModelKind m : {ModelKind::resnet, ModelKind::pau_net, ModelKind::selfonn,
                        ModelKind::superonn, ModelKind::padenet}) {
        NetworkConfig cfg = make_preset(m, 2);
        SrNetwork net(cfg, 3);
        const std::int64_t count = net.num_scalars();
        CHECK(count == closed_form_count(cfg));
        MESSAGE(std::string(model_name(m)), ": ", count, " parameters");
        lo = std::min(lo, count);
        hi = std::max(hi, count);
    }
    CHECK(hi < 10 * lo);  // same order of magnitude
}

TEST_CASE("paon placement: fl and ll convert only one slot per block") {
    NetworkConfig cfg = make_preset(ModelKind::padenet, 2, 8, 1);
    cfg.block.placement = PaonPlacement::first_layer;
    SrNetwork fl(cfg, 9);
    CHECK(has_param(fl, "block0.l1.num.w2"));
    CHECK_FALSE(has_param(fl, "block0.l2.num.w2"));

    cfg.block.placement = PaonPlacement::last_layer;
    SrNetwork ll(cfg, 9);
    CHECK_FALSE(has_param(ll, "block0.l1.num.w2"));
    CHECK(has_param(ll, "block0.l2.num.w2"));
    CHECK(fl.num_scalars() == ll.num_scalars());
}

TEST_CASE("preset table invariants") {
    CHECK(make_preset(ModelKind::resnet, 2).block.kind == BlockKind::wrb);
    CHECK(make_preset(ModelKind::resnet, 2).block.numer_degree == 1);
    CHECK(make_preset(ModelKind::pau_net, 2).block.activation == ActivationKind::pau);
    CHECK(make_preset(ModelKind::pau_net, 2).pau_numer_degree == 7);
    CHECK(make_preset(ModelKind::pau_net, 2).pau_denom_degree == 6);
    CHECK(make_preset(ModelKind::selfonn, 2).block.numer_degree == 3);
    CHECK_FALSE(make_preset(ModelKind::selfonn, 2).block.shift);
    CHECK(make_preset(ModelKind::superonn, 2).block.shift);
    CHECK(make_preset(ModelKind::superonn, 2).block.shift_bound == 0);
    CHECK(make_preset(ModelKind::padenet, 2).block.numer_degree == 2);
    CHECK(make_preset(ModelKind::padenet, 2).block.denom_degree == 1);
    CHECK(make_preset(ModelKind::padenet, 2).block.variant == PaonVariant::smooth);

    NetworkConfig bad = make_preset(ModelKind::resnet, 2);
    bad.upscale = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    NetworkConfig bad2 = make_preset(ModelKind::resnet, 2);
    bad2.block.width_mult = 1.0;
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
}
