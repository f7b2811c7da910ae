#include <doctest.h>

#include <cmath>

#include "paon/layers.hpp"
#include "oracles.hpp"

using namespace paon;
using TD = TensorT<double>;

namespace {

PaonSpec make_spec(int m, int n, PaonVariant v, int in_ch, int out_ch,
                   int shift = -1) {
    PaonSpec s;
    s.numer_degree = m;
    s.denom_degree = n;
    s.variant = v;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.shift_param = shift;
    s.allow_vanilla = (v == PaonVariant::vanilla);
    return s;
}

void randomize(TD& t, Rng& rng, double lo, double hi) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
}

void randomize_params(PaonParamsT<double>& p, Rng& rng, double scale = 0.3) {
    for (auto& k : p.numer) randomize(k, rng, -scale, scale);
    randomize(p.bias, rng, -scale, scale);
    for (auto& k : p.denom) randomize(k, rng, -scale, scale);
    if (p.shifter) {
        randomize(p.shifter->weight, rng, -scale, scale);
        randomize(p.shifter->bias, rng, -scale, scale);
    }
    for (auto& k : p.lower_numer) randomize(k, rng, -scale, scale);
    if (p.lower_bias.defined()) randomize(p.lower_bias, rng, -scale, scale);
    for (auto& k : p.lower_denom) randomize(k, rng, -scale, scale);
}

std::vector<TD> param_tensors(PaonLayerT<double>& layer) {
    std::vector<NamedParamT<double>> named;
    layer.collect(named);
    std::vector<TD> out;
    for (auto& n : named) out.push_back(n.tensor);
    return out;
}

// Independent reference: convolved power series evaluated with the oracle
// convolution, numerator only ([M/0] family).
std::vector<double> ref_generative(const TD& x, PaonParamsT<double>& p, int M,
                                   int out_ch) {
    const Shape s = x.shape();
    std::vector<double> acc;
    for (int k = 1; k <= M; ++k) {
        std::vector<double> xk(x.vec());
        for (auto& v : xk) v = std::pow(v, k);
        std::vector<double> bias(k == 1 ? std::vector<double>(p.bias.vec()) : std::vector<double>());
        auto term = oracle::conv2d(xk, s.n, s.c, s.h, s.w, p.numer[k - 1].vec(),
                                   out_ch, 3, 3, bias, true);
        if (acc.empty()) acc = term;
        else
            for (size_t i = 0; i < acc.size(); ++i) acc[i] += term[i];
    }
    return acc;
}

// Independent bilinear translate with circular wrap, straight from the
// interpolation formula.
std::vector<double> ref_translate(const std::vector<double>& x, int N, int C,
                                  int H, int W, const std::vector<double>& shifts) {
    std::vector<double> out(x.size());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double dy = shifts[(n * 2 * C) + 2 * c];
            const double dx = shifts[(n * 2 * C) + 2 * c + 1];
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    const double si = i - dy, sj = j - dx;
                    const int i0 = static_cast<int>(std::floor(si));
                    const int j0 = static_cast<int>(std::floor(sj));
                    const double fi = si - i0, fj = sj - j0;
                    auto px = [&](int a, int b) {
                        return x[((static_cast<size_t>(n) * C + c) * H + oracle::wrap(a, H)) * W +
                                 oracle::wrap(b, W)];
                    };
                    out[((static_cast<size_t>(n) * C + c) * H + i) * W + j] =
                        (1 - fi) * ((1 - fj) * px(i0, j0) + fj * px(i0, j0 + 1)) +
                        fi * ((1 - fj) * px(i0 + 1, j0) + fj * px(i0 + 1, j0 + 1));
                }
        }
    return out;
}

}  // namespace

TEST_CASE("paon [1/0] with shifter off reduces to an ordinary convolution") {
    Rng rng(101);
    TD x = oracle::rand_tensor(Shape(2, 3, 6, 6), rng);
    auto spec = make_spec(1, 0, PaonVariant::smooth, 3, 4);
    auto params = init_paon<double>(spec, 7);

    TD expected = conv2d(x, params.numer[0], params.bias, Padding::circular);
    TD got = paon_forward(x, spec, params);
    for (std::int64_t i = 0; i < got.numel(); ++i)
        CHECK(std::fabs(got.data()[i] - expected.data()[i]) < 1e-6);

    // and against the fully independent oracle
    auto ref = oracle::conv2d(x.vec(), 2, 3, 6, 6, params.numer[0].vec(), 4, 3, 3,
                              params.bias.vec(), true);
    for (size_t i = 0; i < ref.size(); ++i)
        CHECK(std::fabs(got.data()[i] - ref[i]) < 1e-9);
}

TEST_CASE("paon [2/0] realizes the quadratic neuron A(x^2) + B(x)") {
    Rng rng(103);
    TD x = oracle::rand_tensor(Shape(1, 2, 5, 5), rng);
    auto spec = make_spec(2, 0, PaonVariant::abs_denom, 2, 3);
    auto params = init_paon<double>(spec, 11);
    randomize_params(params, rng);

    TD got = paon_forward(x, spec, params);
    auto ref = ref_generative(x, params, 2, 3);
    for (size_t i = 0; i < ref.size(); ++i)
        CHECK(std::fabs(got.data()[i] - ref[i]) < 1e-9);
}

TEST_CASE("paon-A with zero denominator kernels equals the [M/0] reduction") {
    Rng rng(107);
    TD x = oracle::rand_tensor(Shape(1, 2, 5, 5), rng);
    auto spec_a = make_spec(2, 1, PaonVariant::abs_denom, 2, 2);
    auto params = init_paon<double>(spec_a, 13);  // denominator kernels start at zero
    for (auto& k : params.numer) randomize(k, rng, -0.4, 0.4);

    auto spec0 = make_spec(2, 0, PaonVariant::abs_denom, 2, 2);
    PaonParamsT<double> p0;
    p0.numer = params.numer;
    p0.bias = params.bias;
    TD a = paon_forward(x, spec_a, params);
    TD b = paon_forward(x, spec0, p0);
    CHECK(a.vec() == b.vec());
}

TEST_CASE("paon-S [2/1] matches the pointwise smoothed-ratio oracle") {
    Rng rng(109);
    TD x = oracle::rand_tensor(Shape(1, 2, 5, 5), rng);
    auto spec = make_spec(2, 1, PaonVariant::smooth, 2, 3);
    auto params = init_paon<double>(spec, 17);
    randomize_params(params, rng, 0.25);

    TD got = paon_forward(x, spec, params);

    // oracle path: convolve powers independently, then apply Eq-style ratio
    const Shape s = x.shape();
    std::vector<double> x2(x.vec());
    for (auto& v : x2) v *= v;
    auto c1 = oracle::conv2d(x.vec(), s.n, s.c, s.h, s.w, params.numer[0].vec(), 3,
                             3, 3, params.bias.vec(), true);
    auto c2 = oracle::conv2d(x2, s.n, s.c, s.h, s.w, params.numer[1].vec(), 3, 3,
                             3, {}, true);
    auto d1 = oracle::conv2d(x.vec(), s.n, s.c, s.h, s.w, params.denom[0].vec(), 3,
                             3, 3, {}, true);
    double max_diff = 0;
    for (size_t i = 0; i < c1.size(); ++i) {
        const double pm = c1[i] + c2[i];  // w0 + w1*x + w2*x^2
        const double pm1 = c1[i];         // truncation shares kernels: w0 + w1*x
        const double qn = 1.0 + d1[i];
        const double qn1 = 1.0;  // Q_0
        max_diff = std::max(
            max_diff, std::fabs(oracle::smooth_ratio(pm, pm1, qn, qn1) - got.data()[i]));
    }
    CHECK(max_diff < 1e-5);
}

TEST_CASE("paon-S without kernel sharing uses the independent lower-order set") {
    Rng rng(127);
    TD x = oracle::rand_tensor(Shape(1, 2, 4, 4), rng);
    auto spec = make_spec(2, 1, PaonVariant::smooth, 2, 2);
    spec.share_lower_order = false;
    auto params = init_paon<double>(spec, 23);
    CHECK(params.lower_numer.size() == 1);
    CHECK(params.lower_bias.defined());
    randomize_params(params, rng, 0.25);

    TD unshared = paon_forward(x, spec, params);
    spec.share_lower_order = true;
    TD shared = paon_forward(x, spec, params);
    bool any_diff = false;
    for (std::int64_t i = 0; i < unshared.numel(); ++i)
        if (unshared.data()[i] != shared.data()[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("vanilla paon is gated and reports vanishing denominators") {
    auto spec = make_spec(1, 1, PaonVariant::vanilla, 1, 1);
    spec.allow_vanilla = false;
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    spec.allow_vanilla = true;
    auto params = init_paon<double>(spec, 3);
    // denominator 1 + w*x with a delta kernel scaled to cross zero on [-1,1]
    params.denom[0].at(0, 0, 1, 1) = -2.0;
    TD x = TD::full(Shape(1, 1, 3, 3), 0.5);  // Q = 1 - 2*0.5 = 0
    CHECK_THROWS_AS(paon_forward(x, spec, params, Padding::circular, "gate_test"),
                    NumericError);

    // small denominators stay usable
    params.denom[0].at(0, 0, 1, 1) = 0.3;
    TD ok = paon_forward(x, spec, params);
    CHECK(ok.all_finite());
}

TEST_CASE("paon-A implied denominator never drops below one") {
    Rng rng(131);
    for (int trial = 0; trial < 50; ++trial) {
        TD x = oracle::rand_tensor(Shape(1, 2, 4, 4), rng);
        auto spec = make_spec(2, 2, PaonVariant::abs_denom, 2, 2);
        auto params = init_paon<double>(spec, 1000 + trial);
        randomize_params(params, rng, 0.8);
        TD y = paon_forward(x, spec, params);
        auto pm = ref_generative(x, params, 2, 2);
        for (size_t i = 0; i < pm.size(); ++i) {
            // y = P / D  =>  D = P / y must be >= 1 wherever it is observable
            if (std::fabs(y.data()[i]) > 1e-7) {
                CHECK(pm[i] / y.data()[i] >= 1.0 - 1e-9);
            }
        }
    }
}

TEST_CASE("paon-S stays finite when Q_N crosses zero") {
    Rng rng(137);
    TD x = oracle::rand_tensor(Shape(1, 1, 4, 4), rng);
    auto spec = make_spec(2, 2, PaonVariant::smooth, 1, 1);
    auto params = init_paon<double>(spec, 29);
    randomize(params.numer[0], rng, -0.5, 0.5);
    randomize(params.numer[1], rng, -0.5, 0.5);
    // adversarial: Q_2 = 1 - 4 x^2 crosses zero on [-1,1]; Q_1 stays 1
    params.denom[0] = TD::zeros(params.denom[0].shape());
    params.denom[1].at(0, 0, 1, 1) = -4.0;
    x.at(0, 0, 1, 1) = 0.5;  // exact zero crossing of Q_2 at this input value
    params.set_requires_grad(true);

    TapeT<double> tape;
    TD y;
    {
        TapeT<double>::Scope scope(tape);
        y = paon_forward(x, spec, params);
        tape.backward(mean(pow_elementwise(y, 2)));
    }
    CHECK(y.all_finite());
    PaonLayerT<double> dummy;
    for (auto& k : params.numer)
        for (double g : k.grad()) CHECK(std::isfinite(g));
    for (auto& k : params.denom)
        for (double g : k.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("shifter: zero initialization is the exact identity") {
    Rng rng(139);
    TD x = oracle::rand_tensor(Shape(2, 3, 5, 5), rng);
    for (int b : {0, 1, 3}) {
        auto spec = make_spec(1, 0, PaonVariant::smooth, 3, 3, b);
        auto params = init_paon<double>(spec, 31);
        TD y = shifter_apply(x, *params.shifter, b);
        CHECK(y.vec() == x.vec());
    }
}

TEST_CASE("shifter: shift magnitude saturates at b") {
    Rng rng(149);
    TD x = oracle::rand_tensor(Shape(1, 2, 6, 6), rng);
    auto spec = make_spec(1, 0, PaonVariant::smooth, 2, 2, 2);
    auto params = init_paon<double>(spec, 37);
    // push the raw shifts to +/- infinity; tanh saturates to exactly +/-1
    for (std::int64_t i = 0; i < params.shifter->bias.numel(); ++i)
        params.shifter->bias.data()[i] = (i % 2 == 0) ? 1e9 : -1e9;

    TD got = shifter_apply(x, *params.shifter, 2);
    TD shifts = TD::from_data(Shape(1, 4, 1, 1), {2.0, -2.0, 2.0, -2.0});
    TD expected = translate_bilinear(x, shifts);
    CHECK(got.vec() == expected.vec());
}

TEST_CASE("shifter gradients reach the 1x1 conv parameters") {
    Rng rng(151);
    TD x = oracle::rand_tensor(Shape(1, 2, 5, 5), rng);
    auto spec = make_spec(1, 0, PaonVariant::smooth, 2, 2, 1);
    auto params = init_paon<double>(spec, 41);
    randomize(params.shifter->weight, rng, -0.3, 0.3);
    randomize(params.shifter->bias, rng, -0.3, 0.3);
    params.shifter->weight.set_requires_grad(true);
    params.shifter->bias.set_requires_grad(true);

    TD proj = oracle::rand_tensor(x.shape(), rng);
    auto res = oracle::check_gradients(
        {params.shifter->weight, params.shifter->bias},
        [&] { return sum(mul(shifter_apply(x, *params.shifter, 1), proj)); }, 1e-4);
    CHECK(res.max_rel_err < 1e-3);

    double norm = 0;
    for (double g : params.shifter->weight.grad()) norm += g * g;
    CHECK(norm > 0);
}

TEST_CASE("pau: degenerate coefficient sets") {
    TD x = TD::from_data(Shape(1, 1, 1, 4), {-2.0, -0.5, 0.5, 2.0});

    PAUParamsT<double> zero;
    zero.numer = TD::zeros(Shape(1, 1, 1, 3));
    zero.denom = TD::zeros(Shape(1, 1, 1, 2));
    TD y0 = pau_activation(x, zero);
    for (std::int64_t i = 0; i < y0.numel(); ++i) CHECK(y0.data()[i] == 0.0);

    PAUParamsT<double> ident;
    ident.numer = TD::from_data(Shape(1, 1, 1, 2), {0.0, 1.0});
    ident.denom = TD::zeros(Shape(1, 1, 1, 2));
    TD y1 = pau_activation(x, ident);
    for (std::int64_t i = 0; i < y1.numel(); ++i) CHECK(y1.data()[i] == x.data()[i]);
}

TEST_CASE("pau: GELU initialization fits within 0.05 on the [-3,3] grid") {
    auto p = init_pau_gelu<double>(7, 6);
    double max_err = 0;
    for (int i = 0; i <= 120; ++i) {
        const double xv = -3.0 + 6.0 * i / 120.0;
        TD x = TD::from_data(Shape(1, 1, 1, 1), {xv});
        max_err = std::max(max_err,
                           std::fabs(pau_activation(x, p).item() - oracle::gelu(xv)));
    }
    CHECK(max_err < 0.05);
    // denominator is evaluated in the safe form, so it stays >= 1
    for (double b : p.denom.vec()) CHECK(b >= 0.0);
}

TEST_CASE("pau is pointwise: spatial permutation commutes") {
    Rng rng(157);
    TD x = oracle::rand_tensor(Shape(1, 1, 4, 6), rng, -3, 3);
    auto p = init_pau_gelu<double>(5, 4);
    TD y = pau_activation(x, p);

    TD xr{x.shape()};  // spatially reversed copy
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) xr.data()[i] = x.data()[n - 1 - i];
    TD yr = pau_activation(xr, p);
    for (std::int64_t i = 0; i < n; ++i) CHECK(yr.data()[i] == y.data()[n - 1 - i]);
}

TEST_CASE("pau gradients match finite differences") {
    Rng rng(163);
    TD x = oracle::rand_tensor(Shape(1, 2, 3, 3), rng, -2, 2);
    auto p = init_pau_gelu<double>(4, 3);
    // move off the fitted point so b-gradients are generic
    for (std::int64_t i = 0; i < p.denom.numel(); ++i)
        p.denom.data()[i] += 0.05 * (i + 1);
    x.set_requires_grad(true);
    p.numer.set_requires_grad(true);
    p.denom.set_requires_grad(true);
    TD proj = oracle::rand_tensor(x.shape(), rng);
    auto res = oracle::check_gradients(
        {x, p.numer, p.denom},
        [&] { return sum(mul(pau_activation(x, p), proj)); });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("init_paon: determinism and fresh-state reductions") {
    auto spec = make_spec(3, 2, PaonVariant::abs_denom, 2, 3, 0);
    auto p1 = init_paon<float>(spec, 12345);
    auto p2 = init_paon<float>(spec, 12345);
    for (size_t k = 0; k < p1.numer.size(); ++k)
        CHECK(p1.numer[k].vec() == p2.numer[k].vec());
    CHECK(p1.bias.vec() == p2.bias.vec());

    auto p3 = init_paon<float>(spec, 54321);
    CHECK(p1.numer[0].vec() != p3.numer[0].vec());

    // all denominator kernels zero: freshly initialized Paon-A == [M/0]
    for (auto& d : p1.denom)
        for (float v : d.vec()) CHECK(v == 0.0f);
    // higher-order damping: order-2 kernels an order of magnitude smaller
    auto mag = [](const Tensor& t) {
        float m = 0;
        for (float v : t.vec()) m = std::max(m, std::fabs(v));
        return m;
    };
    CHECK(mag(p1.numer[1]) < 0.2f * mag(p1.numer[0]));
}

TEST_CASE("reduction chain: generative and super neuron references") {
    Rng rng(167);
    TD x = oracle::rand_tensor(Shape(1, 2, 6, 6), rng);

    // [3/0], shifter off: generative neuron (sum of convolved powers)
    auto gen_spec = make_spec(3, 0, PaonVariant::abs_denom, 2, 3);
    auto gen_params = init_paon<double>(gen_spec, 43);
    randomize_params(gen_params, rng, 0.3);
    TD gen = paon_forward(x, gen_spec, gen_params);
    auto gen_ref = ref_generative(x, gen_params, 3, 3);
    for (size_t i = 0; i < gen_ref.size(); ++i)
        CHECK(std::fabs(gen.data()[i] - gen_ref[i]) < 1e-6);

    // [3/0], b = 0: super-neuron-style shifted generative neuron
    auto sup_spec = make_spec(3, 0, PaonVariant::abs_denom, 2, 3, 0);
    auto sup_params = init_paon<double>(sup_spec, 47);
    randomize_params(sup_params, rng, 0.3);
    TD sup = paon_forward(x, sup_spec, sup_params);

    // independent reference: mean -> 1x1 matrix multiply -> bilinear -> powers
    const Shape s = x.shape();
    std::vector<double> pooled(s.c, 0.0);
    for (int c = 0; c < s.c; ++c) {
        double acc = 0;
        for (int i = 0; i < s.h; ++i)
            for (int j = 0; j < s.w; ++j) acc += x.at(0, c, i, j);
        pooled[c] = acc / (s.h * s.w);
    }
    std::vector<double> shifts(2 * s.c, 0.0);
    for (int oc = 0; oc < 2 * s.c; ++oc) {
        double acc = sup_params.shifter->bias.data()[oc];
        for (int ic = 0; ic < s.c; ++ic)
            acc += sup_params.shifter->weight.at(oc, ic, 0, 0) * pooled[ic];
        shifts[oc] = acc;  // b = 0: identity activation, unbounded
    }
    auto shifted = ref_translate(x.vec(), 1, s.c, s.h, s.w, shifts);
    TD shifted_t = TD::from_data(s, shifted);
    auto sup_ref = ref_generative(shifted_t, sup_params, 3, 3);
    for (size_t i = 0; i < sup_ref.size(); ++i)
        CHECK(std::fabs(sup.data()[i] - sup_ref[i]) < 1e-6);
}

TEST_CASE("scale covariance: doubling [1/0] kernels doubles the output exactly") {
    Rng rng(173);
    TD x = oracle::rand_tensor(Shape(1, 2, 5, 5), rng);
    auto spec = make_spec(1, 0, PaonVariant::smooth, 2, 2);
    auto params = init_paon<double>(spec, 53);  // bias stays zero

    TD y1 = paon_forward(x, spec, params);
    for (std::int64_t i = 0; i < params.numer[0].numel(); ++i)
        params.numer[0].data()[i] *= 2.0;
    TD y2 = paon_forward(x, spec, params);
    for (std::int64_t i = 0; i < y1.numel(); ++i)
        CHECK(y2.data()[i] == 2.0 * y1.data()[i]);
}

TEST_CASE("every parameter of every variant receives gradient") {
    Rng rng(179);
    TD x = oracle::rand_tensor(Shape(2, 2, 5, 5), rng);

    struct Case {
        PaonVariant v;
        int m, n, b;
    };
    for (auto cs : {Case{PaonVariant::vanilla, 2, 1, -1},
                    Case{PaonVariant::abs_denom, 2, 1, 0},
                    Case{PaonVariant::abs_denom, 3, 2, -1},
                    Case{PaonVariant::smooth, 2, 1, 0},
                    Case{PaonVariant::smooth, 2, 2, -1},
                    Case{PaonVariant::smooth, 3, 2, 1}}) {
        PaonLayerT<double> layer(make_spec(cs.m, cs.n, cs.v, 2, 2, cs.b),
                                 500 + cs.m * 10 + cs.n, "probe");
        Rng prng(derive_seed(99, cs.m, cs.n, static_cast<std::uint64_t>(cs.b + 1)));
        randomize_params(layer.params(), prng, 0.2);  // generic parameter point
        layer.params().set_requires_grad(true);

        TD proj = oracle::rand_tensor(x.shape(), prng);
        TapeT<double> tape;
        {
            TapeT<double>::Scope scope(tape);
            tape.backward(sum(mul(layer.forward(x), proj)));
        }
        std::vector<NamedParamT<double>> named;
        layer.collect(named);
        for (auto& np : named) {
            double norm = 0;
            for (double g : np.tensor.grad()) norm += g * g;
            INFO("variant ", variant_name(cs.v), " [", cs.m, "/", cs.n,
                 "] param ", np.name);
            CHECK(norm > 0);
        }
    }
}

TEST_CASE("full paon-S layer: parameter gradients vs finite differences") {
    Rng rng(181);
    TD x = oracle::rand_tensor(Shape(1, 2, 4, 4), rng);
    PaonLayerT<double> layer(make_spec(2, 1, PaonVariant::smooth, 2, 2, 0), 61, "fd");
    Rng prng(62);
    randomize_params(layer.params(), prng, 0.25);
    layer.params().set_requires_grad(true);

    TD proj = oracle::rand_tensor(x.shape(), rng);
    auto res = oracle::check_gradients(
        param_tensors(layer), [&] { return sum(mul(layer.forward(x), proj)); });
    CHECK(res.max_rel_err < 1e-3);
    CHECK(res.checked > 100);  // the whole parameter set was exercised
}
