#pragma once

#include <optional>
#include <string>
#include <vector>

#include "paon/ops.hpp"
#include "paon/tensor.hpp"

namespace paon {

enum class PaonVariant { vanilla, abs_denom, smooth };

inline const char* variant_name(PaonVariant v) {
    switch (v) {
        case PaonVariant::vanilla: return "vanilla";
        case PaonVariant::abs_denom: return "A";
        case PaonVariant::smooth: return "S";
    }
    return "?";
}

// Degrees [M/N], variant, kernel geometry and the shift parameter b:
//   b < 0  : shifter off
//   b == 0 : unbounded learnable per-channel shift
//   b > 0  : shift constrained to [-b, b]
struct PaonSpec {
    int numer_degree = 1;  // M >= 1
    int denom_degree = 0;  // N >= 0
    PaonVariant variant = PaonVariant::smooth;
    int kh = 3;
    int kw = 3;
    int in_ch = 1;
    int out_ch = 1;
    int shift_param = -1;
    // The rational form with an unguarded denominator is for experiments only
    // and must be requested explicitly.
    bool allow_vanilla = false;
    // Smooth variant: reuse the full-order kernels for the lower-order
    // polynomials (drop the top term), or carry independent parameters.
    bool share_lower_order = true;

    void validate() const {
        if (numer_degree < 1)
            throw ConfigError("paon: numerator degree must be >= 1, got " +
                              std::to_string(numer_degree));
        if (denom_degree < 0)
            throw ConfigError("paon: denominator degree must be >= 0");
        if (kh % 2 == 0 || kw % 2 == 0)
            throw ConfigError("paon: kernel size must be odd, got " +
                              std::to_string(kh) + "x" + std::to_string(kw));
        if (in_ch < 1 || out_ch < 1)
            throw ConfigError("paon: channel counts must be positive");
        if (variant == PaonVariant::smooth &&
            std::abs(numer_degree - denom_degree) > 1)
            throw ConfigError("paon: smooth variant needs |M - N| <= 1, got [" +
                              std::to_string(numer_degree) + "/" +
                              std::to_string(denom_degree) + "]");
        if (variant == PaonVariant::vanilla && !allow_vanilla)
            throw ConfigError(
                "paon: the vanilla variant has an unguarded denominator and "
                "must be enabled explicitly");
    }

    bool shifter_active() const { return shift_param >= 0; }
};

template <class S>
struct ShifterParamsT {
    TensorT<S> weight;  // (2*C, C, 1, 1)
    TensorT<S> bias;    // (1, 2*C, 1, 1)
};

template <class S>
struct PaonParamsT {
    std::vector<TensorT<S>> numer;  // k = 1..M, each (out, in, kh, kw)
    TensorT<S> bias;                // (1, out, 1, 1); the denominator has none
    std::vector<TensorT<S>> denom;  // l = 1..N
    std::optional<ShifterParamsT<S>> shifter;
    // Present only for the smooth variant with share_lower_order = false.
    std::vector<TensorT<S>> lower_numer;  // k = 1..M-1
    TensorT<S> lower_bias;
    std::vector<TensorT<S>> lower_denom;  // l = 1..N-1

    void set_requires_grad(bool b) {
        for (auto& t : numer) t.set_requires_grad(b);
        bias.set_requires_grad(b);
        for (auto& t : denom) t.set_requires_grad(b);
        if (shifter) {
            shifter->weight.set_requires_grad(b);
            shifter->bias.set_requires_grad(b);
        }
        for (auto& t : lower_numer) t.set_requires_grad(b);
        if (lower_bias.defined()) lower_bias.set_requires_grad(b);
        for (auto& t : lower_denom) t.set_requires_grad(b);
    }
};

// Numerator order-1 kernel gets fan-in-scaled uniform init; each extra order
// is damped by 0.1 so the layer starts near its linear regime. Denominator
// kernels start at zero (denominator == 1), shifter starts at zero.
template <class S>
PaonParamsT<S> init_paon(const PaonSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(derive_seed(seed, 0x70616f6eULL));
    const double gain = 1.0 / std::sqrt(static_cast<double>(spec.in_ch) * spec.kh * spec.kw);

    auto uniform_kernel = [&](double g) {
        TensorT<S> t{Shape(spec.out_ch, spec.in_ch, spec.kh, spec.kw)};
        for (std::int64_t i = 0; i < t.numel(); ++i)
            t.data()[i] = static_cast<S>(rng.uniform(-g, g));
        return t;
    };

    PaonParamsT<S> p;
    double g = gain;
    for (int k = 1; k <= spec.numer_degree; ++k, g *= 0.1)
        p.numer.push_back(uniform_kernel(g));
    p.bias = TensorT<S>::zeros(Shape(1, spec.out_ch, 1, 1));
    for (int l = 1; l <= spec.denom_degree; ++l)
        p.denom.push_back(
            TensorT<S>::zeros(Shape(spec.out_ch, spec.in_ch, spec.kh, spec.kw)));
    if (spec.shifter_active()) {
        ShifterParamsT<S> sh;
        sh.weight = TensorT<S>::zeros(Shape(2 * spec.in_ch, spec.in_ch, 1, 1));
        sh.bias = TensorT<S>::zeros(Shape(1, 2 * spec.in_ch, 1, 1));
        p.shifter = std::move(sh);
    }
    if (spec.variant == PaonVariant::smooth && !spec.share_lower_order) {
        g = gain;
        for (int k = 1; k <= spec.numer_degree - 1; ++k, g *= 0.1)
            p.lower_numer.push_back(uniform_kernel(g));
        p.lower_bias = TensorT<S>::zeros(Shape(1, spec.out_ch, 1, 1));
        for (int l = 1; l <= spec.denom_degree - 1; ++l)
            p.lower_denom.push_back(
                TensorT<S>::zeros(Shape(spec.out_ch, spec.in_ch, spec.kh, spec.kw)));
    }
    return p;
}

// Learnable per-channel translation: spatial average -> 1x1 conv -> bounded
// activation -> bilinear resample. Zero-initialized parameters make this an
// exact identity until training moves the shifts.
template <class S>
TensorT<S> shifter_apply(const TensorT<S>& x, const ShifterParamsT<S>& p, int b) {
    if (b < 0) throw UsageError("shifter_apply: negative shift parameter means disabled");
    auto pooled = global_avg_pool(x);
    auto raw = conv2d(pooled, p.weight, p.bias, Padding::circular);
    auto shifts = b > 0 ? scalar_mul(tanh(raw), static_cast<S>(b)) : raw;
    return translate_bilinear(x, shifts);
}

namespace detail {

// w_0 + sum_{k=1..K} conv(w_k, x^k); powers[k-1] holds x^k.
template <class S>
TensorT<S> poly_numerator(const std::vector<TensorT<S>>& powers,
                          const std::vector<TensorT<S>>& kernels,
                          const TensorT<S>& bias, int order, Padding pad) {
    if (order == 0) return bias;  // broadcastable (1, out, 1, 1)
    TensorT<S> acc = conv2d(powers[0], kernels[0], bias, pad);
    for (int k = 2; k <= order; ++k)
        acc = add(acc, conv2d(powers[k - 1], kernels[k - 1], {}, pad));
    return acc;
}

// 1 + sum_{l=1..L} conv(w_l, x^l), optionally with per-term absolute value.
template <class S>
TensorT<S> poly_denominator(const std::vector<TensorT<S>>& powers,
                            const std::vector<TensorT<S>>& kernels, int order,
                            Padding pad, bool abs_terms) {
    TensorT<S> acc;
    for (int l = 1; l <= order; ++l) {
        TensorT<S> term = conv2d(powers[l - 1], kernels[l - 1], {}, pad);
        if (abs_terms) term = abs(term);
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scalar_add(acc, S(1));
}

}  // namespace detail

// Forward pass of a Padé neuron: optional shift, elementwise input powers,
// numerator/denominator convolutions, and the variant-specific ratio.
template <class S>
TensorT<S> paon_forward(const TensorT<S>& x, const PaonSpec& spec,
                        const PaonParamsT<S>& params,
                        Padding pad = Padding::circular,
                        const std::string& layer_name = {}) {
    spec.validate();
    if (x.shape().c != spec.in_ch)
        throw ConfigError("paon: input has " + std::to_string(x.shape().c) +
                          " channels, spec expects " + std::to_string(spec.in_ch));
    OpContext ctx(layer_name.empty() ? std::string("paon") : layer_name);

    TensorT<S> inp = x;
    if (spec.shifter_active()) inp = shifter_apply(inp, *params.shifter, spec.shift_param);

    const int M = spec.numer_degree, N = spec.denom_degree;
    const int max_pow = std::max(M, N);
    std::vector<TensorT<S>> powers;
    powers.push_back(inp);
    for (int k = 2; k <= max_pow; ++k) powers.push_back(pow_elementwise(inp, k));

    TensorT<S> pm = detail::poly_numerator(powers, params.numer, params.bias, M, pad);

    switch (spec.variant) {
        case PaonVariant::vanilla: {
            if (N == 0) return pm;  // denominator is identically 1
            TensorT<S> qn = detail::poly_denominator(powers, params.denom, N, pad, false);
            const S* qv = qn.data();
            for (std::int64_t i = 0; i < qn.numel(); ++i)
                if (std::fabs(static_cast<double>(qv[i])) < 1e-6) {
                    const Shape s = qn.shape();
                    const std::int64_t pl = static_cast<std::int64_t>(s.h) * s.w;
                    throw NumericError(
                        "vanilla paon denominator vanished (|Q| < 1e-6) at "
                        "(n=" + std::to_string(i / (s.c * pl)) +
                        ",c=" + std::to_string(i / pl % s.c) +
                        ",h=" + std::to_string(i / s.w % s.h) +
                        ",w=" + std::to_string(i % s.w) + ")" + op_context_suffix());
                }
            return div(pm, qn);
        }
        case PaonVariant::abs_denom: {
            if (N == 0) return pm;
            TensorT<S> d = detail::poly_denominator(powers, params.denom, N, pad, true);
            return div(pm, d);
        }
        case PaonVariant::smooth: {
            // (Q_N P_M + Q_{N-1} P_{M-1}) / (Q_N^2 + Q_{N-1}^2), where the
            // lower-order polynomials either truncate the same kernels or use
            // the independent copies. Q_0 == 1; with N == 0 the expression
            // collapses to P_M.
            if (N == 0) return pm;
            const auto& ln = spec.share_lower_order ? params.numer : params.lower_numer;
            const auto& lb = spec.share_lower_order ? params.bias : params.lower_bias;
            const auto& ld = spec.share_lower_order ? params.denom : params.lower_denom;
            TensorT<S> pm1 = detail::poly_numerator(powers, ln, lb, M - 1, pad);
            TensorT<S> qn = detail::poly_denominator(powers, params.denom, N, pad, false);
            if (N == 1) {
                TensorT<S> num = add(mul(qn, pm), pm1);
                TensorT<S> den = scalar_add(mul(qn, qn), S(1));
                return div(num, den);
            }
            TensorT<S> qn1 = detail::poly_denominator(powers, ld, N - 1, pad, false);
            TensorT<S> num = add(mul(qn, pm), mul(qn1, pm1));
            TensorT<S> den = add(mul(qn, qn), mul(qn1, qn1));
            return div(num, den);
        }
    }
    throw ConfigError("paon: unknown variant");
}

// --- Padé activation unit -----------------------------------------------------

// One scalar coefficient set per layer: numer (1,1,1,M+1) holds a_0..a_M,
// denom (1,1,1,N) holds b_1..b_N. Evaluated in the safe form
// (sum a_k x^k) / (1 + sum |b_l x^l|).
template <class S>
struct PAUParamsT {
    TensorT<S> numer;
    TensorT<S> denom;
};

template <class S>
TensorT<S> pau_activation(const TensorT<S>& x, const PAUParamsT<S>& p) {
    const int M = static_cast<int>(p.numer.numel()) - 1;
    const int N = static_cast<int>(p.denom.numel());
    TensorT<S> out{x.shape()};
    const S* xv = x.data();
    const S* av = p.numer.data();
    const S* bv = p.denom.data();
    S* ov = out.data();
    const std::int64_t count = x.numel();
    for (std::int64_t i = 0; i < count; ++i) {
        const S v = xv[i];
        S num = av[M];
        for (int k = M - 1; k >= 0; --k) num = num * v + av[k];
        S den = S(1), ap = v < S(0) ? -v : v, apk = ap;
        for (int l = 0; l < N; ++l, apk *= ap)
            den += (bv[l] < S(0) ? -bv[l] : bv[l]) * apk;
        ov[i] = num / den;
    }
    detail::debug_assert_finite(out, "pau_activation");

    TapeT<S>* tape = TapeT<S>::current();
    if (tape && (x.needs_grad() || p.numer.needs_grad() || p.denom.needs_grad())) {
        auto xi = x.impl();
        auto ai = p.numer.impl();
        auto bi = p.denom.impl();
        auto oi = out.impl();
        tape->record(oi, [=]() {
            const std::vector<S>& g = oi->grad;
            const bool gx_need = xi->needs_grad, ga_need = ai->needs_grad,
                       gb_need = bi->needs_grad;
            if (gx_need) xi->ensure_grad();
            if (ga_need) ai->ensure_grad();
            if (gb_need) bi->ensure_grad();
            const S* xv2 = xi->value.data();
            const S* av2 = ai->value.data();
            const S* bv2 = bi->value.data();
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.size()); ++i) {
                const S v = xv2[i];
                const S gv = g[i];
                S num = av2[M], dnum = S(0);
                for (int k = M - 1; k >= 0; --k) {
                    dnum = dnum * v + num;
                    num = num * v + av2[k];
                }
                const S ap = v < S(0) ? -v : v;
                const S sgn = v > S(0) ? S(1) : v < S(0) ? S(-1) : S(0);
                S den = S(1), dden = S(0);
                S apk = ap, apk1 = S(1);
                for (int l = 0; l < N; ++l, apk1 = apk, apk *= ap) {
                    const S babs = bv2[l] < S(0) ? -bv2[l] : bv2[l];
                    den += babs * apk;
                    dden += babs * S(l + 1) * apk1;
                }
                dden *= sgn;
                const S inv = S(1) / den;
                if (gx_need)
                    xi->grad[i] += gv * (dnum * den - num * dden) * inv * inv;
                if (ga_need) {
                    S xk = S(1);
                    for (int k = 0; k <= M; ++k, xk *= v)
                        ai->grad[k] += gv * xk * inv;
                }
                if (gb_need) {
                    S apl = ap;
                    for (int l = 0; l < N; ++l, apl *= ap) {
                        const S bs = bv2[l] > S(0) ? S(1) : bv2[l] < S(0) ? S(-1) : S(0);
                        bi->grad[l] += -gv * num * inv * inv * bs * apl;
                    }
                }
            }
        });
    }
    return out;
}

namespace detail {

// Dense symmetric solve by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_linear(std::vector<double> a,
                                        std::vector<double> b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
        if (piv != col) {
            for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        const double d = a[col * n + col];
        if (d == 0.0) continue;
        for (int r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / d;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < n; ++c) acc -= a[r * n + c] * x[c];
        x[r] = a[r * n + r] != 0.0 ? acc / a[r * n + r] : 0.0;
    }
    return x;
}

// Least squares via normal equations: columns(i) fills one design-matrix row.
inline std::vector<double> least_squares(
    int rows, int cols, const std::function<void(int, std::vector<double>&)>& fill_row,
    const std::function<double(int)>& rhs) {
    std::vector<double> ata(static_cast<size_t>(cols) * cols, 0.0), atb(cols, 0.0);
    std::vector<double> row(cols);
    for (int i = 0; i < rows; ++i) {
        fill_row(i, row);
        const double y = rhs(i);
        for (int r = 0; r < cols; ++r) {
            atb[r] += row[r] * y;
            for (int c = r; c < cols; ++c) ata[r * cols + c] += row[r] * row[c];
        }
    }
    for (int r = 0; r < cols; ++r)
        for (int c = 0; c < r; ++c) ata[r * cols + c] = ata[c * cols + r];
    return solve_linear(std::move(ata), std::move(atb), cols);
}

}  // namespace detail

// Coefficients from a least-squares fit of GELU on a [-3,3] grid: a joint
// linearized rational fit, denominator coefficients clamped to the safe
// (nonnegative) region, numerator refit against the clamped denominator.
// The fit is exact enough that max grid error stays well under 0.05.
template <class S>
PAUParamsT<S> init_pau_gelu(int numer_degree, int denom_degree) {
    const int M = numer_degree, N = denom_degree;
    const int grid = 121;
    const double span = 3.0;
    auto xg = [&](int i) { return -span + 2.0 * span * i / (grid - 1); };
    auto gelu_ref = [](double x) {
        return x * 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    };

    // stage 1: joint fit of P(t) - g * sum d_l |t|^l = g  in t = x/span
    std::vector<double> joint = detail::least_squares(
        grid, M + 1 + N,
        [&](int i, std::vector<double>& row) {
            const double t = xg(i) / span;
            const double gv = gelu_ref(xg(i));
            double tk = 1.0;
            for (int k = 0; k <= M; ++k, tk *= t) row[k] = tk;
            double al = std::fabs(t);
            for (int l = 0; l < N; ++l, al *= std::fabs(t)) row[M + 1 + l] = -gv * al;
        },
        [&](int i) { return gelu_ref(xg(i)); });

    std::vector<double> d(N);
    for (int l = 0; l < N; ++l) d[l] = std::max(joint[M + 1 + l], 0.0);

    // stage 2: refit the numerator against gelu * clamped denominator
    std::vector<double> a = detail::least_squares(
        grid, M + 1,
        [&](int i, std::vector<double>& row) {
            const double t = xg(i) / span;
            double tk = 1.0;
            for (int k = 0; k <= M; ++k, tk *= t) row[k] = tk;
        },
        [&](int i) {
            const double t = xg(i) / span;
            double den = 1.0, al = std::fabs(t);
            for (int l = 0; l < N; ++l, al *= std::fabs(t)) den += d[l] * al;
            return gelu_ref(xg(i)) * den;
        });

    // rescale the coefficients from the t = x/span basis back to x
    PAUParamsT<S> p;
    p.numer = TensorT<S>{Shape(1, 1, 1, M + 1)};
    p.denom = TensorT<S>{Shape(1, 1, 1, N)};
    double sk = 1.0;
    for (int k = 0; k <= M; ++k, sk *= span) p.numer.data()[k] = static_cast<S>(a[k] / sk);
    double sl = span;
    for (int l = 0; l < N; ++l, sl *= span) p.denom.data()[l] = static_cast<S>(d[l] / sl);
    return p;
}

// --- Layer wrappers with named parameters --------------------------------------

template <class S>
struct NamedParamT {
    std::string name;
    TensorT<S> tensor;
};

template <class S>
class PaonLayerT {
public:
    PaonLayerT() = default;
    PaonLayerT(PaonSpec spec, std::uint64_t seed, std::string name)
        : spec_(spec), params_(init_paon<S>(spec, seed)), name_(std::move(name)) {
        params_.set_requires_grad(true);
    }

    TensorT<S> forward(const TensorT<S>& x, Padding pad = Padding::circular) const {
        return paon_forward(x, spec_, params_, pad, name_);
    }

    void collect(std::vector<NamedParamT<S>>& out) const {
        for (size_t k = 0; k < params_.numer.size(); ++k)
            out.push_back({name_ + ".num.w" + std::to_string(k + 1), params_.numer[k]});
        out.push_back({name_ + ".num.bias", params_.bias});
        for (size_t l = 0; l < params_.denom.size(); ++l)
            out.push_back({name_ + ".den.w" + std::to_string(l + 1), params_.denom[l]});
        if (params_.shifter) {
            out.push_back({name_ + ".shift.weight", params_.shifter->weight});
            out.push_back({name_ + ".shift.bias", params_.shifter->bias});
        }
        for (size_t k = 0; k < params_.lower_numer.size(); ++k)
            out.push_back({name_ + ".lonum.w" + std::to_string(k + 1), params_.lower_numer[k]});
        if (params_.lower_bias.defined())
            out.push_back({name_ + ".lonum.bias", params_.lower_bias});
        for (size_t l = 0; l < params_.lower_denom.size(); ++l)
            out.push_back({name_ + ".loden.w" + std::to_string(l + 1), params_.lower_denom[l]});
    }

    const PaonSpec& spec() const { return spec_; }
    PaonParamsT<S>& params() { return params_; }
    const PaonParamsT<S>& params() const { return params_; }
    const std::string& name() const { return name_; }

private:
    PaonSpec spec_;
    PaonParamsT<S> params_;
    std::string name_;
};

template <class S>
class PauLayerT {
public:
    PauLayerT() = default;
    PauLayerT(int numer_degree, int denom_degree, std::string name)
        : params_(init_pau_gelu<S>(numer_degree, denom_degree)), name_(std::move(name)) {
        params_.numer.set_requires_grad(true);
        params_.denom.set_requires_grad(true);
    }

    TensorT<S> forward(const TensorT<S>& x) const {
        OpContext ctx(name_);
        return pau_activation(x, params_);
    }

    void collect(std::vector<NamedParamT<S>>& out) const {
        out.push_back({name_ + ".a", params_.numer});
        out.push_back({name_ + ".b", params_.denom});
    }

    PAUParamsT<S>& params() { return params_; }

private:
    PAUParamsT<S> params_;
    std::string name_;
};

using PaonLayer = PaonLayerT<float>;
using PauLayer = PauLayerT<float>;
using NamedParam = NamedParamT<float>;

}  // namespace paon
