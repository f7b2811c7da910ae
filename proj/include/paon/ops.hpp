#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "paon/tensor.hpp"

namespace paon {

enum class Padding { circular, zero };

namespace detail {

inline int wrap_index(std::int64_t i, int n) {
    std::int64_t m = i % n;
    if (m < 0) m += n;
    return static_cast<int>(m);
}

template <class S>
void debug_assert_finite(const TensorT<S>& t, const char* op) {
#ifndef NDEBUG
    if (!t.all_finite())
        throw NumericError(std::string(op) + ": non-finite value in output" +
                           op_context_suffix());
#else
    (void)t;
    (void)op;
#endif
}

// Row-major strides of `t` viewed under the broadcast target `out`;
// broadcast (singleton) dims get stride 0.
inline std::array<std::int64_t, 4> bcast_strides(const Shape& t, const Shape& out) {
    std::array<std::int64_t, 4> raw = {
        static_cast<std::int64_t>(t.c) * t.h * t.w,
        static_cast<std::int64_t>(t.h) * t.w, t.w, 1};
    std::array<std::int64_t, 4> st{};
    for (int d = 0; d < 4; ++d)
        st[d] = (t.dim(d) == 1 && out.dim(d) != 1) ? 0 : raw[d];
    return st;
}

inline bool bcast_compatible(const Shape& a, const Shape& b, Shape& out) {
    int dims[4];
    for (int d = 0; d < 4; ++d) {
        int da = a.dim(d), db = b.dim(d);
        if (da != db && da != 1 && db != 1) return false;
        dims[d] = std::max(da, db);
    }
    out = Shape(dims[0], dims[1], dims[2], dims[3]);
    return true;
}

// Applies fn(out_index, a_index, b_index) over the broadcast iteration space.
template <class F>
void bcast_iterate(const Shape& out, const Shape& sa, const Shape& sb, F&& fn) {
    const auto stA = bcast_strides(sa, out);
    const auto stB = bcast_strides(sb, out);
    std::int64_t io = 0;
    for (int n = 0; n < out.n; ++n)
        for (int c = 0; c < out.c; ++c)
            for (int h = 0; h < out.h; ++h) {
                std::int64_t ia = n * stA[0] + c * stA[1] + h * stA[2];
                std::int64_t ib = n * stB[0] + c * stB[1] + h * stB[2];
                for (int w = 0; w < out.w; ++w, ++io)
                    fn(io, ia + w * stA[3], ib + w * stB[3]);
            }
}

// Copies one (H,W) plane into an (H+2ph, W+2pw) buffer with the requested
// halo. Circular wraps indices; zero fills.
template <class S>
void build_padded_plane(const S* src, int H, int W, int ph, int pw, Padding pad,
                        S* dst) {
    const int PW = W + 2 * pw;
    for (int i = 0; i < H + 2 * ph; ++i) {
        S* row = dst + static_cast<std::int64_t>(i) * PW;
        const int si = i - ph;
        if (pad == Padding::zero && (si < 0 || si >= H)) {
            std::fill(row, row + PW, S(0));
            continue;
        }
        const S* srow = src + static_cast<std::int64_t>(wrap_index(si, H)) * W;
        for (int j = 0; j < pw; ++j)
            row[j] = (pad == Padding::zero) ? S(0) : srow[wrap_index(j - pw, W)];
        std::copy(srow, srow + W, row + pw);
        for (int j = 0; j < pw; ++j)
            row[pw + W + j] = (pad == Padding::zero) ? S(0) : srow[wrap_index(W + j, W)];
    }
}

template <class S>
std::vector<S> build_padded_batch(const TensorT<S>& x, int ph, int pw, Padding pad) {
    const Shape s = x.shape();
    const int PH = s.h + 2 * ph, PW = s.w + 2 * pw;
    std::vector<S> out(static_cast<size_t>(s.n) * s.c * PH * PW);
    const S* src = x.data();
    parallel_for(static_cast<std::int64_t>(s.n) * s.c,
                 [&](std::int64_t lo, std::int64_t hi) {
                     for (std::int64_t p = lo; p < hi; ++p)
                         build_padded_plane(src + p * s.h * s.w, s.h, s.w, ph, pw,
                                            pad, out.data() + p * PH * PW);
                 });
    return out;
}

template <class S>
std::vector<S> pad_raw_batch(const std::vector<S>& raw, const Shape& s, int ph,
                             int pw, Padding pad) {
    const int PH = s.h + 2 * ph, PW = s.w + 2 * pw;
    std::vector<S> out(static_cast<size_t>(s.n) * s.c * PH * PW);
    parallel_for(static_cast<std::int64_t>(s.n) * s.c,
                 [&](std::int64_t lo, std::int64_t hi) {
                     for (std::int64_t p = lo; p < hi; ++p)
                         build_padded_plane(raw.data() + p * s.h * s.w, s.h, s.w,
                                            ph, pw, pad, out.data() + p * PH * PW);
                 });
    return out;
}

}  // namespace detail

// --- Convolution -------------------------------------------------------------

// Same-size 2D convolution, stride 1. `kernel` is (Cout, Cin, kh, kw) with odd
// kh, kw; `bias` (may be undefined) is (1, Cout, 1, 1). Circular padding wraps
// indices modulo H and W.
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& kernel,
                  const TensorT<S>& bias = {}, Padding pad = Padding::circular) {
    const Shape xs = x.shape(), ks = kernel.shape();
    if (ks.c != xs.c)
        throw ConfigError("conv2d: input channels " + std::to_string(xs.c) +
                          " do not match kernel Cin " + std::to_string(ks.c) +
                          op_context_suffix());
    if (ks.h % 2 == 0 || ks.w % 2 == 0)
        throw ConfigError("conv2d: kernel size must be odd, got " +
                          std::to_string(ks.h) + "x" + std::to_string(ks.w));
    if (bias.defined() && bias.shape() != Shape(1, ks.n, 1, 1))
        throw ConfigError("conv2d: bias shape " + bias.shape().str() +
                          " must be (1," + std::to_string(ks.n) + ",1,1)");

    const int N = xs.n, Cin = xs.c, H = xs.h, W = xs.w;
    const int Cout = ks.n, kh = ks.h, kw = ks.w;
    const int ph = kh / 2, pw = kw / 2;
    const int PH = H + 2 * ph, PW = W + 2 * pw;

    TensorT<S> out{Shape(N, Cout, H, W)};
    {
        std::vector<S> xpad = detail::build_padded_batch(x, ph, pw, pad);
        const S* kp = kernel.data();
        const S* bp = bias.defined() ? bias.data() : nullptr;
        S* op = out.data();
        parallel_for(static_cast<std::int64_t>(N) * Cout,
                     [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t t = lo; t < hi; ++t) {
                const int n = static_cast<int>(t / Cout);
                const int oc = static_cast<int>(t % Cout);
                S* plane = op + t * H * W;
                std::fill(plane, plane + static_cast<std::int64_t>(H) * W,
                          bp ? bp[oc] : S(0));
                for (int ic = 0; ic < Cin; ++ic) {
                    const S* xp = xpad.data() +
                                  (static_cast<std::int64_t>(n) * Cin + ic) * PH * PW;
                    const S* kr = kp + (static_cast<std::int64_t>(oc) * Cin + ic) * kh * kw;
                    for (int u = 0; u < kh; ++u)
                        for (int v = 0; v < kw; ++v) {
                            const S wv = kr[u * kw + v];
                            if (wv == S(0)) continue;
                            for (int i = 0; i < H; ++i) {
                                const S* srow = xp + static_cast<std::int64_t>(i + u) * PW + v;
                                S* orow = plane + static_cast<std::int64_t>(i) * W;
                                for (int j = 0; j < W; ++j) orow[j] += wv * srow[j];
                            }
                        }
                }
            }
        });
    }
    detail::debug_assert_finite(out, "conv2d");

    TapeT<S>* tape = TapeT<S>::current();
    const bool need = x.needs_grad() || kernel.needs_grad() ||
                      (bias.defined() && bias.needs_grad());
    if (tape && need) {
        auto xi = x.impl();
        auto ki = kernel.impl();
        auto bi = bias.defined() ? bias.impl() : nullptr;
        auto oi = out.impl();
        tape->record(oi, [=]() {
            const std::vector<S>& g = oi->grad;
            const Shape os = oi->shape;
            if (xi->needs_grad) {
                xi->ensure_grad();
                // gather formulation: correlate padded grad with flipped kernel
                std::vector<S> gpad = detail::pad_raw_batch(g, os, ph, pw, pad);
                S* gx = xi->grad.data();
                const S* kp = ki->value.data();
                parallel_for(static_cast<std::int64_t>(N) * Cin,
                             [&](std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t t = lo; t < hi; ++t) {
                        const int n = static_cast<int>(t / Cin);
                        const int ic = static_cast<int>(t % Cin);
                        S* plane = gx + t * H * W;
                        for (int oc = 0; oc < Cout; ++oc) {
                            const S* gp = gpad.data() +
                                          (static_cast<std::int64_t>(n) * Cout + oc) * PH * PW;
                            const S* kr = kp + (static_cast<std::int64_t>(oc) * Cin + ic) * kh * kw;
                            for (int u = 0; u < kh; ++u)
                                for (int v = 0; v < kw; ++v) {
                                    const S wv = kr[u * kw + v];
                                    if (wv == S(0)) continue;
                                    const int fu = kh - 1 - u, fv = kw - 1 - v;
                                    for (int i = 0; i < H; ++i) {
                                        const S* srow =
                                            gp + static_cast<std::int64_t>(i + fu) * PW + fv;
                                        S* orow = plane + static_cast<std::int64_t>(i) * W;
                                        for (int j = 0; j < W; ++j) orow[j] += wv * srow[j];
                                    }
                                }
                        }
                    }
                });
            }
            if (ki->needs_grad) {
                ki->ensure_grad();
                std::vector<S> xpad =
                    detail::pad_raw_batch(xi->value, xi->shape, ph, pw, pad);
                S* gw = ki->grad.data();
                parallel_for(static_cast<std::int64_t>(Cout) * Cin,
                             [&](std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t t = lo; t < hi; ++t) {
                        const int oc = static_cast<int>(t / Cin);
                        const int ic = static_cast<int>(t % Cin);
                        S* kslice = gw + t * kh * kw;
                        for (int n = 0; n < N; ++n) {
                            const S* gp = g.data() +
                                          (static_cast<std::int64_t>(n) * Cout + oc) * H * W;
                            const S* xp = xpad.data() +
                                          (static_cast<std::int64_t>(n) * Cin + ic) * PH * PW;
                            for (int u = 0; u < kh; ++u)
                                for (int v = 0; v < kw; ++v) {
                                    S acc = S(0);
                                    for (int i = 0; i < H; ++i) {
                                        const S* grow = gp + static_cast<std::int64_t>(i) * W;
                                        const S* xrow =
                                            xp + static_cast<std::int64_t>(i + u) * PW + v;
                                        for (int j = 0; j < W; ++j) acc += grow[j] * xrow[j];
                                    }
                                    kslice[u * kw + v] += acc;
                                }
                        }
                    }
                });
            }
            if (bi && bi->needs_grad) {
                bi->ensure_grad();
                S* gb = bi->grad.data();
                for (int oc = 0; oc < Cout; ++oc) {
                    S acc = S(0);
                    for (int n = 0; n < N; ++n) {
                        const S* gp = g.data() +
                                      (static_cast<std::int64_t>(n) * Cout + oc) * H * W;
                        for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i)
                            acc += gp[i];
                    }
                    gb[oc] += acc;
                }
            }
        });
    }
    return out;
}

// --- Elementwise binary ops with broadcasting --------------------------------

namespace detail {

enum class BinKind { add, sub, mul, div };

template <class S>
TensorT<S> binary_op(const TensorT<S>& a, const TensorT<S>& b, BinKind kind,
                     const char* name) {
    Shape os;
    if (!detail::bcast_compatible(a.shape(), b.shape(), os))
        throw ConfigError(std::string(name) + ": shapes " + a.shape().str() +
                          " and " + b.shape().str() + " are not broadcastable" +
                          op_context_suffix());

    if (kind == BinKind::div) {
        for (S v : b.vec())
            if (v == S(0))
                throw NumericError("div: zero denominator entry" +
                                   op_context_suffix());
    }

    TensorT<S> out{os};
    const S* av = a.data();
    const S* bv = b.data();
    S* ov = out.data();
    if (a.shape() == os && b.shape() == os) {
        const std::int64_t n = os.numel();
        switch (kind) {
            case BinKind::add:
                for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
                break;
            case BinKind::sub:
                for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i];
                break;
            case BinKind::mul:
                for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
                break;
            case BinKind::div:
                for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] / bv[i];
                break;
        }
    } else {
        detail::bcast_iterate(os, a.shape(), b.shape(),
                              [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
                                  switch (kind) {
                                      case BinKind::add: ov[io] = av[ia] + bv[ib]; break;
                                      case BinKind::sub: ov[io] = av[ia] - bv[ib]; break;
                                      case BinKind::mul: ov[io] = av[ia] * bv[ib]; break;
                                      case BinKind::div: ov[io] = av[ia] / bv[ib]; break;
                                  }
                              });
    }
    detail::debug_assert_finite(out, name);

    TapeT<S>* tape = TapeT<S>::current();
    if (tape && (a.needs_grad() || b.needs_grad())) {
        auto ai = a.impl();
        auto bi = b.impl();
        auto oi = out.impl();
        tape->record(oi, [=]() {
            const std::vector<S>& g = oi->grad;
            const bool ga = ai->needs_grad, gb = bi->needs_grad;
            if (ga) ai->ensure_grad();
            if (gb) bi->ensure_grad();
            S* agr = ga ? ai->grad.data() : nullptr;
            S* bgr = gb ? bi->grad.data() : nullptr;
            const S* av2 = ai->value.data();
            const S* bv2 = bi->value.data();
            detail::bcast_iterate(
                oi->shape, ai->shape, bi->shape,
                [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
                    const S gv = g[io];
                    switch (kind) {
                        case BinKind::add:
                            if (ga) agr[ia] += gv;
                            if (gb) bgr[ib] += gv;
                            break;
                        case BinKind::sub:
                            if (ga) agr[ia] += gv;
                            if (gb) bgr[ib] -= gv;
                            break;
                        case BinKind::mul:
                            if (ga) agr[ia] += gv * bv2[ib];
                            if (gb) bgr[ib] += gv * av2[ia];
                            break;
                        case BinKind::div: {
                            const S inv = S(1) / bv2[ib];
                            if (ga) agr[ia] += gv * inv;
                            if (gb) bgr[ib] -= gv * av2[ia] * inv * inv;
                            break;
                        }
                    }
                });
        });
    }
    return out;
}

}  // namespace detail

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::binary_op(a, b, detail::BinKind::add, "add");
}
template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::binary_op(a, b, detail::BinKind::sub, "sub");
}
template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::binary_op(a, b, detail::BinKind::mul, "mul");
}
template <class S>
TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b) {
    return detail::binary_op(a, b, detail::BinKind::div, "div");
}

// --- Elementwise unary ops ----------------------------------------------------

namespace detail {

// fwd(x) -> y, dfn(x, y) -> dy/dx
template <class S, class FwdF, class GradF>
TensorT<S> unary_op(const TensorT<S>& x, const char* name, FwdF fwd, GradF dfn) {
    TensorT<S> out{x.shape()};
    const S* xv = x.data();
    S* ov = out.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
    detail::debug_assert_finite(out, name);

    TapeT<S>* tape = TapeT<S>::current();
    if (tape && x.needs_grad()) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape->record(oi, [=]() {
            xi->ensure_grad();
            const std::vector<S>& g = oi->grad;
            S* gx = xi->grad.data();
            const S* xv2 = xi->value.data();
            const S* yv2 = oi->value.data();
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.size()); ++i)
                gx[i] += g[i] * dfn(xv2[i], yv2[i]);
        });
    }
    return out;
}

}  // namespace detail

// Integer elementwise power, k >= 1. Gradient is k*x^(k-1).
template <class S>
TensorT<S> pow_elementwise(const TensorT<S>& x, int k) {
    if (k < 1) throw UsageError("pow_elementwise: k must be >= 1, got " + std::to_string(k));
    auto ipow = [](S v, int p) {
        S r = v;
        for (int i = 1; i < p; ++i) r *= v;
        return r;
    };
    return detail::unary_op(
        x, "pow_elementwise", [&](S v) { return ipow(v, k); },
        [k, ipow](S v, S) { return k == 1 ? S(1) : S(k) * ipow(v, k - 1); });
}

template <class S>
TensorT<S> abs(const TensorT<S>& x) {
    return detail::unary_op(
        x, "abs", [](S v) { return v < S(0) ? -v : v; },
        [](S v, S) { return v > S(0) ? S(1) : v < S(0) ? S(-1) : S(0); });
}

template <class S>
TensorT<S> scalar_mul(const TensorT<S>& x, S c) {
    return detail::unary_op(
        x, "scalar_mul", [c](S v) { return c * v; }, [c](S, S) { return c; });
}

template <class S>
TensorT<S> scalar_add(const TensorT<S>& x, S c) {
    return detail::unary_op(
        x, "scalar_add", [c](S v) { return v + c; }, [](S, S) { return S(1); });
}

// Exact Gaussian-CDF GELU: x * Phi(x).
template <class S>
TensorT<S> gelu(const TensorT<S>& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return detail::unary_op(
        x, "gelu",
        [](S v) {
            const double xd = static_cast<double>(v);
            return static_cast<S>(xd * 0.5 * (1.0 + std::erf(xd * inv_sqrt2)));
        },
        [](S v, S) {
            const double xd = static_cast<double>(v);
            const double phi = 0.5 * (1.0 + std::erf(xd * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * xd * xd);
            return static_cast<S>(phi + xd * pdf);
        });
}

template <class S>
TensorT<S> tanh(const TensorT<S>& x) {
    return detail::unary_op(
        x, "tanh", [](S v) { return std::tanh(v); },
        [](S, S y) { return S(1) - y * y; });
}

// Robust loss density from the general adaptive loss family, for alpha not in
// {0, 2}: rho(e) = (|a-2|/a) * [ ((e/c)^2/|a-2| + 1)^(a/2) - 1 ].
template <class S>
TensorT<S> barron_rho(const TensorT<S>& x, double alpha, double c) {
    const double b = std::fabs(alpha - 2.0);
    return detail::unary_op(
        x, "barron_rho",
        [=](S v) {
            const double e = static_cast<double>(v);
            const double t = (e / c) * (e / c) / b + 1.0;
            return static_cast<S>(b / alpha * (std::pow(t, alpha / 2.0) - 1.0));
        },
        [=](S v, S) {
            const double e = static_cast<double>(v);
            const double t = (e / c) * (e / c) / b + 1.0;
            return static_cast<S>(e / (c * c) * std::pow(t, alpha / 2.0 - 1.0));
        });
}

// --- Pooling / reshaping ops ---------------------------------------------------

// Per-channel spatial mean, output (N, C, 1, 1).
template <class S>
TensorT<S> global_avg_pool(const TensorT<S>& x) {
    const Shape s = x.shape();
    TensorT<S> out{Shape(s.n, s.c, 1, 1)};
    const S* xv = x.data();
    S* ov = out.data();
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(s.n) * s.c; ++p) {
        S acc = S(0);
        const S* base = xv + p * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += base[i];
        ov[p] = acc / static_cast<S>(plane);
    }
    detail::debug_assert_finite(out, "global_avg_pool");

    TapeT<S>* tape = TapeT<S>::current();
    if (tape && x.needs_grad()) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape->record(oi, [=]() {
            xi->ensure_grad();
            const std::vector<S>& g = oi->grad;
            S* gx = xi->grad.data();
            const std::int64_t pl = static_cast<std::int64_t>(xi->shape.h) * xi->shape.w;
            for (std::int64_t p = 0; p < static_cast<std::int64_t>(g.size()); ++p) {
                const S gv = g[p] / static_cast<S>(pl);
                S* base = gx + p * pl;
                for (std::int64_t i = 0; i < pl; ++i) base[i] += gv;
            }
        });
    }
    return out;
}

// Depth-to-space: (N, C*r^2, H, W) -> (N, C, H*r, W*r).
template <class S>
TensorT<S> pixel_shuffle(const TensorT<S>& x, int r) {
    const Shape s = x.shape();
    if (r < 1 || s.c % (r * r) != 0)
        throw ConfigError("pixel_shuffle: channel count " + std::to_string(s.c) +
                          " not divisible by r^2 = " + std::to_string(r * r));
    const int C = s.c / (r * r), H = s.h, W = s.w;
    TensorT<S> out{Shape(s.n, C, H * r, W * r)};
    const S* xv = x.data();
    S* ov = out.data();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H * r; ++h)
                for (int w = 0; w < W * r; ++w) {
                    const int ic = c * r * r + (h % r) * r + (w % r);
                    ov[((static_cast<std::int64_t>(n) * C + c) * (H * r) + h) * (W * r) + w] =
                        xv[((static_cast<std::int64_t>(n) * s.c + ic) * H + h / r) * W + w / r];
                }

    TapeT<S>* tape = TapeT<S>::current();
    if (tape && x.needs_grad()) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape->record(oi, [=]() {
            xi->ensure_grad();
            const std::vector<S>& g = oi->grad;
            S* gx = xi->grad.data();
            const Shape is = xi->shape;
            const int C2 = is.c / (r * r), H2 = is.h, W2 = is.w;
            for (int n = 0; n < is.n; ++n)
                for (int c = 0; c < C2; ++c)
                    for (int h = 0; h < H2 * r; ++h)
                        for (int w = 0; w < W2 * r; ++w) {
                            const int ic = c * r * r + (h % r) * r + (w % r);
                            gx[((static_cast<std::int64_t>(n) * is.c + ic) * H2 + h / r) * W2 + w / r] +=
                                g[((static_cast<std::int64_t>(n) * C2 + c) * (H2 * r) + h) * (W2 * r) + w];
                        }
        });
    }
    return out;
}

// Per-channel translation with bilinear interpolation and circular wrapping.
// `shifts` is (N, 2C, 1, 1): entries (2c, 2c+1) are (dy, dx) for channel c.
// Differentiable w.r.t. both the input and the shifts.
template <class S>
TensorT<S> translate_bilinear(const TensorT<S>& x, const TensorT<S>& shifts) {
    const Shape s = x.shape();
    if (shifts.shape() != Shape(s.n, 2 * s.c, 1, 1))
        throw ConfigError("translate_bilinear: shifts shape " + shifts.shape().str() +
                          " must be (" + std::to_string(s.n) + "," +
                          std::to_string(2 * s.c) + ",1,1)");
    const int H = s.h, W = s.w;
    TensorT<S> out{s};
    const S* xv = x.data();
    const S* sv = shifts.data();
    S* ov = out.data();
    parallel_for(static_cast<std::int64_t>(s.n) * s.c,
                 [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            const int n = static_cast<int>(p / s.c);
            const int c = static_cast<int>(p % s.c);
            const double dy = static_cast<double>(sv[(static_cast<std::int64_t>(n) * 2 * s.c) + 2 * c]);
            const double dx = static_cast<double>(sv[(static_cast<std::int64_t>(n) * 2 * s.c) + 2 * c + 1]);
            const S* plane = xv + p * H * W;
            S* oplane = ov + p * H * W;
            for (int i = 0; i < H; ++i) {
                const double si = i - dy;
                const double fi0 = std::floor(si);
                const S fi = static_cast<S>(si - fi0);
                const int i0 = detail::wrap_index(static_cast<std::int64_t>(fi0), H);
                const int i1 = (i0 + 1) % H;
                for (int j = 0; j < W; ++j) {
                    const double sj = j - dx;
                    const double fj0 = std::floor(sj);
                    const S fj = static_cast<S>(sj - fj0);
                    const int j0 = detail::wrap_index(static_cast<std::int64_t>(fj0), W);
                    const int j1 = (j0 + 1) % W;
                    oplane[i * W + j] = (S(1) - fi) * ((S(1) - fj) * plane[i0 * W + j0] +
                                                       fj * plane[i0 * W + j1]) +
                                        fi * ((S(1) - fj) * plane[i1 * W + j0] +
                                              fj * plane[i1 * W + j1]);
                }
            }
        }
    });
    detail::debug_assert_finite(out, "translate_bilinear");

    TapeT<S>* tape = TapeT<S>::current();
    if (tape && (x.needs_grad() || shifts.needs_grad())) {
        auto xi = x.impl();
        auto si = shifts.impl();
        auto oi = out.impl();
        tape->record(oi, [=]() {
            const std::vector<S>& g = oi->grad;
            const bool gx_need = xi->needs_grad, gs_need = si->needs_grad;
            if (gx_need) xi->ensure_grad();
            if (gs_need) si->ensure_grad();
            S* gx = gx_need ? xi->grad.data() : nullptr;
            S* gs = gs_need ? si->grad.data() : nullptr;
            const S* xv2 = xi->value.data();
            const S* sv2 = si->value.data();
            const Shape is = xi->shape;
            parallel_for(static_cast<std::int64_t>(is.n) * is.c,
                         [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t p = lo; p < hi; ++p) {
                    const int n = static_cast<int>(p / is.c);
                    const int c = static_cast<int>(p % is.c);
                    const std::int64_t sidx = static_cast<std::int64_t>(n) * 2 * is.c + 2 * c;
                    const double dy = static_cast<double>(sv2[sidx]);
                    const double dx = static_cast<double>(sv2[sidx + 1]);
                    const S* plane = xv2 + p * is.h * is.w;
                    const S* gplane = g.data() + p * is.h * is.w;
                    S* gxp = gx_need ? gx + p * is.h * is.w : nullptr;
                    S acc_dy = S(0), acc_dx = S(0);
                    for (int i = 0; i < is.h; ++i) {
                        const double sy = i - dy;
                        const double fi0 = std::floor(sy);
                        const S fi = static_cast<S>(sy - fi0);
                        const int i0 = detail::wrap_index(static_cast<std::int64_t>(fi0), is.h);
                        const int i1 = (i0 + 1) % is.h;
                        for (int j = 0; j < is.w; ++j) {
                            const double sx = j - dx;
                            const double fj0 = std::floor(sx);
                            const S fj = static_cast<S>(sx - fj0);
                            const int j0 = detail::wrap_index(static_cast<std::int64_t>(fj0), is.w);
                            const int j1 = (j0 + 1) % is.w;
                            const S gv = gplane[i * is.w + j];
                            const S x00 = plane[i0 * is.w + j0], x01 = plane[i0 * is.w + j1];
                            const S x10 = plane[i1 * is.w + j0], x11 = plane[i1 * is.w + j1];
                            if (gx_need) {
                                gxp[i0 * is.w + j0] += gv * (S(1) - fi) * (S(1) - fj);
                                gxp[i0 * is.w + j1] += gv * (S(1) - fi) * fj;
                                gxp[i1 * is.w + j0] += gv * fi * (S(1) - fj);
                                gxp[i1 * is.w + j1] += gv * fi * fj;
                            }
                            if (gs_need) {
                                // d(out)/d(dy) = -d(out)/d(src_i), etc.
                                acc_dy -= gv * ((x10 - x00) * (S(1) - fj) + (x11 - x01) * fj);
                                acc_dx -= gv * ((x01 - x00) * (S(1) - fi) + (x11 - x10) * fi);
                            }
                        }
                    }
                    if (gs_need) {
                        gs[sidx] += acc_dy;
                        gs[sidx + 1] += acc_dx;
                    }
                }
            });
        });
    }
    return out;
}

// --- Reductions ---------------------------------------------------------------

namespace detail {

template <class S>
TensorT<S> reduce_op(const TensorT<S>& x, bool take_mean) {
    TensorT<S> out{Shape(1, 1, 1, 1)};
    const S* xv = x.data();
    S acc = S(0);
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) acc += xv[i];
    out.data()[0] = take_mean ? acc / static_cast<S>(n) : acc;
    detail::debug_assert_finite(out, take_mean ? "mean" : "sum");

    TapeT<S>* tape = TapeT<S>::current();
    if (tape && x.needs_grad()) {
        auto xi = x.impl();
        auto oi = out.impl();
        tape->record(oi, [=]() {
            xi->ensure_grad();
            const S gv = take_mean
                             ? oi->grad[0] / static_cast<S>(xi->value.size())
                             : oi->grad[0];
            S* gx = xi->grad.data();
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(xi->value.size()); ++i)
                gx[i] += gv;
        });
    }
    return out;
}

}  // namespace detail

template <class S>
TensorT<S> sum(const TensorT<S>& x) {
    return detail::reduce_op(x, false);
}
template <class S>
TensorT<S> mean(const TensorT<S>& x) {
    return detail::reduce_op(x, true);
}

}  // namespace paon
