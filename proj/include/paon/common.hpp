#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace paon {

// Shape of a dense 4D tensor: (batch, channels, height, width).
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    Shape() = default;
    Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    int dim(int i) const { return i == 0 ? n : i == 1 ? c : i == 2 ? h : w; }

    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Error taxonomy. CLI maps ConfigError/UsageError/IoError to exit 2 and
// NumericError to exit 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct UsageError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

// Thread-local label naming the layer currently executing, so numeric
// failures deep inside an op can report which layer they came from.
class OpContext {
public:
    explicit OpContext(const std::string& label) : prev_(current_label()) {
        current_label() = label;
    }
    ~OpContext() { current_label() = prev_; }
    OpContext(const OpContext&) = delete;
    OpContext& operator=(const OpContext&) = delete;

    static const std::string& label() { return current_label(); }

private:
    static std::string& current_label() {
        thread_local std::string label;
        return label;
    }
    std::string prev_;
};

inline std::string op_context_suffix() {
    const std::string& l = OpContext::label();
    return l.empty() ? std::string() : " [layer " + l + "]";
}

// --- Deterministic RNG -----------------------------------------------------
//
// splitmix64 for seed derivation and as the raw bit stream. Distributions are
// implemented here (not std::*_distribution) so that sampled sequences are
// identical across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Mixes an arbitrary tag sequence into a base seed. Used to derive
// independent streams per (seed, purpose, index).
inline std::uint64_t derive_seed(std::uint64_t base) { return base; }

template <class... Rest>
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, Rest... rest) {
    std::uint64_t s = base ^ (tag + 0x9e3779b97f4a7c15ULL + (base << 6) + (base >> 2));
    splitmix64(s);
    return derive_seed(splitmix64(s), rest...);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Warm up so that small seeds do not produce correlated first draws.
        splitmix64(state_);
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }
    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Modulo bias is negligible for the small n used here.
        return n ? next_u64() % n : 0;
    }

    // Standard normal via Box-Muller. Cached second value keeps the stream
    // a pure function of the draw count.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

// --- Parallel loop ----------------------------------------------------------
//
// Static partition over a persistent pool. Each index is processed exactly
// once by one worker with the same per-index arithmetic, so results are
// bitwise independent of the worker count.

void parallel_for(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& body);
int worker_count();
void set_worker_count(int n);

}  // namespace paon
