// noise.hpp — reproducible Q-Wiener increments, exactly sampled stochastic
// convolutions for diagonal noise, and the diagonal iterated integrals of the
// Milstein schemes.
//
// Randomness is counter-based: every normal pair is a pure function of
// (seed, path_index, fine_step, mode).  Streams are therefore reproducible
// bit-for-bit regardless of thread count or call order, and coarse
// increments are exact sums of the finest-level increments they contain.
//
// Per fine step and mode the generator draws the jointly Gaussian pair
//   dW      ~ N(0, q h)
//   Iconv   = int_step e^{-lambda (t_end - s)} dW_s
// via the 2x2 Cholesky factor of the exact covariance
//   Var(dW) = q h,  Var(Iconv) = q (1-e^{-2 lambda h})/(2 lambda),
//   Cov     = q (1-e^{-lambda h})/lambda,
// so schemes that consume plain increments and schemes that consume exact
// convolutions can be compared with common random numbers.

#pragma once

#include "mildspde/spectral.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace mildspde {

// SplitMix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t counter_key(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                                 std::uint64_t mode, std::uint64_t channel) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ path);
    h = mix64(h ^ step);
    return mix64(h ^ (mode * 2ULL + channel));
}

// uniform in (0,1), never exactly 0 or 1
inline double u01(std::uint64_t x) {
    return (static_cast<double>(x >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

namespace noise_detail {

// Table-driven ln and sin/cos for the generator hot loop: 4096-entry anchor
// tables plus short polynomial corrections, absolute error below 1e-13.
// Checked against libm in the test suite.

struct LogEntry {
    double ln;   // ln(1 + i/4096)
    double inv;  // 1 / (1 + i/4096)
};
struct TrigEntry {
    double s, c;  // sin/cos at 2 pi i / 4096
};

inline const LogEntry* log_table() {
    static const std::vector<LogEntry> table = [] {
        std::vector<LogEntry> t(4097);
        for (int i = 0; i <= 4096; ++i) {
            double m = 1.0 + static_cast<double>(i) / 4096.0;
            t[static_cast<std::size_t>(i)] = {std::log(m), 1.0 / m};
        }
        return t;
    }();
    return table.data();
}

inline const TrigEntry* trig_table() {
    static const std::vector<TrigEntry> table = [] {
        std::vector<TrigEntry> t(4097);
        for (int i = 0; i <= 4096; ++i) {
            double a = 2.0 * kPi * static_cast<double>(i) / 4096.0;
            t[static_cast<std::size_t>(i)] = {std::sin(a), std::cos(a)};
        }
        return t;
    }();
    return table.data();
}

inline constexpr double kLn2 = 0.69314718055994530942;

// ln u for u in (0, 1)
inline double fast_log(double u) {
    std::uint64_t bits;
    __builtin_memcpy(&bits, &u, 8);
    int e = static_cast<int>((bits >> 52) & 0x7FF) - 1023;
    std::uint64_t frac = bits & 0xFFFFFFFFFFFFFULL;
    int idx = static_cast<int>(frac >> 40);  // top 12 mantissa bits
    const LogEntry le = log_table()[idx];
    double m = 1.0;
    __builtin_memcpy(&bits, &m, 8);
    bits |= frac;
    __builtin_memcpy(&m, &bits, 8);  // mantissa in [1, 2)
    double anchor = 1.0 + static_cast<double>(idx) / 4096.0;
    double d = (m - anchor) * le.inv;  // |d| <= 2^-12
    double lp = d * (1.0 + d * (-0.5 + d * (1.0 / 3.0 - 0.25 * d)));
    return static_cast<double>(e) * kLn2 + le.ln + lp;
}

// sin and cos of 2 pi t for t in [0, 1)
inline void fast_sincos_2pi(double t, double& s, double& c) {
    double scaled = t * 4096.0;
    int k = static_cast<int>(scaled);
    const TrigEntry te = trig_table()[k];
    double b = (scaled - static_cast<double>(k)) * (2.0 * kPi / 4096.0);
    double b2 = b * b;
    double sb = b * (1.0 - b2 * (1.0 / 6.0));
    double cb = 1.0 - b2 * (0.5 - b2 * (1.0 / 24.0));
    s = te.s * cb + te.c * sb;
    c = te.c * cb - te.s * sb;
}

}  // namespace noise_detail

struct NormalPair {
    double z1, z2;
};

inline NormalPair normal_pair(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                              std::uint64_t mode) {
    std::uint64_t k = counter_key(seed, path, step, mode, 0);
    double a = u01(k);
    double b = u01(mix64(k));
    double r = std::sqrt(-2.0 * noise_detail::fast_log(a));
    double s, c;
    noise_detail::fast_sincos_2pi(b, s, c);
    return {r * c, r * s};
}

// Covariance eigenvalues of Q in the identification g_j = e_j.
struct NoiseSpec {
    std::vector<double> q;

    NoiseSpec() = default;
    explicit NoiseSpec(std::vector<double> qs) : q(std::move(qs)) {
        for (double v : q)
            if (v < 0.0) throw std::invalid_argument("NoiseSpec: q_j must be nonnegative");
    }
    static NoiseSpec cylindrical(std::size_t modes) {
        return NoiseSpec(std::vector<double>(modes, 1.0));
    }
    std::size_t mode_count() const { return q.size(); }
};

// Identifies one sample path: seed plus path index plus the finest time grid.
struct PathStream {
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    double h_min = 1.0;    // finest step
    double horizon = 1.0;  // T

    long fine_steps() const {
        double r = horizon / h_min;
        long n = static_cast<long>(std::llround(r));
        if (n < 1 || std::abs(r - static_cast<double>(n)) > 1e-9)
            throw std::invalid_argument("PathStream: T must be an integer multiple of h_min");
        return n;
    }

    // independent sub-stream, used for path continuations
    PathStream branch(std::uint64_t continuation) const {
        PathStream s = *this;
        s.path_index = mix64(path_index ^ mix64(continuation ^ 0xC0177A75D5A5ULL));
        return s;
    }
};

// number of fine steps per coarse step; rejects non-commensurate grids
inline long fine_per_coarse(const PathStream& stream, double h) {
    double r = h / stream.h_min;
    long m = static_cast<long>(std::llround(r));
    if (m < 1 || std::abs(r - static_cast<double>(m)) > 1e-9)
        throw std::invalid_argument("grid step is not an integer multiple of h_min");
    return m;
}

// Per-path noise data on the finest grid.  Convolution extras need the model
// (decay rates); plain increments do not.
class PathNoise {
  public:
    PathNoise() = default;

    // generates the first max_steps fine steps (all of them by default);
    // partial bundles serve experiments that stop before the horizon
    PathNoise(const NoiseSpec& spec, const PathStream& stream,
              const SpectralModel* model = nullptr, long max_steps = -1) {
        reset(spec, stream, model, max_steps);
    }

    // regenerate in place; buffers are reused so block runners can cycle one
    // bundle per lane without reallocating megabytes per path
    void reset(const NoiseSpec& spec, const PathStream& stream,
               const SpectralModel* model = nullptr, long max_steps = -1) {
        spec_ = spec;
        stream_ = stream;
        nfine_ = stream.fine_steps();
        gen_ = nfine_;
        J_ = static_cast<long>(spec.mode_count());
        with_conv_ = model != nullptr;
        if (max_steps >= 0 && max_steps < gen_) gen_ = max_steps;
        const double h = stream_.h_min;
        std::vector<double> s1(static_cast<std::size_t>(J_)),
            c1(static_cast<std::size_t>(J_)), c2(static_cast<std::size_t>(J_));
        for (long j = 0; j < J_; ++j) {
            double q = spec_.q[static_cast<std::size_t>(j)];
            s1[static_cast<std::size_t>(j)] = std::sqrt(q * h);
            if (with_conv_) {
                double lam = model->lambda(static_cast<std::size_t>(j));
                double var2 = q * conv_variance_factor(lam, h);
                double cov = q * conv_cross_factor(lam, h);
                double s = s1[static_cast<std::size_t>(j)];
                c1[static_cast<std::size_t>(j)] = s > 0.0 ? cov / s : 0.0;
                double rest = var2 - c1[static_cast<std::size_t>(j)] * c1[static_cast<std::size_t>(j)];
                c2[static_cast<std::size_t>(j)] = rest > 0.0 ? std::sqrt(rest) : 0.0;
            }
        }
        dw_.resize(static_cast<std::size_t>(gen_ * J_));
        if (with_conv_) conv_.resize(static_cast<std::size_t>(gen_ * J_));
        for (long k = 0; k < gen_; ++k) {
            for (long j = 0; j < J_; ++j) {
                std::size_t jj = static_cast<std::size_t>(j);
                if (s1[jj] == 0.0) {
                    dw_[idx(k, j)] = 0.0;
                    if (with_conv_) conv_[idx(k, j)] = 0.0;
                    continue;
                }
                auto z = normal_pair(stream_.seed, stream_.path_index,
                                     static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j));
                dw_[idx(k, j)] = s1[jj] * z.z1;
                if (with_conv_) conv_[idx(k, j)] = c1[jj] * z.z1 + c2[jj] * z.z2;
            }
        }
        if (with_conv_) {
            decay_.resize(static_cast<std::size_t>(J_));
            for (long j = 0; j < J_; ++j)
                decay_[static_cast<std::size_t>(j)] =
                    std::exp(-model->lambda(static_cast<std::size_t>(j)) * h);
        }
    }

    // (1 - e^{-2 lambda h}) / (2 lambda), with the lambda -> 0 limit h
    static double conv_variance_factor(double lam, double h) {
        if (lam * h < 1e-12) return h;
        return -std::expm1(-2.0 * lam * h) / (2.0 * lam);
    }
    // (1 - e^{-lambda h}) / lambda, with the lambda -> 0 limit h
    static double conv_cross_factor(double lam, double h) {
        if (lam * h < 1e-12) return h;
        return -std::expm1(-lam * h) / lam;
    }

    long fine_count() const { return nfine_; }
    long generated_count() const { return gen_; }
    long mode_count() const { return J_; }
    double fine_step() const { return stream_.h_min; }
    bool has_convolution() const { return with_conv_; }
    const PathStream& stream() const { return stream_; }
    const NoiseSpec& spec() const { return spec_; }

    double fine_dw(long k, long j) const { return dw_[idx(k, j)]; }
    // exact convolution over fine step k, anchored at the step's right end
    double fine_conv(long k, long j) const { return conv_[idx(k, j)]; }
    const double* fine_conv_row(long k) const { return &conv_[idx(k, 0)]; }
    const double* fine_dw_row(long k) const { return &dw_[idx(k, 0)]; }
    double mode_decay(long j) const { return decay_[static_cast<std::size_t>(j)]; }

    // sum of fine increments over fine steps [a, b), fixed ascending order
    double increment(long a, long b, long j) const {
        if (b > gen_) throw std::out_of_range("PathNoise: step beyond the generated prefix");
        double s = 0.0;
        for (long k = a; k < b; ++k) s += dw_[idx(k, j)];
        return s;
    }

    // exact int_{t_a}^{t_b} e^{-lambda_j (t_b - s)} dW_j(s), from the fine pairs
    double convolution(long a, long b, long j) const {
        if (b > gen_) throw std::out_of_range("PathNoise: step beyond the generated prefix");
        double s = 0.0;
        double d = decay_[static_cast<std::size_t>(j)];
        for (long k = a; k < b; ++k) s = s * d + conv_[idx(k, j)];
        return s;
    }

    // diagonal iterated integral int_{t_a}^{t_b} (W_j(s) - W_j(t_a)) dW_j(s);
    // pathwise identical to (DW^2 - q (t_b - t_a)) / 2
    double iterated_diag(long a, long b, long j) const {
        double dwsum = increment(a, b, j);
        double len = static_cast<double>(b - a) * stream_.h_min;
        return 0.5 * (dwsum * dwsum - spec_.q[static_cast<std::size_t>(j)] * len);
    }

  private:
    std::size_t idx(long k, long j) const { return static_cast<std::size_t>(k * J_ + j); }

    NoiseSpec spec_;
    PathStream stream_;
    long nfine_;
    long gen_;
    long J_;
    bool with_conv_;
    std::vector<double> dw_;
    std::vector<double> conv_;
    std::vector<double> decay_;
};

struct IncrementMatrix {
    long steps = 0;
    long modes = 0;
    std::vector<double> data;  // steps x modes, row-major
    double at(long k, long j) const { return data[static_cast<std::size_t>(k * modes + j)]; }
};

// increments of every mode over the grid with step h (a multiple of h_min)
inline IncrementMatrix wiener_increments(const NoiseSpec& spec, const PathStream& stream,
                                         double h) {
    long m = fine_per_coarse(stream, h);
    PathNoise noise(spec, stream);
    long steps = noise.fine_count() / m;
    if (steps * m != noise.fine_count())
        throw std::invalid_argument("wiener_increments: T/h is not an integer");
    IncrementMatrix out{steps, noise.mode_count(), {}};
    out.data.resize(static_cast<std::size_t>(steps * out.modes));
    for (long k = 0; k < steps; ++k)
        for (long j = 0; j < out.modes; ++j)
            out.data[static_cast<std::size_t>(k * out.modes + j)] =
                noise.increment(k * m, (k + 1) * m, j);
    return out;
}

// int_{t_n}^{t_n+h} e^{A (t_n + h - s)} B(0) dW_s for additive diagonal noise
// B(0) g_j = b_j e_j, sampled jointly with the increments of the same stream
inline ModalState stochastic_convolution_additive(const SpectralModel& model,
                                                  const NoiseSpec& spec,
                                                  const PathStream& stream, double t_n, double h,
                                                  const std::vector<double>& b) {
    if (b.size() != spec.mode_count())
        throw std::invalid_argument("stochastic_convolution_additive: b size mismatch");
    long m = fine_per_coarse(stream, h);
    long a = static_cast<long>(std::llround(t_n / stream.h_min));
    if (std::abs(t_n - static_cast<double>(a) * stream.h_min) > 1e-9 * stream.horizon)
        throw std::invalid_argument("stochastic_convolution_additive: t_n not on the fine grid");
    PathNoise noise(spec, stream, &model);
    ModalState out(spec.mode_count());
    for (long j = 0; j < noise.mode_count(); ++j)
        out[static_cast<std::size_t>(j)] =
            b[static_cast<std::size_t>(j)] * noise.convolution(a, a + m, j);
    return out;
}

// Iterated integrals of one step for commutative diagonal noise.  Only the
// diagonal entries and the symmetrized off-diagonal sums exist; individual
// off-diagonal Levy areas are not produced.
class IteratedIntegrals {
  public:
    IteratedIntegrals(const NoiseSpec& spec, std::vector<double> dw, double h)
        : spec_(spec), dw_(std::move(dw)), h_(h) {
        if (dw_.size() != spec.mode_count())
            throw std::invalid_argument("IteratedIntegrals: increment size mismatch");
    }

    double diagonal(std::size_t j) const {
        return 0.5 * (dw_[j] * dw_[j] - spec_.q[j] * h_);
    }
    // I_(j,k) + I_(k,j) for j != k
    double symmetrized(std::size_t j, std::size_t k) const {
        if (j == k) return 2.0 * diagonal(j);
        return dw_[j] * dw_[k];
    }
    // matrix-style accessor of single entries; off-diagonal entries require
    // Levy areas and are unsupported (non-commutative noise)
    double entry(std::size_t j, std::size_t k) const {
        if (j != k)
            throw std::domain_error(
                "IteratedIntegrals: individual off-diagonal entries are unsupported "
                "(non-commutative noise)");
        return diagonal(j);
    }

  private:
    NoiseSpec spec_;
    std::vector<double> dw_;
    double h_;
};

inline IteratedIntegrals iterated_integral_diagonal(const NoiseSpec& spec,
                                                    std::vector<double> dw, double h) {
    return IteratedIntegrals(spec, std::move(dw), h);
}

}  // namespace mildspde
