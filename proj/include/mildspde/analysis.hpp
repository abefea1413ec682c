// analysis.hpp — Monte Carlo error ladders with common random numbers and
// log-log rate regression.
//
// All ladders share one stream lineage: every compared quantity of a path is
// computed from the same PathNoise, so differences carry the full CRN
// variance reduction.  Workers partition the path range statically and write
// into preallocated per-path slots; reductions run single-threaded in path
// order, which makes results bit-identical for any worker count.

#pragma once

#include "mildspde/mild_ito.hpp"
#include "mildspde/mild_process.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mildspde {

// static split of [0, n_paths) over workers; kernel(path) must be pure
template <class Kernel>
void parallel_paths(long n_paths, int workers, Kernel&& kernel) {
    if (workers < 1) workers = 1;
    if (workers == 1 || n_paths < 2 * workers) {
        for (long i = 0; i < n_paths; ++i) kernel(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        long lo = n_paths * w / workers;
        long hi = n_paths * (w + 1) / workers;
        pool.emplace_back([lo, hi, &kernel]() {
            for (long i = lo; i < hi; ++i) kernel(i);
        });
    }
    for (auto& t : pool) t.join();
}

namespace batch_detail {

// Block width of the lockstep reference integrator.  Eight lanes amortize the
// collocation table stream over the block and keep the per-step grid buffers
// inside L1.
inline constexpr long kBlock = 8;

#ifdef MILDSPDE_VEC
// one 8-lane pack per block row: a single AVX-512 vector when available,
// otherwise a pair of 4-lane vectors
#if defined(__AVX512F__)
typedef double v8d __attribute__((vector_size(64)));
struct Pack {
    v8d v;
    static Pack load(const double* p) {
        Pack r;
        __builtin_memcpy(&r.v, p, 64);
        return r;
    }
    static Pack splat(double x) {
        Pack r;
        r.v = v8d{x, x, x, x, x, x, x, x};
        return r;
    }
    static Pack zero() { return splat(0.0); }
    void store(double* p) const { __builtin_memcpy(p, &v, 64); }
    Pack& fma(Pack a, Pack b) {
        v += a.v * b.v;
        return *this;
    }
    Pack scaled(double x) const {
        Pack r;
        r.v = v * x;
        return r;
    }
};
#else
struct Pack {
    detail::v4d lo, hi;
    static Pack load(const double* p) { return {detail::v4load(p), detail::v4load(p + 4)}; }
    static Pack splat(double x) {
        detail::v4d v = {x, x, x, x};
        return {v, v};
    }
    static Pack zero() { return splat(0.0); }
    void store(double* p) const {
        detail::v4store(p, lo);
        detail::v4store(p + 4, hi);
    }
    Pack& fma(Pack a, Pack b) {
        lo += a.lo * b.lo;
        hi += a.hi * b.hi;
        return *this;
    }
    Pack scaled(double x) const { return {lo * x, hi * x}; }
};
#endif
#endif  // MILDSPDE_VEC

inline bool batchable(const SpdeProblem& p) {
    return p.drift.kind == DriftKind::nemytskii && p.diffusion.kind == DiffusionKind::nemytskii &&
           p.drift.colloc->point_count() == p.diffusion.colloc->point_count();
}

// inlineable fast paths for the rational reaction family; everything else
// goes through the generic std::function dispatch
enum class FastFn { generic, bounded_rational, bounded_bell };

inline FastFn classify(const ScalarFunction& f) {
    if (f.name == "bounded_rational") return FastFn::bounded_rational;
    if (f.name == "bounded_bell") return FastFn::bounded_bell;
    return FastFn::generic;
}

inline double fast_eval(FastFn kind, double amp, const ScalarFunction& f, double y) {
    switch (kind) {
        case FastFn::bounded_rational: return amp * y / (1.0 + y * y);
        case FastFn::bounded_bell: return amp / (1.0 + y * y);
        case FastFn::generic: return f.d(0, y);
    }
    return 0.0;
}

// Evolves exactly kBlock paths of the reference scheme in lockstep; lanes are
// independent, so per-path results do not depend on the block composition.
// observer(lane, step_index, state) fires at every grid index including 0.
template <class Observer>
void run_reference_block(const SpdeProblem& p, const std::vector<const PathNoise*>& noise,
                         long steps, long stop_step, Observer&& observe) {
    constexpr std::size_t B = static_cast<std::size_t>(kBlock);
    if (noise.size() != B)
        throw std::invalid_argument("run_reference_block: expects a full block");
    const std::size_t n = p.dim();
    const std::size_t J = p.noise.mode_count();
    const auto& colloc = *p.drift.colloc;
    const std::size_t P = colloc.point_count();
    const double h = p.horizon / static_cast<double>(steps);
    StepFactors f = make_step_factors(SchemeKind::reference, p.model, h);

    std::vector<ModalState> y(B, ModalState(n));
    for (std::size_t b = 0; b < B; ++b) {
        y[b] = p.xi;
        observe(b, 0, y[b]);
    }

    // lane-interleaved buffers
    std::vector<double> xi_il(n * B), conv_il(n * B);
    std::vector<double> gx(P * B), gc(P * B);
    std::vector<double> fo(n * B), go(n * B);
    const auto& ffn = p.drift.f;
    const auto& bfn = p.diffusion.b;
    const FastFn ffast = classify(ffn);
    const FastFn bfast = classify(bfn);

    for (long s = 0; s < stop_step; ++s) {
        for (std::size_t b = 0; b < B; ++b) {
            const double* crow = noise[b]->fine_conv_row(s);
            for (std::size_t j = 0; j < n; ++j) {
                xi_il[j * B + b] = y[b][j];
                conv_il[j * B + b] = j < J ? crow[j] : 0.0;
            }
        }
        // grid pass: one table stream for the whole block
        std::fill(gx.begin(), gx.end(), 0.0);
        std::fill(gc.begin(), gc.end(), 0.0);
#ifdef MILDSPDE_VEC
        {
            // four rows per sweep so the grid accumulators are stored once
            // per tile instead of once per row
            double* __restrict__ ax = gx.data();
            double* __restrict__ ac = gc.data();
            const double* __restrict__ xi_p = xi_il.data();
            const double* __restrict__ cv_p = conv_il.data();
            std::size_t m = 0;
            for (; m + 4 <= n; m += 4) {
                const double* __restrict__ r0 = colloc.basis_row(m);
                const double* __restrict__ r1 = colloc.basis_row(m + 1);
                const double* __restrict__ r2 = colloc.basis_row(m + 2);
                const double* __restrict__ r3 = colloc.basis_row(m + 3);
                Pack x0 = Pack::load(xi_p + m * B), x1 = Pack::load(xi_p + (m + 1) * B);
                Pack x2 = Pack::load(xi_p + (m + 2) * B), x3 = Pack::load(xi_p + (m + 3) * B);
                Pack c0 = Pack::load(cv_p + m * B), c1 = Pack::load(cv_p + (m + 1) * B);
                Pack c2 = Pack::load(cv_p + (m + 2) * B), c3 = Pack::load(cv_p + (m + 3) * B);
                for (std::size_t i = 0; i < P; ++i) {
                    Pack w0 = Pack::splat(r0[i]), w1 = Pack::splat(r1[i]);
                    Pack w2 = Pack::splat(r2[i]), w3 = Pack::splat(r3[i]);
                    std::size_t o = i * B;
                    Pack vx = Pack::load(ax + o);
                    vx.fma(w0, x0).fma(w1, x1).fma(w2, x2).fma(w3, x3);
                    vx.store(ax + o);
                    Pack vc = Pack::load(ac + o);
                    vc.fma(w0, c0).fma(w1, c1).fma(w2, c2).fma(w3, c3);
                    vc.store(ac + o);
                }
            }
            for (; m < n; ++m) {
                const double* __restrict__ row = colloc.basis_row(m);
                for (std::size_t i = 0; i < P; ++i) {
                    double r = row[i];
                    for (std::size_t b = 0; b < B; ++b) {
                        ax[i * B + b] += r * xi_p[m * B + b];
                        ac[i * B + b] += r * cv_p[m * B + b];
                    }
                }
            }
        }
#else
        for (std::size_t m = 0; m < n; ++m) {
            const double* row = colloc.basis_row(m);
            for (std::size_t i = 0; i < P; ++i)
                for (std::size_t b = 0; b < B; ++b) {
                    gx[i * B + b] += row[i] * xi_il[m * B + b];
                    gc[i * B + b] += row[i] * conv_il[m * B + b];
                }
        }
#endif
        // pointwise reaction and multiplication
        if (ffast != FastFn::generic && bfast != FastFn::generic) {
            double fa = ffn.amplitude, ba = bfn.amplitude;
            if (ffast == FastFn::bounded_rational && bfast == FastFn::bounded_bell) {
                // shared rational kernel: one reciprocal per point
                for (std::size_t i = 0; i < P * B; ++i) {
                    double u = gx[i];
                    double r = 1.0 / (1.0 + u * u);
                    gx[i] = fa * u * r;
                    gc[i] = ba * r * gc[i];
                }
            } else {
                for (std::size_t i = 0; i < P * B; ++i) {
                    double u = gx[i];
                    gx[i] = fast_eval(ffast, fa, ffn, u);
                    gc[i] = fast_eval(bfast, ba, bfn, u) * gc[i];
                }
            }
        } else {
            for (std::size_t i = 0; i < P * B; ++i) {
                double u = gx[i];
                gx[i] = ffn.d(0, u);
                gc[i] = bfn.d(0, u) * gc[i];
            }
        }
        // modal pass
        double w = colloc.quad_weight();
#ifdef MILDSPDE_VEC
        {
            // pairs of rows per sweep halve the grid-buffer reads
            const double* __restrict__ ax = gx.data();
            const double* __restrict__ ac = gc.data();
            std::size_t m = 0;
            for (; m + 2 <= n; m += 2) {
                const double* __restrict__ r0 = colloc.basis_row(m);
                const double* __restrict__ r1 = colloc.basis_row(m + 1);
                Pack f0 = Pack::zero(), f1 = Pack::zero();
                Pack g0 = Pack::zero(), g1 = Pack::zero();
                for (std::size_t i = 0; i < P; ++i) {
                    Pack w0 = Pack::splat(r0[i]);
                    Pack w1 = Pack::splat(r1[i]);
                    std::size_t o = i * B;
                    Pack a = Pack::load(ax + o);
                    Pack c = Pack::load(ac + o);
                    f0.fma(w0, a);
                    f1.fma(w1, a);
                    g0.fma(w0, c);
                    g1.fma(w1, c);
                }
                f0.scaled(w).store(&fo[m * B]);
                f1.scaled(w).store(&fo[(m + 1) * B]);
                g0.scaled(w).store(&go[m * B]);
                g1.scaled(w).store(&go[(m + 1) * B]);
            }
            for (; m < n; ++m) {
                const double* __restrict__ row = colloc.basis_row(m);
                for (std::size_t b = 0; b < B; ++b) {
                    double sf = 0.0, sg = 0.0;
                    for (std::size_t i = 0; i < P; ++i) {
                        sf += row[i] * ax[i * B + b];
                        sg += row[i] * ac[i * B + b];
                    }
                    fo[m * B + b] = w * sf;
                    go[m * B + b] = w * sg;
                }
            }
        }
#else
        for (std::size_t m = 0; m < n; ++m) {
            const double* row = colloc.basis_row(m);
            for (std::size_t b = 0; b < B; ++b) {
                double sf = 0.0, sg = 0.0;
                for (std::size_t i = 0; i < P; ++i) {
                    sf += row[i] * gx[i * B + b];
                    sg += row[i] * gc[i * B + b];
                }
                fo[m * B + b] = w * sf;
                go[m * B + b] = w * sg;
            }
        }
#endif
        // per-lane state update of the convolution-consuming recursion
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t j = 0; j < n; ++j)
                y[b][j] = f.main[j] * y[b][j] + f.aux[j] * fo[j * B + b] + go[j * B + b];
            observe(b, s + 1, y[b]);
        }
    }
}

// runs lanes [block*kBlock, block*kBlock + kBlock) with real streams for the
// in-range paths; out-of-range lanes reuse the first stream and are ignored
template <class PerPath>
void run_reference_blocks(const SpdeProblem& p, long n_paths, int workers, std::uint64_t seed,
                          double h_fine, long steps, long stop_step, long gen_steps,
                          PerPath&& per_path) {
    long nblocks = (n_paths + kBlock - 1) / kBlock;
    parallel_paths(nblocks, workers, [&](long blk) {
        // lane bundles persist per worker thread; regeneration reuses their
        // buffers instead of faulting fresh pages every path
        thread_local std::vector<PathNoise> bundles;
        if (bundles.size() != static_cast<std::size_t>(kBlock))
            bundles.resize(static_cast<std::size_t>(kBlock));
        std::vector<const PathNoise*> ptrs(static_cast<std::size_t>(kBlock));
        for (long b = 0; b < kBlock; ++b) {
            long c = blk * kBlock + b;
            if (c < n_paths) {
                PathStream stream{seed, static_cast<std::uint64_t>(c), h_fine, p.horizon};
                bundles[static_cast<std::size_t>(b)].reset(p.noise, stream, &p.model, gen_steps);
            }
        }
        for (long b = 0; b < kBlock; ++b) {
            long c = blk * kBlock + b;
            ptrs[static_cast<std::size_t>(b)] =
                c < n_paths ? &bundles[static_cast<std::size_t>(b)] : &bundles[0];
        }
        run_reference_block(p, ptrs, steps, stop_step,
                            [&](std::size_t lane, long step, const ModalState& state) {
                                long c = blk * kBlock + static_cast<long>(lane);
                                if (c < n_paths) per_path(c, step, state);
                            });
    });
}

}  // namespace batch_detail

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

// mean and its standard error, accumulated in fixed path order
inline MeanSe reduce_mean(const std::vector<double>& xs) {
    double n = static_cast<double>(xs.size());
    if (xs.empty()) return {};
    double s = 0.0;
    for (double x : xs) s += x;
    double m = s / n;
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    v = xs.size() > 1 ? v / (n - 1.0) : 0.0;
    return {m, std::sqrt(v / n)};
}

enum class ErrorMetric { strong_l2, weak };

struct ErrorLadder {
    ErrorMetric metric = ErrorMetric::strong_l2;
    std::string label;
    std::vector<double> abscissae;
    std::vector<double> errors;
    std::vector<double> stderrs;
};

struct RateEstimate {
    double slope = 0.0;
    double slope_stderr = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    long used_levels = 0;
};

// least squares on (log abscissa, log error) over the levels that clear the
// 3-sigma Monte Carlo floor
inline RateEstimate fit_rate(const ErrorLadder& ladder) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < ladder.errors.size(); ++i) {
        if (!(ladder.errors[i] > 3.0 * ladder.stderrs[i])) continue;
        if (!(ladder.errors[i] > 0.0) || !(ladder.abscissae[i] > 0.0)) continue;
        xs.push_back(std::log(ladder.abscissae[i]));
        ys.push_back(std::log(ladder.errors[i]));
    }
    if (xs.size() < 3)
        throw std::runtime_error("fit_rate: fewer than 3 levels clear the noise floor");
    double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    RateEstimate est;
    est.slope = sxy / sxx;
    est.intercept = my - est.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double r = ys[i] - (est.intercept + est.slope * xs[i]);
        ss_res += r * r;
    }
    est.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    est.slope_stderr =
        xs.size() > 2 ? std::sqrt(ss_res / (n - 2.0) / sxx) : 0.0;
    est.used_levels = static_cast<long>(xs.size());
    return est;
}

struct LadderPair {
    ErrorLadder strong;
    ErrorLadder weak;
};

// Galerkin rates of the projection error: one reference run per path at the
// full mode count; level N compares X_T with P_N X_T under perfect CRN.
inline LadderPair galerkin_rates(const SpdeProblem& p, const std::vector<long>& mode_levels,
                                 long time_steps, const TestFunction& phi, long n_paths,
                                 int workers, std::uint64_t seed) {
    p.validate();
    for (long N : mode_levels)
        if (N < 1 || N >= static_cast<long>(p.dim()))
            throw std::invalid_argument("galerkin_rates: level must be below the reference");
    std::size_t L = mode_levels.size();
    std::vector<double> strong_sq(static_cast<std::size_t>(n_paths) * L);
    std::vector<double> weak_diff(static_cast<std::size_t>(n_paths) * L);
    double hf = p.horizon / static_cast<double>(time_steps);

    auto record_terminal = [&](long c, const ModalState& xt) {
        double phix = phi(xt).as_real();
        for (std::size_t l = 0; l < L; ++l) {
            long N = mode_levels[l];
            double tail = 0.0;
            for (std::size_t n = static_cast<std::size_t>(N); n < xt.size(); ++n)
                tail += xt[n] * xt[n];
            strong_sq[static_cast<std::size_t>(c) * L + l] = tail;
            weak_diff[static_cast<std::size_t>(c) * L + l] =
                phi(galerkin_project(xt, static_cast<std::size_t>(N))).as_real() - phix;
        }
    };
    if (batch_detail::batchable(p)) {
        batch_detail::run_reference_blocks(
            p, n_paths, workers, seed, hf, time_steps, time_steps, time_steps,
            [&](long c, long step, const ModalState& state) {
                if (step == time_steps) record_terminal(c, state);
            });
    } else {
        parallel_paths(n_paths, workers, [&](long c) {
            PathStream stream{seed, static_cast<std::uint64_t>(c), hf, p.horizon};
            PathNoise noise(p.noise, stream, &p.model);
            record_terminal(c, run_scheme_terminal(SchemeKind::reference, p, noise, time_steps));
        });
    }

    LadderPair out;
    out.strong.metric = ErrorMetric::strong_l2;
    out.strong.label = "galerkin_strong";
    out.weak.metric = ErrorMetric::weak;
    out.weak.label = "galerkin_weak";
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> s(static_cast<std::size_t>(n_paths)), w(static_cast<std::size_t>(n_paths));
        for (long c = 0; c < n_paths; ++c) {
            s[static_cast<std::size_t>(c)] = strong_sq[static_cast<std::size_t>(c) * L + l];
            w[static_cast<std::size_t>(c)] = weak_diff[static_cast<std::size_t>(c) * L + l];
        }
        auto ms = reduce_mean(s);
        auto mw = reduce_mean(w);
        double err = std::sqrt(std::max(0.0, ms.mean));
        out.strong.abscissae.push_back(static_cast<double>(mode_levels[l]));
        out.strong.errors.push_back(err);
        out.strong.stderrs.push_back(err > 0.0 ? 0.5 * ms.se / err : 0.0);
        out.weak.abscissae.push_back(static_cast<double>(mode_levels[l]));
        out.weak.errors.push_back(std::abs(mw.mean));
        out.weak.stderrs.push_back(mw.se);
    }
    return out;
}

// Temporal regularity of the solution: per path one reference run recording
// X_{t0} and X_{t0 + h} for every increment h of the ladder.
inline LadderPair temporal_rates(const SpdeProblem& p, double t0,
                                 const std::vector<double>& increments, long time_steps,
                                 const TestFunction& phi, long n_paths, int workers,
                                 std::uint64_t seed) {
    p.validate();
    double hf = p.horizon / static_cast<double>(time_steps);
    long k0 = static_cast<long>(std::llround(t0 / hf));
    if (std::abs(t0 - static_cast<double>(k0) * hf) > 1e-9)
        throw std::invalid_argument("temporal_rates: t0 must be on the time grid");
    std::vector<long> kh;
    long kmax = k0;
    for (double h : increments) {
        long k = static_cast<long>(std::llround(h / hf));
        if (k < 1 || std::abs(h - static_cast<double>(k) * hf) > 1e-9)
            throw std::invalid_argument("temporal_rates: increment not on the time grid");
        kh.push_back(k0 + k);
        kmax = std::max(kmax, k0 + k);
    }
    if (kmax > time_steps)
        throw std::invalid_argument("temporal_rates: t0 + max increment exceeds the horizon");
    std::size_t L = increments.size();
    std::vector<double> strong_sq(static_cast<std::size_t>(n_paths) * L);
    std::vector<double> weak_diff(static_cast<std::size_t>(n_paths) * L);

    struct Snaps {
        ModalState base;
        std::vector<ModalState> snap;
    };
    auto reduce_path = [&](long c, const Snaps& sn) {
        double phib = phi(sn.base).as_real();
        for (std::size_t l = 0; l < L; ++l) {
            double d2 = 0.0;
            for (std::size_t n = 0; n < sn.base.size(); ++n) {
                double d = sn.snap[l][n] - sn.base[n];
                d2 += d * d;
            }
            strong_sq[static_cast<std::size_t>(c) * L + l] = d2;
            weak_diff[static_cast<std::size_t>(c) * L + l] = phi(sn.snap[l]).as_real() - phib;
        }
    };
    if (batch_detail::batchable(p)) {
        // a worker processes one block at a time, so per-thread lane slots
        // hold the in-flight snapshots
        batch_detail::run_reference_blocks(
            p, n_paths, workers, seed, hf, time_steps, kmax, kmax,
            [&](long c, long k, const ModalState& s) {
                thread_local std::vector<Snaps> lanes;
                if (lanes.size() != static_cast<std::size_t>(batch_detail::kBlock))
                    lanes.resize(static_cast<std::size_t>(batch_detail::kBlock));
                auto& sn = lanes[static_cast<std::size_t>(c % batch_detail::kBlock)];
                if (k == 0) sn.snap.assign(L, ModalState());
                if (k == k0) sn.base = s;
                for (std::size_t l = 0; l < L; ++l)
                    if (k == kh[l]) sn.snap[l] = s;
                if (k == kmax) reduce_path(c, sn);
            });
    } else {
        parallel_paths(n_paths, workers, [&](long c) {
            PathStream stream{seed, static_cast<std::uint64_t>(c), hf, p.horizon};
            PathNoise noise(p.noise, stream, &p.model, kmax);
            Snaps sn;
            sn.snap.resize(L);
            run_scheme_range(SchemeKind::reference, p, noise, time_steps, 0, kmax, p.xi,
                             [&](long k, const ModalState& s) {
                                 if (k == k0) sn.base = s;
                                 for (std::size_t l = 0; l < L; ++l)
                                     if (k == kh[l]) sn.snap[l] = s;
                             });
            reduce_path(c, sn);
        });
    }

    LadderPair out;
    out.strong.metric = ErrorMetric::strong_l2;
    out.strong.label = "temporal_strong";
    out.weak.metric = ErrorMetric::weak;
    out.weak.label = "temporal_weak";
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> s(static_cast<std::size_t>(n_paths)), w(static_cast<std::size_t>(n_paths));
        for (long c = 0; c < n_paths; ++c) {
            s[static_cast<std::size_t>(c)] = strong_sq[static_cast<std::size_t>(c) * L + l];
            w[static_cast<std::size_t>(c)] = weak_diff[static_cast<std::size_t>(c) * L + l];
        }
        auto ms = reduce_mean(s);
        auto mw = reduce_mean(w);
        double err = std::sqrt(std::max(0.0, ms.mean));
        out.strong.abscissae.push_back(increments[l]);
        out.strong.errors.push_back(err);
        out.strong.stderrs.push_back(err > 0.0 ? 0.5 * ms.se / err : 0.0);
        out.weak.abscissae.push_back(increments[l]);
        out.weak.errors.push_back(std::abs(mw.mean));
        out.weak.stderrs.push_back(mw.se);
    }
    return out;
}

// Scheme convergence against the shared-noise reference: coarse runs consume
// aggregated increments of the same bundle (CRN ladder).
inline LadderPair scheme_rates(const SpdeProblem& p, SchemeKind kind,
                               const std::vector<long>& step_levels, long fine_steps,
                               const TestFunction& phi, long n_paths, int workers,
                               std::uint64_t seed) {
    p.validate();
    for (long N : step_levels)
        if (N < 1 || fine_steps % N != 0)
            throw std::invalid_argument("scheme_rates: levels must divide the reference grid");
    std::size_t L = step_levels.size();
    std::vector<double> strong_sq(static_cast<std::size_t>(n_paths) * L);
    std::vector<double> weak_diff(static_cast<std::size_t>(n_paths) * L);
    double hf = p.horizon / static_cast<double>(fine_steps);
    parallel_paths(n_paths, workers, [&](long c) {
        PathStream stream{seed, static_cast<std::uint64_t>(c), hf, p.horizon};
        PathNoise noise(p.noise, stream, &p.model);
        ModalState ref = run_scheme_terminal(SchemeKind::reference, p, noise, fine_steps);
        double phir = phi(ref).as_real();
        for (std::size_t l = 0; l < L; ++l) {
            ModalState approx = run_scheme_terminal(kind, p, noise, step_levels[l]);
            double d2 = 0.0;
            for (std::size_t n = 0; n < ref.size(); ++n) {
                double d = approx[n] - ref[n];
                d2 += d * d;
            }
            strong_sq[static_cast<std::size_t>(c) * L + l] = d2;
            weak_diff[static_cast<std::size_t>(c) * L + l] = phi(approx).as_real() - phir;
        }
    });

    LadderPair out;
    out.strong.metric = ErrorMetric::strong_l2;
    out.strong.label = std::string("scheme_strong_") + scheme_name(kind);
    out.weak.metric = ErrorMetric::weak;
    out.weak.label = std::string("scheme_weak_") + scheme_name(kind);
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> s(static_cast<std::size_t>(n_paths)), w(static_cast<std::size_t>(n_paths));
        for (long c = 0; c < n_paths; ++c) {
            s[static_cast<std::size_t>(c)] = strong_sq[static_cast<std::size_t>(c) * L + l];
            w[static_cast<std::size_t>(c)] = weak_diff[static_cast<std::size_t>(c) * L + l];
        }
        auto ms = reduce_mean(s);
        auto mw = reduce_mean(w);
        double err = std::sqrt(std::max(0.0, ms.mean));
        double habs = p.horizon / static_cast<double>(step_levels[l]);
        out.strong.abscissae.push_back(habs);
        out.strong.errors.push_back(err);
        out.strong.stderrs.push_back(err > 0.0 ? 0.5 * ms.se / err : 0.0);
        out.weak.abscissae.push_back(habs);
        out.weak.errors.push_back(std::abs(mw.mean));
        out.weak.stderrs.push_back(mw.se);
    }
    return out;
}

// |E phi(e^{Ah} X_t) - E phi(X_t)| per smoothing offset h, CRN by evaluating
// both functionals on the same terminal state
inline ErrorLadder spatial_weak_semigroup_gap(const SpdeProblem& p, const TestFunction& phi,
                                              double t, const std::vector<double>& offsets,
                                              long time_steps, long n_paths, int workers,
                                              std::uint64_t seed) {
    p.validate();
    if (!(t > 0.0) || t > p.horizon)
        throw std::invalid_argument("spatial_weak_semigroup_gap: t must lie in (0, T]");
    double hf = p.horizon / static_cast<double>(time_steps);
    long kt = static_cast<long>(std::llround(t / hf));
    if (std::abs(t - static_cast<double>(kt) * hf) > 1e-9)
        throw std::invalid_argument("spatial_weak_semigroup_gap: t must be on the time grid");
    std::size_t L = offsets.size();
    std::vector<double> diffs(static_cast<std::size_t>(n_paths) * L);

    parallel_paths(n_paths, workers, [&](long c) {
        PathStream stream{seed, static_cast<std::uint64_t>(c), hf, p.horizon};
        PathNoise noise(p.noise, stream, &p.model);
        ModalState xt = run_scheme_range(SchemeKind::reference, p, noise, time_steps, 0, kt,
                                         p.xi, [](long, const ModalState&) {});
        double phix = phi(xt).as_real();
        for (std::size_t l = 0; l < L; ++l) {
            double h = offsets[l];
            diffs[static_cast<std::size_t>(c) * L + l] =
                h == 0.0 ? 0.0
                         : phi(apply_semigroup(p.model, h, xt)).as_real() - phix;
        }
    });

    ErrorLadder out;
    out.metric = ErrorMetric::weak;
    out.label = "spatial_gap";
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> w(static_cast<std::size_t>(n_paths));
        for (long c = 0; c < n_paths; ++c)
            w[static_cast<std::size_t>(c)] = diffs[static_cast<std::size_t>(c) * L + l];
        auto mw = reduce_mean(w);
        out.abscissae.push_back(offsets[l]);
        out.errors.push_back(std::abs(mw.mean));
        out.stderrs.push_back(mw.se);
    }
    return out;
}

}  // namespace mildspde
