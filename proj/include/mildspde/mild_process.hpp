// mild_process.hpp — the scheme zoo, each scheme expressed as a mild Ito
// process (two-parameter semigroup + mild drift + mild diffusion frozen at the
// step grid), plus time-continuous interpolations and the reference solver.
//
// One-step recursions, h = T/N, per mode j:
//   exponential Euler      y' = e^{-lam h} (y + h F + B dW)
//   accelerated exp Euler  y' = e^{-lam h} y + (1-e^{-lam h})/lam F + conv
//   linear implicit Euler  y' = (y + h F + B dW) / (1 + lam h)
//   Crank-Nicolson         y' = ((1 - lam h/2) y + h F + B dW) / (1 + lam h/2)
//   Milstein variants add the diagonal term b' b (dW^2 - q h)/2 inside the
//   bracket of their Euler parent.
// The interpolations evaluate the same mild integral representation with
// integrands frozen on [floor(t), t], so grid points reproduce the recursions
// exactly.  Interior Crank-Nicolson values carry the extra (1/2) A mild drift,
// which turns the half-step resolvent semigroup into the Cayley one-step map.

#pragma once

#include "mildspde/coefficients.hpp"
#include "mildspde/noise.hpp"
#include "mildspde/spectral.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace mildspde {

struct SpdeProblem {
    SpectralModel model;
    NoiseSpec noise;
    DriftSpec drift;
    DiffusionSpec diffusion;
    ModalState xi;
    double horizon = 1.0;

    std::size_t dim() const { return model.mode_count(); }

    void validate() const {
        if (xi.size() != model.mode_count())
            throw std::invalid_argument("SpdeProblem: xi dimension mismatch");
        if (noise.mode_count() > model.mode_count())
            throw std::invalid_argument("SpdeProblem: more noise modes than state modes");
        if (!(horizon > 0.0)) throw std::invalid_argument("SpdeProblem: T must be positive");
    }
};

enum class SchemeKind {
    exponential_euler,
    accelerated_exponential_euler,
    implicit_euler,
    crank_nicolson,
    exponential_milstein,
    implicit_euler_milstein,
    crank_nicolson_milstein,
    reference,
};

inline const char* scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::exponential_euler: return "exponential_euler";
        case SchemeKind::accelerated_exponential_euler: return "accelerated_exponential_euler";
        case SchemeKind::implicit_euler: return "implicit_euler";
        case SchemeKind::crank_nicolson: return "crank_nicolson";
        case SchemeKind::exponential_milstein: return "exponential_milstein";
        case SchemeKind::implicit_euler_milstein: return "implicit_euler_milstein";
        case SchemeKind::crank_nicolson_milstein: return "crank_nicolson_milstein";
        case SchemeKind::reference: return "reference";
    }
    return "?";
}

inline SchemeKind scheme_by_name(const std::string& s) {
    for (auto k : {SchemeKind::exponential_euler, SchemeKind::accelerated_exponential_euler,
                   SchemeKind::implicit_euler, SchemeKind::crank_nicolson,
                   SchemeKind::exponential_milstein, SchemeKind::implicit_euler_milstein,
                   SchemeKind::crank_nicolson_milstein, SchemeKind::reference})
        if (s == scheme_name(k)) return k;
    throw std::invalid_argument("unknown scheme '" + s + "'");
}

inline bool scheme_is_milstein(SchemeKind k) {
    return k == SchemeKind::exponential_milstein || k == SchemeKind::implicit_euler_milstein ||
           k == SchemeKind::crank_nicolson_milstein;
}

// The accelerated kind and the reference solver consume exact per-mode
// stochastic convolutions of the frozen diffusion instead of plain
// increments; plain exponential Euler underweights the noise of modes with
// lambda h near one, which would distort measured spatial tails.
inline bool scheme_uses_convolution(SchemeKind k) {
    return k == SchemeKind::accelerated_exponential_euler || k == SchemeKind::reference;
}

inline TwoParamSemigroup scheme_semigroup(SchemeKind k, long n_steps, double horizon) {
    switch (k) {
        case SchemeKind::implicit_euler:
        case SchemeKind::implicit_euler_milstein:
            return TwoParamSemigroup::implicit_euler(n_steps, horizon);
        case SchemeKind::crank_nicolson:
        case SchemeKind::crank_nicolson_milstein:
            return TwoParamSemigroup::crank_nicolson(n_steps, horizon);
        default:
            return TwoParamSemigroup::analytic();
    }
}

// Per-mode factors of a partial step of length tau, precomputed once per grid.
struct StepFactors {
    SchemeKind kind;
    double tau = 0.0;
    std::vector<double> main;  // decay / resolvent / Cayley head
    std::vector<double> aux;   // phi1 (accelerated) or 1/(1+lam tau/2) (CN)
};

inline StepFactors make_step_factors(SchemeKind kind, const SpectralModel& model, double tau) {
    StepFactors f;
    f.kind = kind;
    f.tau = tau;
    std::size_t n = model.mode_count();
    f.main.resize(n);
    switch (kind) {
        case SchemeKind::exponential_euler:
        case SchemeKind::exponential_milstein:
            for (std::size_t j = 0; j < n; ++j) f.main[j] = std::exp(-model.lambda(j) * tau);
            break;
        case SchemeKind::accelerated_exponential_euler:
        case SchemeKind::reference:
            f.aux.resize(n);
            for (std::size_t j = 0; j < n; ++j) {
                double lam = model.lambda(j);
                f.main[j] = std::exp(-lam * tau);
                f.aux[j] = lam * tau < 1e-12 ? tau : -std::expm1(-lam * tau) / lam;
            }
            break;
        case SchemeKind::implicit_euler:
        case SchemeKind::implicit_euler_milstein:
            for (std::size_t j = 0; j < n; ++j) f.main[j] = 1.0 / (1.0 + model.lambda(j) * tau);
            break;
        case SchemeKind::crank_nicolson:
        case SchemeKind::crank_nicolson_milstein:
            f.aux.resize(n);
            for (std::size_t j = 0; j < n; ++j) {
                double half = 0.5 * model.lambda(j) * tau;
                f.aux[j] = 1.0 / (1.0 + half);
                f.main[j] = (1.0 - half) * f.aux[j];
            }
            break;
    }
    return f;
}

// Step data frozen at the left endpoint of the current scheme step.
struct FrozenStep {
    ModalState y;       // state at the step's left grid point
    ModalState drift;   // F(y)
    std::vector<double> mil;  // b_j'(y_j) b_j(y_j); empty unless Milstein
};

inline FrozenStep freeze_step(SchemeKind kind, const SpdeProblem& p, double t_n,
                              const ModalState& y) {
    FrozenStep fs;
    fs.y = y;
    fs.drift = eval_drift(p.drift, t_n, y);
    if (scheme_is_milstein(kind)) {
        std::size_t J = p.noise.mode_count();
        fs.mil.resize(J);
        for (std::size_t j = 0; j < J; ++j) fs.mil[j] = milstein_diag_factor(p.diffusion, y, j);
    }
    return fs;
}

// State of the interpolation at offset tau = factors.tau into the step.
// w_part are the noise increments accumulated over [t_n, t_n + tau]; conv_part
// the exact convolutions anchored at t_n + tau (accelerated kind only).
inline ModalState partial_from_frozen(const SpdeProblem& p, const FrozenStep& fs,
                                      const StepFactors& f, std::span<const double> w_part,
                                      std::span<const double> conv_part) {
    std::size_t n = fs.y.size();
    std::size_t J = p.noise.mode_count();
    ModalState out(n, fs.y.regularity);
    double tau = f.tau;

    if (scheme_uses_convolution(f.kind)) {
        for (std::size_t j = 0; j < n; ++j)
            out[j] = f.main[j] * fs.y[j] + f.aux[j] * fs.drift[j];
        if (!conv_part.empty()) {
            // frozen diffusion applied to the exact per-mode convolutions
            ModalState gc = diffusion_apply_noise(p.diffusion, fs.y, conv_part);
            for (std::size_t j = 0; j < n; ++j) out[j] += gc[j];
        }
        return out;
    }

    ModalState g(n);
    if (!w_part.empty()) g = diffusion_apply_noise(p.diffusion, fs.y, w_part);
    const bool milstein = !fs.mil.empty();
    for (std::size_t j = 0; j < n; ++j) {
        double bracket = tau * fs.drift[j] + g[j];
        if (milstein && j < J && !w_part.empty()) {
            double q = p.noise.q[j];
            bracket += fs.mil[j] * 0.5 * (w_part[j] * w_part[j] - q * tau);
        }
        switch (f.kind) {
            case SchemeKind::exponential_euler:
            case SchemeKind::exponential_milstein:
            case SchemeKind::reference:
            case SchemeKind::implicit_euler:
            case SchemeKind::implicit_euler_milstein:
                out[j] = f.main[j] * (fs.y[j] + bracket);
                break;
            case SchemeKind::crank_nicolson:
            case SchemeKind::crank_nicolson_milstein:
                out[j] = f.main[j] * fs.y[j] + f.aux[j] * bracket;
                break;
            default:
                throw std::logic_error("partial_from_frozen: unexpected kind");
        }
    }
    return out;
}

// Runs the one-step recursion over scheme steps [step_from, step_to), taking
// y0 as the state at step_from.  The observer sees (step_index, state) for
// every visited grid index, including step_from.
template <class Observer>
ModalState run_scheme_range(SchemeKind kind, const SpdeProblem& p, const PathNoise& noise,
                            long scheme_steps, long step_from, long step_to, ModalState y0,
                            Observer&& observe) {
    long nfine = noise.fine_count();
    if (scheme_steps < 1 || nfine % scheme_steps != 0)
        throw std::invalid_argument("run_scheme_range: scheme grid must divide the fine grid");
    if (kind == SchemeKind::reference && scheme_steps != nfine)
        throw std::invalid_argument("run_scheme_range: reference runs on the fine grid");
    if (scheme_uses_convolution(kind) && !noise.has_convolution())
        throw std::invalid_argument("run_scheme_range: bundle lacks convolution channel");
    long m = nfine / scheme_steps;
    double h = p.horizon / static_cast<double>(scheme_steps);
    std::size_t J = p.noise.mode_count();

    StepFactors factors = make_step_factors(kind, p.model, h);
    const bool with_conv = scheme_uses_convolution(kind);
    const bool milstein = scheme_is_milstein(kind);
    std::vector<double> w(J), conv;
    if (with_conv) conv.resize(J);

    ModalState y = std::move(y0);
    ModalState drift, gnoise;
    observe(step_from, y);
    for (long s = step_from; s < step_to; ++s) {
        long a = s * m, b = (s + 1) * m;
        for (std::size_t j = 0; j < J; ++j) {
            w[j] = noise.increment(a, b, static_cast<long>(j));
            if (with_conv) conv[j] = noise.convolution(a, b, static_cast<long>(j));
        }
        // drift and the relevant noise image share the collocation pass
        eval_drift_and_noise(p.drift, p.diffusion, y, with_conv ? conv : w, drift, gnoise);
        std::size_t n = y.size();
        ModalState next(n, y.regularity);
        if (with_conv) {
            for (std::size_t j = 0; j < n; ++j)
                next[j] = factors.main[j] * y[j] + factors.aux[j] * drift[j] + gnoise[j];
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                double bracket = h * drift[j] + gnoise[j];
                if (milstein && j < J) {
                    double q = p.noise.q[j];
                    bracket += milstein_diag_factor(p.diffusion, y, j) * 0.5 *
                               (w[j] * w[j] - q * h);
                }
                switch (kind) {
                    case SchemeKind::crank_nicolson:
                    case SchemeKind::crank_nicolson_milstein:
                        next[j] = factors.main[j] * y[j] + factors.aux[j] * bracket;
                        break;
                    default:
                        next[j] = factors.main[j] * (y[j] + bracket);
                }
            }
        }
        y = std::move(next);
        observe(s + 1, y);
    }
    return y;
}

inline ModalState run_scheme_terminal(SchemeKind kind, const SpdeProblem& p,
                                      const PathNoise& noise, long scheme_steps) {
    return run_scheme_range(kind, p, noise, scheme_steps, 0, scheme_steps, p.xi,
                            [](long, const ModalState&) {});
}

// one recursion step: state at t_n -> state at t_n + h
inline ModalState step(SchemeKind kind, const SpdeProblem& p, const ModalState& state,
                       double t_n, double h, std::span<const double> dw,
                       std::span<const double> conv, std::span<const double> iter) {
    FrozenStep fs = freeze_step(kind, p, t_n, state);
    StepFactors f = make_step_factors(kind, p.model, h);
    if (scheme_is_milstein(kind) && !iter.empty()) {
        // consume caller-provided iterated integrals: fold them into the
        // closed-form bracket by reconstructing the equivalent w^2 term
        std::size_t J = p.noise.mode_count();
        ModalState out = partial_from_frozen(p, fs, f, dw, conv);
        for (std::size_t j = 0; j < std::min(out.size(), J); ++j) {
            double q = p.noise.q[j];
            double builtin = 0.5 * (dw[j] * dw[j] - q * h);
            double corr = fs.mil[j] * (iter[j] - builtin);
            switch (kind) {
                case SchemeKind::exponential_milstein:
                case SchemeKind::implicit_euler_milstein:
                    out[j] += f.main[j] * corr;
                    break;
                case SchemeKind::crank_nicolson_milstein:
                    out[j] += f.aux[j] * corr;
                    break;
                default:
                    break;
            }
        }
        return out;
    }
    return partial_from_frozen(p, fs, f, dw, conv);
}

// A path stored on the finest grid: states[k] is the interpolated value at
// time k * h_fine.
struct PathRecord {
    double h_fine = 0.0;
    std::vector<ModalState> states;

    long count() const { return static_cast<long>(states.size()); }
    const ModalState& at(long k) const { return states[static_cast<std::size_t>(k)]; }
};

struct SimulatedPath {
    SchemeKind kind = SchemeKind::reference;
    long scheme_steps = 0;
    PathRecord record;

    const ModalState& at_fine(long k) const { return record.at(k); }
};

// Evaluates the time-continuous interpolation of the scheme at every fine
// grid node.  Within a step the mild integral representation is evaluated
// with frozen integrands and the partial noise functionals of the bundle.
inline SimulatedPath record_fine_path(SchemeKind kind, const SpdeProblem& p,
                                      const PathNoise& noise, long scheme_steps) {
    long nfine = noise.fine_count();
    if (scheme_steps < 1 || nfine % scheme_steps != 0)
        throw std::invalid_argument("record_fine_path: scheme grid must divide the fine grid");
    long m = nfine / scheme_steps;
    double h = p.horizon / static_cast<double>(scheme_steps);
    std::size_t J = p.noise.mode_count();

    // factors for every offset tau = i * h_fine, i = 1..m
    std::vector<StepFactors> offset_factors;
    offset_factors.reserve(static_cast<std::size_t>(m));
    for (long i = 1; i <= m; ++i)
        offset_factors.push_back(
            make_step_factors(kind, p.model, static_cast<double>(i) * h / static_cast<double>(m)));

    SimulatedPath path;
    path.kind = kind;
    path.scheme_steps = scheme_steps;
    path.record.h_fine = noise.fine_step();
    path.record.states.reserve(static_cast<std::size_t>(nfine + 1));
    path.record.states.push_back(p.xi);

    std::vector<double> w(J), conv;
    bool with_conv = scheme_uses_convolution(kind);
    if (with_conv) conv.resize(J);

    ModalState y = p.xi;
    for (long s = 0; s < scheme_steps; ++s) {
        double t_n = static_cast<double>(s) * h;
        FrozenStep fs = freeze_step(kind, p, t_n, y);
        std::fill(w.begin(), w.end(), 0.0);
        if (with_conv) std::fill(conv.begin(), conv.end(), 0.0);
        long a = s * m;
        for (long i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < J; ++j) {
                long jj = static_cast<long>(j);
                w[j] += noise.fine_dw(a + i, jj);
                if (with_conv)
                    conv[j] = conv[j] * noise.mode_decay(jj) + noise.fine_conv(a + i, jj);
            }
            path.record.states.push_back(
                partial_from_frozen(p, fs, offset_factors[static_cast<std::size_t>(i)], w, conv));
        }
        y = path.record.states.back();
    }
    return path;
}

// Interpolation at a single fine-grid-aligned time t.
inline ModalState interpolate(SchemeKind kind, const SpdeProblem& p, const PathNoise& noise,
                              long scheme_steps, double t) {
    if (t < 0.0 || t > p.horizon * (1.0 + 1e-12))
        throw std::invalid_argument("interpolate: t outside [0,T]");
    long nfine = noise.fine_count();
    long m = nfine / scheme_steps;
    double hf = noise.fine_step();
    long kf = static_cast<long>(std::llround(t / hf));
    if (std::abs(t - static_cast<double>(kf) * hf) > 1e-9 * p.horizon)
        throw std::invalid_argument("interpolate: t must lie on the fine grid");
    long s = kf / m;           // completed scheme steps
    long rem = kf - s * m;     // fine offsets into the current step
    ModalState y = run_scheme_range(kind, p, noise, scheme_steps, 0, s, p.xi,
                                    [](long, const ModalState&) {});
    if (rem == 0) return y;

    double h = p.horizon / static_cast<double>(scheme_steps);
    double t_n = static_cast<double>(s) * h;
    FrozenStep fs = freeze_step(kind, p, t_n, y);
    std::size_t J = p.noise.mode_count();
    std::vector<double> w(J, 0.0), conv;
    bool with_conv = scheme_uses_convolution(kind);
    if (with_conv) conv.assign(J, 0.0);
    long a = s * m;
    for (long i = 0; i < rem; ++i)
        for (std::size_t j = 0; j < J; ++j) {
            long jj = static_cast<long>(j);
            w[j] += noise.fine_dw(a + i, jj);
            if (with_conv) conv[j] = conv[j] * noise.mode_decay(jj) + noise.fine_conv(a + i, jj);
        }
    StepFactors f = make_step_factors(kind, p.model, static_cast<double>(rem) * hf);
    return partial_from_frozen(p, fs, f, w, conv);
}

// Surrogate exact solution: exponential Euler on the finest grid of the
// stream; the stream is the refinement ancestor of every coarse run.
inline SimulatedPath solve_reference(const SpdeProblem& p, const PathNoise& noise) {
    return record_fine_path(SchemeKind::reference, p, noise, noise.fine_count());
}

struct MartingaleReport {
    std::vector<double> predicted;  // S_{t1,t2} X_{t1} per mode
    std::vector<double> mean;       // MC mean of continuations at t2
    std::vector<double> se;
    std::vector<double> z;
};

// Conditional-mean check for drift-free processes: continuations from the
// state frozen at t1 must average to the semigroup image at t2.
inline MartingaleReport conditional_mean_mild_martingale_check(
    SchemeKind kind, const SpdeProblem& p, const PathStream& base_stream, long scheme_steps,
    double t1, double t2, long n_continuations) {
    if (!p.drift.is_zero())
        throw std::invalid_argument("martingale check requires drift-free problems");
    long nfine = PathStream(base_stream).fine_steps();
    long m = nfine / scheme_steps;
    double h = p.horizon / static_cast<double>(scheme_steps);
    long s1 = static_cast<long>(std::llround(t1 / h));
    long s2 = static_cast<long>(std::llround(t2 / h));
    if (std::abs(t1 - static_cast<double>(s1) * h) > 1e-9 ||
        std::abs(t2 - static_cast<double>(s2) * h) > 1e-9 || s1 > s2)
        throw std::invalid_argument("martingale check: t1, t2 must be scheme grid points");
    (void)m;

    const SpectralModel& model = p.model;
    bool with_conv = scheme_uses_convolution(kind);
    PathNoise base(p.noise, base_stream, with_conv ? &model : nullptr);
    ModalState frozen = run_scheme_range(kind, p, base, scheme_steps, 0, s1, p.xi,
                                         [](long, const ModalState&) {});

    std::size_t n = frozen.size();
    auto sg = scheme_semigroup(kind, scheme_steps, p.horizon);
    MartingaleReport rep;
    rep.predicted.resize(n);
    if (s1 == s2) {
        rep.mean.assign(frozen.coeff.begin(), frozen.coeff.end());
        for (std::size_t j = 0; j < n; ++j) rep.predicted[j] = frozen[j];
        rep.se.assign(n, 0.0);
        rep.z.assign(n, 0.0);
        return rep;
    }
    {
        auto pred = two_param_apply(sg, model, t1, t2, frozen);
        for (std::size_t j = 0; j < n; ++j) rep.predicted[j] = pred[j];
    }

    std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
    for (long c = 0; c < n_continuations; ++c) {
        PathStream cs = base_stream.branch(static_cast<std::uint64_t>(c) + 1);
        PathNoise cn(p.noise, cs, with_conv ? &model : nullptr);
        ModalState endv = run_scheme_range(kind, p, cn, scheme_steps, s1, s2, frozen,
                                           [](long, const ModalState&) {});
        for (std::size_t j = 0; j < n; ++j) {
            sum[j] += endv[j];
            sumsq[j] += endv[j] * endv[j];
        }
    }
    double nc = static_cast<double>(n_continuations);
    rep.mean.resize(n);
    rep.se.resize(n);
    rep.z.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        rep.mean[j] = sum[j] / nc;
        double var = std::max(0.0, (sumsq[j] - nc * rep.mean[j] * rep.mean[j]) / (nc - 1.0));
        rep.se[j] = std::sqrt(var / nc);
        double d = rep.mean[j] - rep.predicted[j];
        // floor absorbs pure round-off when the continuation is deterministic
        double denom = std::max(rep.se[j], 1e-13 * (1.0 + std::abs(rep.predicted[j])));
        rep.z[j] = d / denom;
    }
    return rep;
}

}  // namespace mildspde
