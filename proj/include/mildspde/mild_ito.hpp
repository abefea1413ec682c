// mild_ito.hpp — numerical evaluation of the mild Ito formula, its operator
// families K_t, L^(0), L^(1), L_t^(0), L_t^(1), the alternative formula
// variants, and the mild Kolmogorov identity.
//
// For a path X with two-parameter semigroup S, mild drift Y and mild
// diffusion Z, the formula decomposes phi(t, X_t) into
//   phi(t0, S_{t0,t} X_{t0})
//   + int (d1 phi)(s, S_{s,t} X_s) ds                       (time-derivative)
//   + int (d2 phi)(s, S_{s,t} X_s) S_{s,t} Y_s ds           (drift)
//   + int (d2 phi)(s, S_{s,t} X_s) S_{s,t} Z_s dW_s         (stochastic)
//   + 1/2 sum_j int (d2^2 phi)(s, .)(S Z g_j, S Z g_j) ds   (trace)
// Cell integrals of S_{s,t} Y_s ds and S_{s,t} Z_s dW_s are computed exactly
// from the scheme structure: the integrands are the path's own frozen step
// functions, and for every kind the product S_{s,t} Z_s collapses to a
// factor constant on each fine substep (the resolvent heads of the implicit
// semigroups cancel against the frozen mild-diffusion prefactors).  Only the
// derivative factors are discretized, by the left-point rule on the
// quadrature cells, with the same noise functionals that drove the path.
// The identity test function therefore reproduces the path's mild equation
// up to round-off at any quadrature resolution.

#pragma once

#include "mildspde/mild_process.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace mildspde {

// -- operator families -----------------------------------------------------------

// (K_t phi)(x) = phi(e^{At} x), with chain-rule derivatives
inline TestFunction apply_K(double t, const TestFunction& phi, const SpectralModel& model) {
    if (t < 0.0) throw std::invalid_argument("apply_K: negative time");
    TestFunction f = phi;
    f.name = "K[" + phi.name + "]";
    auto base = std::make_shared<TestFunction>(phi);
    auto mp = std::make_shared<SpectralModel>(model);
    f.value = [base, mp, t](const ModalState& x) {
        return base->value(apply_semigroup(*mp, t, x));
    };
    f.deriv = [base, mp, t](const ModalState& x, std::span<const ModalState> dirs) {
        std::vector<ModalState> sd(dirs.size());
        for (std::size_t i = 0; i < dirs.size(); ++i) sd[i] = apply_semigroup(*mp, t, dirs[i]);
        return base->deriv(apply_semigroup(*mp, t, x), sd);
    };
    return f;
}

// (L^(0) phi)(x) = phi'(x) F(x) + 1/2 sum_j q_j phi''(x)(B(x)e_j, B(x)e_j),
// trace truncated at J modes
inline Value apply_L0(const TestFunction& phi, const SpdeProblem& p, const ModalState& x,
                      std::size_t J) {
    Value out = phi.grad_apply(x, eval_drift(p.drift, 0.0, x));
    J = std::min(J, p.noise.mode_count());
    for (std::size_t j = 0; j < J; ++j) {
        double q = p.noise.q[j];
        if (q == 0.0) continue;
        auto col = eval_diffusion_mode(p.diffusion, 0.0, x, j);
        Value h = phi.hess_apply(x, col, col);
        h *= 0.5 * q;
        out += h;
    }
    return out;
}

// (L_t^(0) phi)(x) = phi'(e^{At}x) e^{At} F(x)
//                  + 1/2 sum_j q_j phi''(e^{At}x)(e^{At}B(x)e_j, e^{At}B(x)e_j)
inline Value apply_L0_t(double t, const TestFunction& phi, const SpdeProblem& p,
                        const ModalState& x, std::size_t J) {
    if (t == 0.0) return apply_L0(phi, p, x, J);
    ModalState y = apply_semigroup(p.model, t, x);
    Value out = phi.grad_apply(y, apply_semigroup(p.model, t, eval_drift(p.drift, 0.0, x)));
    J = std::min(J, p.noise.mode_count());
    for (std::size_t j = 0; j < J; ++j) {
        double q = p.noise.q[j];
        if (q == 0.0) continue;
        auto col = apply_semigroup(p.model, t, eval_diffusion_mode(p.diffusion, 0.0, x, j));
        Value h = phi.hess_apply(y, col, col);
        h *= 0.5 * q;
        out += h;
    }
    return out;
}

// (L_t^(1) phi)(x) applied to e_j: phi'(e^{At}x)(e^{At} B(x) e_j)
inline Value apply_L1_t(double t, const TestFunction& phi, const SpdeProblem& p,
                        const ModalState& x, std::size_t j) {
    ModalState y = t > 0.0 ? apply_semigroup(p.model, t, x) : x;
    ModalState col = eval_diffusion_mode(p.diffusion, 0.0, x, j);
    if (t > 0.0) col = apply_semigroup(p.model, t, col);
    return phi.grad_apply(y, col);
}

// -- time-dependent test functions -------------------------------------------------

struct TimeTestFunction {
    std::string name;
    bool state_valued = false;
    std::function<Value(double, const ModalState&)> value;
    std::function<Value(double, const ModalState&)> time_deriv;  // d1 phi; may be null
    std::function<Value(double, const ModalState&, std::span<const ModalState>)> deriv;

    bool has_time_derivative() const { return static_cast<bool>(time_deriv); }
};

inline TimeTestFunction promote(const TestFunction& phi) {
    TimeTestFunction f;
    f.name = phi.name;
    f.state_valued = phi.state_valued;
    auto base = std::make_shared<TestFunction>(phi);
    f.value = [base](double, const ModalState& x) { return base->value(x); };
    f.deriv = [base](double, const ModalState& x, std::span<const ModalState> dirs) {
        return base->deriv(x, dirs);
    };
    return f;
}

// -- formula evaluation -------------------------------------------------------------

struct FormulaTermBreakdown {
    Value initial_term;
    Value time_derivative_term;
    Value generator_term;  // A e^{A(t-s)} X_{t0} integral of the variant formulas
    Value drift_term;
    Value stochastic_term;
    Value trace_term;
    Value lhs;
    Value residual;

    Value term_sum() const {
        Value s = initial_term;
        s += time_derivative_term;
        s += generator_term;
        s += drift_term;
        s += stochastic_term;
        s += trace_term;
        return s;
    }
};

namespace ito_detail {

inline bool analytic_kind(SchemeKind k) {
    return k == SchemeKind::exponential_euler || k == SchemeKind::accelerated_exponential_euler ||
           k == SchemeKind::exponential_milstein || k == SchemeKind::reference;
}

// Exact per-cell integrals of S_{s,t} Y_s ds and S_{s,t} Z_s dW_s over the
// quadrature cells [k0 + c*sub, k0 + (c+1)*sub) of the fine grid.
struct CellIntegrals {
    std::vector<ModalState> drift;  // one state per cell
    std::vector<ModalState> noise;  // one state per cell
};

inline CellIntegrals assemble_cells(const SpdeProblem& p, const SimulatedPath& path,
                                    const PathNoise& noise, double t, long k0, long k1,
                                    long sub) {
    double hf = noise.fine_step();
    std::size_t n = p.dim();
    std::size_t J = p.noise.mode_count();
    long m = noise.fine_count() / path.scheme_steps;
    double h_scheme = p.horizon / static_cast<double>(path.scheme_steps);
    auto ssg = scheme_semigroup(path.kind, path.scheme_steps, p.horizon);
    const bool milstein = scheme_is_milstein(path.kind);
    const bool accelerated = scheme_uses_convolution(path.kind);
    const bool cn = path.kind == SchemeKind::crank_nicolson ||
                    path.kind == SchemeKind::crank_nicolson_milstein;
    long M = (k1 - k0) / sub;

    CellIntegrals cells;
    cells.drift.assign(static_cast<std::size_t>(M), ModalState(n));
    cells.noise.assign(static_cast<std::size_t>(M), ModalState(n));

    long cur_scheme = -1;
    double cur_tn = 0.0;
    FrozenStep fs;
    std::vector<double> dfac(n);            // S-factor from the step anchor t_n to t
    std::vector<double> w_partial(J, 0.0);  // increments since the scheme step start
    std::vector<double> dw(J), wconv(J);

    for (long k = k0; k < k1; ++k) {
        long s_idx = k / m;
        if (s_idx != cur_scheme) {
            cur_scheme = s_idx;
            cur_tn = static_cast<double>(s_idx) * h_scheme;
            fs = freeze_step(path.kind, p, cur_tn, path.at_fine(s_idx * m));
            for (std::size_t i = 0; i < n; ++i)
                dfac[i] = two_param_factor(ssg, p.model, i, cur_tn, t);
            std::fill(w_partial.begin(), w_partial.end(), 0.0);
            for (long kk = s_idx * m; kk < k; ++kk)
                for (std::size_t j = 0; j < J; ++j)
                    w_partial[j] += noise.fine_dw(kk, static_cast<long>(j));
        }
        long c = (k - k0) / sub;
        auto& dcell = cells.drift[static_cast<std::size_t>(c)];
        auto& ncell = cells.noise[static_cast<std::size_t>(c)];
        double u_next = static_cast<double>(k + 1) * hf;
        for (std::size_t j = 0; j < J; ++j) dw[j] = noise.fine_dw(k, static_cast<long>(j));

        if (accelerated) {
            for (std::size_t i = 0; i < n; ++i) {
                double lam = p.model.lambda(i);
                double tail = std::exp(-lam * (t - u_next));
                double phi1 = lam * hf < 1e-12 ? hf : -std::expm1(-lam * hf) / lam;
                dcell[i] += tail * phi1 * fs.drift[i];
            }
            // the path aggregates mode-k convolutions with their own decay up
            // to the step end and transports the mixed image with the outer
            // semigroup; mirror that split exactly
            double te = std::min(cur_tn + h_scheme, t);
            for (std::size_t j = 0; j < J; ++j)
                wconv[j] = std::exp(-p.model.lambda(j) * (te - u_next)) *
                           noise.fine_conv(k, static_cast<long>(j));
            ModalState v = diffusion_apply_noise(p.diffusion, fs.y, wconv);
            for (std::size_t i = 0; i < n; ++i)
                ncell[i] += std::exp(-p.model.lambda(i) * (t - te)) * v[i];
        } else {
            ModalState g = diffusion_apply_noise(p.diffusion, fs.y, dw);
            for (std::size_t i = 0; i < n; ++i) {
                double yterm = fs.drift[i];
                if (cn) yterm -= 0.5 * p.model.lambda(i) * fs.y[i];
                dcell[i] += dfac[i] * hf * yterm;
                ncell[i] += dfac[i] * g[i];
            }
            if (milstein) {
                for (std::size_t j = 0; j < std::min<std::size_t>(n, J); ++j) {
                    double q = p.noise.q[j];
                    double iter = w_partial[j] * dw[j] + 0.5 * (dw[j] * dw[j] - q * hf);
                    ncell[j] += dfac[j] * fs.mil[j] * iter;
                }
            }
        }
        for (std::size_t j = 0; j < J; ++j) w_partial[j] += dw[j];
    }
    return cells;
}

}  // namespace ito_detail

// Evaluates every term of the mild Ito formula for the given scheme path on
// [t0, t] with M quadrature cells and the trace truncated at J modes.  The
// cell boundaries must lie on the path's fine grid.
inline FormulaTermBreakdown evaluate_mild_ito(const SpdeProblem& p, const SimulatedPath& path,
                                              const PathNoise& noise,
                                              const TimeTestFunction& phi, double t0, double t,
                                              long M, std::size_t J_trace) {
    double hf = noise.fine_step();
    long k0 = static_cast<long>(std::llround(t0 / hf));
    long k1 = static_cast<long>(std::llround(t / hf));
    if (std::abs(t0 - static_cast<double>(k0) * hf) > 1e-9 ||
        std::abs(t - static_cast<double>(k1) * hf) > 1e-9)
        throw std::invalid_argument("evaluate_mild_ito: t0, t must lie on the fine grid");
    if (k1 <= k0) throw std::invalid_argument("evaluate_mild_ito: requires t0 < t");
    if (M < 1 || (k1 - k0) % M != 0)
        throw std::invalid_argument(
            "evaluate_mild_ito: quadrature grid does not refine into the path grid");
    long sub = (k1 - k0) / M;
    std::size_t n = p.dim();
    std::size_t J = std::min(J_trace, p.noise.mode_count());
    long m = noise.fine_count() / path.scheme_steps;
    double h_scheme = p.horizon / static_cast<double>(path.scheme_steps);
    auto ssg = scheme_semigroup(path.kind, path.scheme_steps, p.horizon);
    const bool milstein = scheme_is_milstein(path.kind);
    const bool accelerated = scheme_uses_convolution(path.kind);

    Value lhs = phi.value(t, path.at_fine(k1));
    ModalState s_x0(n);
    for (std::size_t i = 0; i < n; ++i)
        s_x0[i] = two_param_factor(ssg, p.model, i, t0, t) * path.at_fine(k0)[i];
    Value initial = phi.value(t0, s_x0);

    auto cells = ito_detail::assemble_cells(p, path, noise, t, k0, k1, sub);

    Value zero = phi.state_valued ? Value::vec(ModalState(n)) : Value::real(0.0);
    Value time_term = zero, drift_term = zero, stoch_term = zero, trace_term = zero;

    long cur_scheme = -1;
    FrozenStep fs;
    std::vector<double> dfac(n);
    std::vector<double> w_partial(J, 0.0);
    std::vector<ModalState> cols;  // S_{u,t} Z_u e_j without the Milstein running part

    for (long c = 0; c < M; ++c) {
        long k = k0 + c * sub;
        double u = static_cast<double>(k) * hf;
        long s_idx = k / m;
        if (s_idx != cur_scheme) {
            cur_scheme = s_idx;
            double t_n = static_cast<double>(s_idx) * h_scheme;
            fs = freeze_step(path.kind, p, t_n, path.at_fine(s_idx * m));
            for (std::size_t i = 0; i < n; ++i)
                dfac[i] = two_param_factor(ssg, p.model, i, t_n, t);
            std::fill(w_partial.begin(), w_partial.end(), 0.0);
            for (long kk = s_idx * m; kk < k; ++kk)
                for (std::size_t j = 0; j < J; ++j)
                    w_partial[j] += noise.fine_dw(kk, static_cast<long>(j));
            // base diffusion columns, constant over the scheme step
            if (!accelerated) {
                cols.assign(J, ModalState(n));
                for (std::size_t j = 0; j < J; ++j) {
                    if (p.noise.q[j] == 0.0) continue;
                    cols[j] = eval_diffusion_mode(p.diffusion, t_n, fs.y, j);
                    for (std::size_t i = 0; i < n; ++i) cols[j][i] *= dfac[i];
                }
            } else {
                cols.assign(J, ModalState(n));
                for (std::size_t j = 0; j < J; ++j) {
                    if (p.noise.q[j] == 0.0) continue;
                    cols[j] = eval_diffusion_mode(p.diffusion, t_n, fs.y, j);
                }
            }
        } else {
            for (long kk = k - sub; kk < k; ++kk)
                for (std::size_t j = 0; j < J; ++j)
                    w_partial[j] += noise.fine_dw(kk, static_cast<long>(j));
        }

        ModalState x_eval(n);
        const auto& xu = path.at_fine(k);
        for (std::size_t i = 0; i < n; ++i)
            x_eval[i] = two_param_factor(ssg, p.model, i, u, t) * xu[i];

        if (phi.has_time_derivative()) {
            Value dt = phi.time_deriv(u, x_eval);
            dt *= static_cast<double>(sub) * hf;
            time_term += dt;
        }
        drift_term += phi.deriv(u, x_eval, std::span<const ModalState>(
                                               &cells.drift[static_cast<std::size_t>(c)], 1));
        stoch_term += phi.deriv(u, x_eval, std::span<const ModalState>(
                                               &cells.noise[static_cast<std::size_t>(c)], 1));

        for (std::size_t j = 0; j < J; ++j) {
            double q = p.noise.q[j];
            if (q == 0.0) continue;
            ModalState col = cols[j];
            if (accelerated) {
                for (std::size_t i = 0; i < n; ++i)
                    col[i] *= std::exp(-p.model.lambda(i) * (t - u));
            } else if (milstein && j < n) {
                col[j] += dfac[j] * fs.mil[j] * w_partial[j];
            }
            ModalState dirs[2] = {col, col};
            Value hv = phi.deriv(u, x_eval, std::span<const ModalState>(dirs, 2));
            hv *= 0.5 * q * static_cast<double>(sub) * hf;
            trace_term += hv;
        }
    }

    FormulaTermBreakdown out;
    out.initial_term = initial;
    out.time_derivative_term = time_term;
    out.generator_term = zero;
    out.drift_term = drift_term;
    out.stochastic_term = stoch_term;
    out.trace_term = trace_term;
    out.lhs = lhs;
    out.residual = lhs;
    out.residual -= out.term_sum();
    return out;
}

inline FormulaTermBreakdown evaluate_mild_ito(const SpdeProblem& p, const SimulatedPath& path,
                                              const PathNoise& noise, const TestFunction& phi,
                                              double t0, double t, long M, std::size_t J_trace) {
    return evaluate_mild_ito(p, path, noise, promote(phi), t0, t, M, J_trace);
}

// -- alternative formulas ------------------------------------------------------------

enum class FormulaVariant { corollary_anotherito1, proposition_secondito };

// Variants of the formula for paths with the analytic semigroup.  Both move
// the initial term to phi(X_{t0}) and carry the exact generator integral
// int A e^{A(t-s)} X_{t0} ds; they differ in where the derivatives are
// evaluated:
//   corollary_anotherito1:  phi'((I + e^{A(t-t0)} - e^{A(t-s)}) X_{t0}) for
//                           the generator integral, the remaining terms as in
//                           the base formula;
//   proposition_secondito:  phi'(X_{t0} + e^{A(t-s)} (X_s - X_{t0}))
//                           throughout.
inline FormulaTermBreakdown evaluate_alternative_formula(
    const SpdeProblem& p, const SimulatedPath& path, const PathNoise& noise,
    const TestFunction& phi, double t0, double t, long M, std::size_t J_trace,
    FormulaVariant variant) {
    if (!ito_detail::analytic_kind(path.kind))
        throw std::domain_error(
            "alternative formulas are stated for analytic-semigroup paths only");
    double hf = noise.fine_step();
    long k0 = static_cast<long>(std::llround(t0 / hf));
    long k1 = static_cast<long>(std::llround(t / hf));
    if (std::abs(t0 - static_cast<double>(k0) * hf) > 1e-9 ||
        std::abs(t - static_cast<double>(k1) * hf) > 1e-9)
        throw std::invalid_argument("alternative formula: t0, t must lie on the fine grid");
    if (k1 <= k0) throw std::invalid_argument("alternative formula: requires t0 < t");
    if (M < 1 || (k1 - k0) % M != 0)
        throw std::invalid_argument(
            "alternative formula: quadrature grid does not refine into the path grid");
    long sub = (k1 - k0) / M;
    std::size_t n = p.dim();
    std::size_t J = std::min(J_trace, p.noise.mode_count());
    long m = noise.fine_count() / path.scheme_steps;
    double h_scheme = p.horizon / static_cast<double>(path.scheme_steps);
    auto ssg = scheme_semigroup(path.kind, path.scheme_steps, p.horizon);
    const bool milstein = scheme_is_milstein(path.kind);
    const bool accelerated = scheme_uses_convolution(path.kind);
    const ModalState& x0 = path.at_fine(k0);

    Value lhs = phi.value(path.at_fine(k1));
    Value initial = phi.value(x0);
    auto cells = ito_detail::assemble_cells(p, path, noise, t, k0, k1, sub);

    Value zero = phi.state_valued ? Value::vec(ModalState(n)) : Value::real(0.0);
    Value gen_term = zero, drift_term = zero, stoch_term = zero, trace_term = zero;

    long cur_scheme = -1;
    FrozenStep fs;
    std::vector<ModalState> cols;
    std::vector<double> dfac(n);
    std::vector<double> w_partial(J, 0.0);

    for (long c = 0; c < M; ++c) {
        long k = k0 + c * sub;
        double u = static_cast<double>(k) * hf;
        double u_next = static_cast<double>(k + sub) * hf;
        long s_idx = k / m;
        if (s_idx != cur_scheme) {
            cur_scheme = s_idx;
            double t_n = static_cast<double>(s_idx) * h_scheme;
            fs = freeze_step(path.kind, p, t_n, path.at_fine(s_idx * m));
            for (std::size_t i = 0; i < n; ++i)
                dfac[i] = two_param_factor(ssg, p.model, i, t_n, t);
            std::fill(w_partial.begin(), w_partial.end(), 0.0);
            for (long kk = s_idx * m; kk < k; ++kk)
                for (std::size_t j = 0; j < J; ++j)
                    w_partial[j] += noise.fine_dw(kk, static_cast<long>(j));
            cols.assign(J, ModalState(n));
            for (std::size_t j = 0; j < J; ++j) {
                if (p.noise.q[j] == 0.0) continue;
                cols[j] = eval_diffusion_mode(p.diffusion, t_n, fs.y, j);
                if (!accelerated)
                    for (std::size_t i = 0; i < n; ++i) cols[j][i] *= dfac[i];
            }
        } else {
            for (long kk = k - sub; kk < k; ++kk)
                for (std::size_t j = 0; j < J; ++j)
                    w_partial[j] += noise.fine_dw(kk, static_cast<long>(j));
        }

        // evaluation points of the two variants
        ModalState x_gen(n);   // for the generator integrand
        ModalState x_eval(n);  // for the remaining terms
        const auto& xu = path.at_fine(k);
        for (std::size_t i = 0; i < n; ++i) {
            double e_t0 = std::exp(-p.model.lambda(i) * (t - t0));
            double e_u = std::exp(-p.model.lambda(i) * (t - u));
            if (variant == FormulaVariant::corollary_anotherito1) {
                x_gen[i] = (1.0 + e_t0 - e_u) * x0[i];
                x_eval[i] = e_u * xu[i];
            } else {
                x_gen[i] = x0[i] + e_u * (xu[i] - x0[i]);
                x_eval[i] = x_gen[i];
            }
        }

        // exact cell integral of A e^{A(t-s)} X_{t0} ds
        ModalState acell(n);
        for (std::size_t i = 0; i < n; ++i) {
            double lam = p.model.lambda(i);
            acell[i] = (std::exp(-lam * (t - u)) - std::exp(-lam * (t - u_next))) * x0[i];
        }
        gen_term += phi.grad_apply(x_gen, acell);

        drift_term += phi.grad_apply(x_eval, cells.drift[static_cast<std::size_t>(c)]);
        stoch_term += phi.grad_apply(x_eval, cells.noise[static_cast<std::size_t>(c)]);

        for (std::size_t j = 0; j < J; ++j) {
            double q = p.noise.q[j];
            if (q == 0.0) continue;
            ModalState col = cols[j];
            if (accelerated) {
                for (std::size_t i = 0; i < n; ++i)
                    col[i] *= std::exp(-p.model.lambda(i) * (t - u));
            } else if (milstein && j < n) {
                col[j] += dfac[j] * fs.mil[j] * w_partial[j];
            }
            Value hv = phi.hess_apply(x_eval, col, col);
            hv *= 0.5 * q * static_cast<double>(sub) * hf;
            trace_term += hv;
        }
    }

    FormulaTermBreakdown out;
    out.initial_term = initial;
    out.time_derivative_term = zero;
    out.generator_term = gen_term;
    out.drift_term = drift_term;
    out.stochastic_term = stoch_term;
    out.trace_term = trace_term;
    out.lhs = lhs;
    out.residual = lhs;
    out.residual -= out.term_sum();
    return out;
}

// -- mild Kolmogorov identity ----------------------------------------------------------

struct KolmogorovReport {
    double lhs_mean = 0.0, lhs_se = 0.0;
    double rhs_mean = 0.0, rhs_se = 0.0;
    double k_term_mean = 0.0;     // E[(K_{t-t0} phi)(X_{t0})]
    double integral_mean = 0.0;   // quadrature of E[(L^(0)_{t-s} phi)(X_s)]
    double z = 0.0;
};

// (P_t phi)(x) vs (P_{t0} K_{t-t0} phi)(x) + int_{t0}^t (P_s L^(0)_{t-s} phi)(x) ds.
// The left side uses n_outer independent paths started at x; the right side
// n_inner paths, each contributing the K term at t0 and the midpoint
// quadrature of the generator term along its own trajectory.
inline KolmogorovReport check_mild_kolmogorov(const SpdeProblem& p, const ModalState& x,
                                              const TestFunction& phi, double t0, double t,
                                              long n_outer, long n_inner, long n_quad,
                                              long fine_steps, std::uint64_t seed) {
    if (!(0.0 <= t0 && t0 <= t && t <= p.horizon))
        throw std::invalid_argument("check_mild_kolmogorov: need 0 <= t0 <= t <= T");
    SpdeProblem prob = p;
    prob.xi = x;
    double hf = p.horizon / static_cast<double>(fine_steps);
    long kt = static_cast<long>(std::llround(t / hf));
    long kt0 = static_cast<long>(std::llround(t0 / hf));
    if (std::abs(t - static_cast<double>(kt) * hf) > 1e-9 ||
        std::abs(t0 - static_cast<double>(kt0) * hf) > 1e-9)
        throw std::invalid_argument("check_mild_kolmogorov: t0, t must lie on the fine grid");

    // midpoint quadrature nodes, snapped to the fine grid
    double cell = (t - t0) / static_cast<double>(n_quad);
    std::vector<long> q_idx(static_cast<std::size_t>(n_quad));
    for (long qn = 0; qn < n_quad; ++qn) {
        double s = t0 + (static_cast<double>(qn) + 0.5) * cell;
        long ks = static_cast<long>(std::llround(s / hf));
        if (std::abs(s - static_cast<double>(ks) * hf) > 1e-9)
            throw std::invalid_argument(
                "check_mild_kolmogorov: quadrature midpoints must lie on the fine grid");
        q_idx[static_cast<std::size_t>(qn)] = ks;
    }

    double l_sum = 0.0, l_sq = 0.0;
    for (long c = 0; c < n_outer; ++c) {
        PathStream stream{mix64(seed ^ 0x0123456789ULL), static_cast<std::uint64_t>(c), hf,
                          p.horizon};
        PathNoise noise(prob.noise, stream, &prob.model);
        ModalState xt = prob.xi;
        xt = run_scheme_range(SchemeKind::reference, prob, noise, fine_steps, 0, kt, prob.xi,
                              [](long, const ModalState&) {});
        double v = phi(xt).as_real();
        l_sum += v;
        l_sq += v * v;
    }
    double no = static_cast<double>(n_outer);
    double lhs_mean = l_sum / no;
    double lhs_se = std::sqrt(std::max(0.0, (l_sq / no - lhs_mean * lhs_mean) / no));

    double r_sum = 0.0, r_sq = 0.0, k_sum = 0.0, i_sum = 0.0;
    std::size_t J = prob.noise.mode_count();
    for (long c = 0; c < n_inner; ++c) {
        PathStream stream{mix64(seed ^ 0x9876543210ULL), static_cast<std::uint64_t>(c), hf,
                          p.horizon};
        PathNoise noise(prob.noise, stream, &prob.model);
        double kterm = 0.0, integral = 0.0;
        std::size_t qpos = 0;
        ModalState dummy = run_scheme_range(
            SchemeKind::reference, prob, noise, fine_steps, 0, kt, prob.xi,
            [&](long kidx, const ModalState& s) {
                if (kidx == kt0)
                    kterm = phi(apply_semigroup(prob.model, t - t0, s)).as_real();
                while (qpos < q_idx.size() && q_idx[qpos] == kidx) {
                    double sq = static_cast<double>(kidx) * hf;
                    integral +=
                        cell * apply_L0_t(t - sq, phi, prob, s, J).as_real();
                    ++qpos;
                }
            });
        (void)dummy;
        double v = kterm + integral;
        r_sum += v;
        r_sq += v * v;
        k_sum += kterm;
        i_sum += integral;
    }
    double ni = static_cast<double>(n_inner);
    KolmogorovReport rep;
    rep.lhs_mean = lhs_mean;
    rep.lhs_se = lhs_se;
    rep.rhs_mean = r_sum / ni;
    rep.rhs_se = std::sqrt(std::max(0.0, (r_sq / ni - rep.rhs_mean * rep.rhs_mean) / ni));
    rep.k_term_mean = k_sum / ni;
    rep.integral_mean = i_sum / ni;
    double denom = std::sqrt(rep.lhs_se * rep.lhs_se + rep.rhs_se * rep.rhs_se);
    rep.z = denom > 0.0 ? (rep.lhs_mean - rep.rhs_mean) / denom : 0.0;
    return rep;
}

}  // namespace mildspde
