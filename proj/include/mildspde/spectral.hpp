// spectral.hpp — diagonal generator A, fractional spaces H_r, analytic and
// rational two-parameter semigroups, Galerkin projections.
//
// The operator A is diagonal in a fixed orthonormal basis (e_n):
//   A v = -sum_n lambda_n <e_n, v> e_n,   0 < lambda_1 <= lambda_2 <= ...
// States are finite modal coefficient vectors.  The fractional space H_r
// carries the norm
//   |v|_{H_r}^2 = sum_n (eta + lambda_n)^{2r} v_n^2 .
//
// Three two-parameter semigroup kinds are provided:
//   analytic        S_{t1,t2} = e^{A (t2-t1)}            (depends on t2-t1)
//   implicit_euler  per-mode rational product anchored to the step grid
//   crank_nicolson  same with half-step resolvents
// The implicit kinds genuinely depend on both time arguments, not just the
// difference.  Off grid they use the full three-factor product
//   (I - A (t1-fl(t1))) (I - A (t2-fl(t2)))^{-1} (I - (T/N) A)^{(fl(t1)-fl(t2)) N/T}
// and the half-step analogue, where fl is the grid floor.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mildspde {

inline constexpr double kPi = 3.14159265358979323846;

// A Galerkin state: modal coefficients plus the declared regularity index
// of the space the state is considered to live in.
struct ModalState {
    std::vector<double> coeff;
    double regularity = 0.0;

    ModalState() = default;
    explicit ModalState(std::size_t n, double gamma = 0.0)
        : coeff(n, 0.0), regularity(gamma) {}
    ModalState(std::vector<double> c, double gamma = 0.0)
        : coeff(std::move(c)), regularity(gamma) {}
    ModalState(std::initializer_list<double> c, double gamma = 0.0)
        : coeff(c), regularity(gamma) {}

    std::size_t size() const { return coeff.size(); }
    double operator[](std::size_t n) const { return coeff[n]; }
    double& operator[](std::size_t n) { return coeff[n]; }
};

inline ModalState zero_state(std::size_t n, double gamma = 0.0) {
    return ModalState(n, gamma);
}

inline ModalState basis_state(std::size_t n_modes, std::size_t idx, double scale = 1.0) {
    ModalState v(n_modes);
    if (idx >= n_modes) throw std::invalid_argument("basis_state: index out of range");
    v[idx] = scale;
    return v;
}

// x += a*y, sizes must match
inline void axpy(double a, const ModalState& y, ModalState& x) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
    for (std::size_t n = 0; n < x.size(); ++n) x.coeff[n] += a * y.coeff[n];
}

inline ModalState scaled(const ModalState& x, double a) {
    ModalState r = x;
    for (auto& c : r.coeff) c *= a;
    return r;
}

inline double dot(const ModalState& a, const ModalState& b) {
    std::size_t n = std::min(a.size(), b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a.coeff[i] * b.coeff[i];
    return s;
}

// Diagonal negative-definite generator: eigenvalues of -A with shift eta.
struct SpectralModel {
    std::vector<double> eigenvalues;  // lambda_n > 0, nondecreasing
    double eta = 0.0;

    SpectralModel() = default;
    SpectralModel(std::initializer_list<double> lambdas, double shift = 0.0)
        : SpectralModel(std::vector<double>(lambdas), shift) {}
    SpectralModel(std::vector<double> lambdas, double shift = 0.0)
        : eigenvalues(std::move(lambdas)), eta(shift) {
        if (eigenvalues.empty())
            throw std::invalid_argument("SpectralModel: no eigenvalues");
        if (eta < 0.0)
            throw std::invalid_argument("SpectralModel: eta must be nonnegative");
        double prev = 0.0;
        for (double l : eigenvalues) {
            if (!(l > 0.0) || l < prev)
                throw std::invalid_argument(
                    "SpectralModel: eigenvalues must be positive and nondecreasing");
            if (!(eta + l > 0.0))
                throw std::invalid_argument("SpectralModel: eta + lambda_n must be positive");
            prev = l;
        }
    }

    std::size_t mode_count() const { return eigenvalues.size(); }
    double lambda(std::size_t n) const { return eigenvalues[n]; }
    // (eta + lambda_n)^r
    double fractional_weight(double r, std::size_t n) const {
        return std::pow(eta + eigenvalues[n], r);
    }
};

// Dirichlet Laplacian on (0,1): lambda_n = n^2 pi^2, basis e_n = sqrt(2) sin(n pi x)
inline SpectralModel dirichlet_laplacian(std::size_t n_modes, double eta = 0.0) {
    std::vector<double> l(n_modes);
    for (std::size_t n = 0; n < n_modes; ++n) {
        double k = static_cast<double>(n + 1);
        l[n] = k * k * kPi * kPi;
    }
    return SpectralModel(std::move(l), eta);
}

// e^{At} v, mode-wise factor exp(-lambda_n t).  Regularity index preserved.
inline ModalState apply_semigroup(const SpectralModel& model, double t, const ModalState& v) {
    if (t < 0.0) throw std::invalid_argument("apply_semigroup: negative time");
    if (v.size() > model.mode_count())
        throw std::invalid_argument("apply_semigroup: state larger than model");
    ModalState r = v;
    for (std::size_t n = 0; n < v.size(); ++n)
        r.coeff[n] = v.coeff[n] * std::exp(-model.lambda(n) * t);
    return r;
}

// |v|_{H_r} = ( sum_n (eta+lambda_n)^{2r} v_n^2 )^{1/2}
inline double fractional_norm(const SpectralModel& model, double r, const ModalState& v) {
    if (v.size() > model.mode_count())
        throw std::invalid_argument("fractional_norm: state larger than model");
    double s = 0.0;
    for (std::size_t n = 0; n < v.size(); ++n) {
        double w = model.fractional_weight(r, n);
        s += w * w * v.coeff[n] * v.coeff[n];
    }
    return std::sqrt(s);
}

inline double h_norm(const ModalState& v) {
    double s = 0.0;
    for (double c : v.coeff) s += c * c;
    return std::sqrt(s);
}

// P_N: keep the first N modal coefficients, zero the rest.  Idempotent.
inline ModalState galerkin_project(const ModalState& v, std::size_t n_keep) {
    if (n_keep < 1) throw std::invalid_argument("galerkin_project: N must be >= 1");
    ModalState r = v;
    for (std::size_t n = n_keep; n < r.size(); ++n) r.coeff[n] = 0.0;
    return r;
}

// floor of t to the grid {0, T/N, 2T/N, ..., T}.  Snapping tolerance absorbs
// the rounding of grid times assembled as k*T/N in double precision.
inline double floor_to_grid(double t, long n_steps, double horizon) {
    if (n_steps < 1) throw std::invalid_argument("floor_to_grid: N must be >= 1");
    if (t < -1e-12 * horizon || t > horizon * (1.0 + 1e-12))
        throw std::invalid_argument("floor_to_grid: t outside [0,T]");
    double s = t * static_cast<double>(n_steps) / horizon;
    long k = static_cast<long>(std::floor(s + 1e-9));
    if (k < 0) k = 0;
    if (k > n_steps) k = n_steps;
    return static_cast<double>(k) * horizon / static_cast<double>(n_steps);
}

enum class SemigroupKind { analytic, implicit_euler, crank_nicolson };

// Two-parameter semigroup S : {(t1,t2): t1 < t2} -> L(H).
struct TwoParamSemigroup {
    SemigroupKind kind = SemigroupKind::analytic;
    long step_count = 1;    // N, used by the implicit kinds
    double horizon = 1.0;   // T

    static TwoParamSemigroup analytic() { return {SemigroupKind::analytic, 1, 1.0}; }
    static TwoParamSemigroup implicit_euler(long n, double T) {
        return {SemigroupKind::implicit_euler, n, T};
    }
    static TwoParamSemigroup crank_nicolson(long n, double T) {
        return {SemigroupKind::crank_nicolson, n, T};
    }
};

// Per-mode scalar factor of S_{t1,t2}.
inline double two_param_factor(const TwoParamSemigroup& sg, const SpectralModel& model,
                               std::size_t n, double t1, double t2) {
    if (!(t1 < t2)) throw std::invalid_argument("two_param_factor: requires t1 < t2");
    double lam = model.lambda(n);
    switch (sg.kind) {
        case SemigroupKind::analytic:
            return std::exp(-lam * (t2 - t1));
        case SemigroupKind::implicit_euler: {
            double f1 = floor_to_grid(t1, sg.step_count, sg.horizon);
            double f2 = floor_to_grid(t2, sg.step_count, sg.horizon);
            double h = sg.horizon / static_cast<double>(sg.step_count);
            long k = static_cast<long>(std::llround((f2 - f1) / h));
            double head = 1.0 + lam * (t1 - f1);
            double mid = 1.0 / (1.0 + lam * (t2 - f2));
            return head * mid * std::pow(1.0 + h * lam, static_cast<double>(-k));
        }
        case SemigroupKind::crank_nicolson: {
            double f1 = floor_to_grid(t1, sg.step_count, sg.horizon);
            double f2 = floor_to_grid(t2, sg.step_count, sg.horizon);
            double h = sg.horizon / static_cast<double>(sg.step_count);
            long k = static_cast<long>(std::llround((f2 - f1) / h));
            double head = 1.0 + 0.5 * lam * (t1 - f1);
            double mid = 1.0 / (1.0 + 0.5 * lam * (t2 - f2));
            return head * mid * std::pow(1.0 + 0.5 * h * lam, static_cast<double>(-k));
        }
    }
    throw std::logic_error("two_param_factor: unknown kind");
}

// S_{t1,t2} v
inline ModalState two_param_apply(const TwoParamSemigroup& sg, const SpectralModel& model,
                                  double t1, double t2, const ModalState& v) {
    if (!(t1 < t2)) throw std::invalid_argument("two_param_apply: requires t1 < t2");
    if (t1 < 0.0 || t2 > sg.horizon * (1.0 + 1e-12))
        if (sg.kind != SemigroupKind::analytic)
            throw std::invalid_argument("two_param_apply: times outside [0,T]");
    ModalState r = v;
    for (std::size_t n = 0; n < v.size(); ++n)
        r.coeff[n] = v.coeff[n] * two_param_factor(sg, model, n, t1, t2);
    return r;
}

}  // namespace mildspde
