// coefficients.hpp — drift F, diffusion B, and the test-function library with
// the derivative structure the mild Ito calculus needs.
//
// Nemytskii operators act pointwise on the Dirichlet sine basis via
// collocation on a uniform grid of 2*N_max subdivisions of (0,1).  For states
// band-limited to the retained modes the grid <-> modal round trip is exact
// (discrete sine orthogonality), so the only error is aliasing of the
// nonlinearity, which is accepted.

#pragma once

#include "mildspde/spectral.hpp"
#include "mildspde/noise.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mildspde {

namespace detail {
inline std::vector<double>& scratch(std::size_t n, int slot) {
    thread_local std::vector<double> bufs[4];
    auto& b = bufs[slot];
    if (b.size() < n) b.resize(n);
    return b;
}

#if defined(__GNUC__) || defined(__clang__)
#define MILDSPDE_VEC 1
typedef double v4d __attribute__((vector_size(32)));

inline v4d v4load(const double* p) {
    v4d v;
    __builtin_memcpy(&v, p, sizeof(v));
    return v;
}
inline void v4store(double* p, v4d v) { __builtin_memcpy(p, &v, sizeof(v)); }
inline double v4sum(v4d v) { return (v[0] + v[1]) + (v[2] + v[3]); }
#endif
}  // namespace detail

// -- scalar reaction functions -------------------------------------------------

// y -> f(y) with derivatives up to max_order; the amplitude multiplies all
// derivative orders.
struct ScalarFunction {
    std::string name;
    double amplitude = 1.0;
    int max_order = 0;
    std::function<double(int, double)> deriv;  // k-th derivative at y, unscaled

    double d(int k, double y) const {
        if (k > max_order)
            throw std::invalid_argument("ScalarFunction '" + name +
                                        "': derivative order " + std::to_string(k) +
                                        " unavailable");
        return amplitude * deriv(k, y);
    }
    double operator()(double y) const { return d(0, y); }
};

inline ScalarFunction scalar_sin(double amplitude = 1.0) {
    return {"sin", amplitude, 1 << 20,
            [](int k, double y) { return std::sin(y + 0.5 * kPi * static_cast<double>(k)); }};
}

inline ScalarFunction scalar_cos(double amplitude = 1.0) {
    return {"cos", amplitude, 1 << 20,
            [](int k, double y) { return std::cos(y + 0.5 * kPi * static_cast<double>(k)); }};
}

inline ScalarFunction scalar_identity(double amplitude = 1.0) {
    return {"identity", amplitude, 1 << 20, [](int k, double y) {
                if (k == 0) return y;
                if (k == 1) return 1.0;
                return 0.0;
            }};
}

inline ScalarFunction scalar_constant(double c) {
    return {"constant", c, 1 << 20, [](int k, double) { return k == 0 ? 1.0 : 0.0; }};
}

// bounded smooth reaction y / (1 + y^2); cheap, used by the large rate runs
inline ScalarFunction scalar_bounded_rational(double amplitude = 1.0) {
    return {"bounded_rational", amplitude, 2, [](int k, double y) {
                double d = 1.0 + y * y;
                switch (k) {
                    case 0: return y / d;
                    case 1: return (1.0 - y * y) / (d * d);
                    case 2: return 2.0 * y * (y * y - 3.0) / (d * d * d);
                }
                return 0.0;
            }};
}

// 1 / (1 + y^2); bounded multiplicative amplitude
inline ScalarFunction scalar_bounded_bell(double amplitude = 1.0) {
    return {"bounded_bell", amplitude, 2, [](int k, double y) {
                double d = 1.0 + y * y;
                switch (k) {
                    case 0: return 1.0 / d;
                    case 1: return -2.0 * y / (d * d);
                    case 2: return (6.0 * y * y - 2.0) / (d * d * d);
                }
                return 0.0;
            }};
}

inline ScalarFunction scalar_function_by_name(const std::string& name, double amplitude) {
    if (name == "sin") return scalar_sin(amplitude);
    if (name == "cos") return scalar_cos(amplitude);
    if (name == "identity") return scalar_identity(amplitude);
    if (name == "constant") return scalar_constant(amplitude);
    if (name == "bounded_rational") return scalar_bounded_rational(amplitude);
    if (name == "bounded_bell") return scalar_bounded_bell(amplitude);
    throw std::invalid_argument("unknown scalar function '" + name + "'");
}

// -- sine collocation ----------------------------------------------------------

// Uniform grid x_i = i / (2 N_max), i = 1..2 N_max - 1, with e_n = sqrt(2) sin(n pi x).
// Quadrature weight 1/(2 N_max) makes modal -> grid -> modal the identity for
// band-limited states.
class SineCollocation {
  public:
    explicit SineCollocation(std::size_t n_modes)
        : n_modes_(n_modes), divisions_(2 * n_modes), points_(2 * n_modes - 1) {
        table_.resize(n_modes_ * points_);
        for (std::size_t n = 0; n < n_modes_; ++n)
            for (std::size_t i = 0; i < points_; ++i)
                table_[n * points_ + i] =
                    std::sqrt(2.0) * std::sin(static_cast<double>(n + 1) * kPi * grid_point(i));
    }

    std::size_t mode_count() const { return n_modes_; }
    std::size_t point_count() const { return points_; }
    double grid_point(std::size_t i) const {
        return static_cast<double>(i + 1) / static_cast<double>(divisions_);
    }
    double quad_weight() const { return 1.0 / static_cast<double>(divisions_); }

    // u_i = sum_n v_n e_n(x_i)
    void to_grid(std::span<const double> modal, std::span<double> grid) const {
        std::size_t nm = std::min(modal.size(), n_modes_);
        const std::size_t P = points_;
        double* __restrict__ g = grid.data();
        for (std::size_t i = 0; i < P; ++i) g[i] = 0.0;
        for (std::size_t n = 0; n < nm; ++n) {
            double c = modal[n];
            if (c == 0.0) continue;
            const double* __restrict__ row = &table_[n * P];
            for (std::size_t i = 0; i < P; ++i) g[i] += c * row[i];
        }
    }

    // two states in one pass over the basis table; rows are tiled by four so
    // the grid accumulators stay in registers across most of the table
    void to_grid2(std::span<const double> m1, std::span<const double> m2, std::span<double> g1,
                  std::span<double> g2) const {
        std::size_t nm = std::min(std::max(m1.size(), m2.size()), n_modes_);
        const std::size_t P = points_;
        double* __restrict__ a = g1.data();
        double* __restrict__ b = g2.data();
        for (std::size_t i = 0; i < P; ++i) a[i] = b[i] = 0.0;
        auto coeff = [&](std::span<const double> m, std::size_t n) {
            return n < m.size() ? m[n] : 0.0;
        };
        std::size_t n = 0;
#ifdef MILDSPDE_VEC
        for (; n + 4 <= nm; n += 4) {
            const double* __restrict__ r0 = &table_[n * P];
            const double* __restrict__ r1 = &table_[(n + 1) * P];
            const double* __restrict__ r2 = &table_[(n + 2) * P];
            const double* __restrict__ r3 = &table_[(n + 3) * P];
            double c10 = coeff(m1, n), c11 = coeff(m1, n + 1), c12 = coeff(m1, n + 2),
                   c13 = coeff(m1, n + 3);
            double c20 = coeff(m2, n), c21 = coeff(m2, n + 1), c22 = coeff(m2, n + 2),
                   c23 = coeff(m2, n + 3);
            std::size_t i = 0;
            for (; i + 4 <= P; i += 4) {
                detail::v4d w0 = detail::v4load(r0 + i), w1 = detail::v4load(r1 + i);
                detail::v4d w2 = detail::v4load(r2 + i), w3 = detail::v4load(r3 + i);
                detail::v4d va = detail::v4load(a + i);
                detail::v4d vb = detail::v4load(b + i);
                va += c10 * w0 + c11 * w1 + c12 * w2 + c13 * w3;
                vb += c20 * w0 + c21 * w1 + c22 * w2 + c23 * w3;
                detail::v4store(a + i, va);
                detail::v4store(b + i, vb);
            }
            for (; i < P; ++i) {
                a[i] += c10 * r0[i] + c11 * r1[i] + c12 * r2[i] + c13 * r3[i];
                b[i] += c20 * r0[i] + c21 * r1[i] + c22 * r2[i] + c23 * r3[i];
            }
        }
#endif
        for (; n < nm; ++n) {
            double c1 = coeff(m1, n), c2 = coeff(m2, n);
            if (c1 == 0.0 && c2 == 0.0) continue;
            const double* __restrict__ row = &table_[n * P];
            for (std::size_t i = 0; i < P; ++i) {
                double r = row[i];
                a[i] += c1 * r;
                b[i] += c2 * r;
            }
        }
    }

    // v_n = (1/(2 N_max)) sum_i u_i e_n(x_i); vector accumulators keep the
    // reduction order fixed and the lanes saturated
    void to_modal(std::span<const double> grid, std::span<double> modal) const {
        double w = quad_weight();
        std::size_t nm = std::min(modal.size(), n_modes_);
        const std::size_t P = points_;
        const double* __restrict__ g = grid.data();
        for (std::size_t n = 0; n < nm; ++n) {
            const double* __restrict__ row = &table_[n * P];
            double s;
            std::size_t i = 0;
#ifdef MILDSPDE_VEC
            detail::v4d acc = {0.0, 0.0, 0.0, 0.0};
            for (; i + 4 <= P; i += 4)
                acc += detail::v4load(g + i) * detail::v4load(row + i);
            s = detail::v4sum(acc);
#else
            s = 0.0;
#endif
            for (; i < P; ++i) s += g[i] * row[i];
            modal[n] = w * s;
        }
    }

    // two grids against the same basis rows, rows tiled by four so each grid
    // vector is streamed once per tile
    void to_modal2(std::span<const double> gr1, std::span<const double> gr2,
                   std::span<double> m1, std::span<double> m2) const {
        double w = quad_weight();
        std::size_t nm = std::min(std::min(m1.size(), m2.size()), n_modes_);
        const std::size_t P = points_;
        const double* __restrict__ a = gr1.data();
        const double* __restrict__ b = gr2.data();
        std::size_t n = 0;
#ifdef MILDSPDE_VEC
        for (; n + 4 <= nm; n += 4) {
            const double* __restrict__ r0 = &table_[n * P];
            const double* __restrict__ r1 = &table_[(n + 1) * P];
            const double* __restrict__ r2 = &table_[(n + 2) * P];
            const double* __restrict__ r3 = &table_[(n + 3) * P];
            detail::v4d s0 = {0, 0, 0, 0}, s1 = {0, 0, 0, 0}, s2 = {0, 0, 0, 0},
                        s3 = {0, 0, 0, 0};
            detail::v4d t0 = {0, 0, 0, 0}, t1 = {0, 0, 0, 0}, t2 = {0, 0, 0, 0},
                        t3 = {0, 0, 0, 0};
            std::size_t i = 0;
            for (; i + 4 <= P; i += 4) {
                detail::v4d va = detail::v4load(a + i);
                detail::v4d vb = detail::v4load(b + i);
                detail::v4d w0 = detail::v4load(r0 + i), w1 = detail::v4load(r1 + i);
                detail::v4d w2 = detail::v4load(r2 + i), w3 = detail::v4load(r3 + i);
                s0 += va * w0;
                s1 += va * w1;
                s2 += va * w2;
                s3 += va * w3;
                t0 += vb * w0;
                t1 += vb * w1;
                t2 += vb * w2;
                t3 += vb * w3;
            }
            double d0 = detail::v4sum(s0), d1 = detail::v4sum(s1), d2 = detail::v4sum(s2),
                   d3 = detail::v4sum(s3);
            double e0 = detail::v4sum(t0), e1 = detail::v4sum(t1), e2 = detail::v4sum(t2),
                   e3 = detail::v4sum(t3);
            for (; i < P; ++i) {
                d0 += a[i] * r0[i];
                d1 += a[i] * r1[i];
                d2 += a[i] * r2[i];
                d3 += a[i] * r3[i];
                e0 += b[i] * r0[i];
                e1 += b[i] * r1[i];
                e2 += b[i] * r2[i];
                e3 += b[i] * r3[i];
            }
            m1[n] = w * d0;
            m1[n + 1] = w * d1;
            m1[n + 2] = w * d2;
            m1[n + 3] = w * d3;
            m2[n] = w * e0;
            m2[n + 1] = w * e1;
            m2[n + 2] = w * e2;
            m2[n + 3] = w * e3;
        }
#endif
        for (; n < nm; ++n) {
            const double* __restrict__ row = &table_[n * P];
            double s = 0.0, t = 0.0;
            for (std::size_t i = 0; i < P; ++i) {
                s += a[i] * row[i];
                t += b[i] * row[i];
            }
            m1[n] = w * s;
            m2[n] = w * t;
        }
    }

    double basis_at(std::size_t n, std::size_t i) const { return table_[n * points_ + i]; }
    const double* basis_row(std::size_t n) const { return &table_[n * points_]; }

  private:
    std::size_t n_modes_;
    std::size_t divisions_;
    std::size_t points_;
    std::vector<double> table_;
};

using CollocationPtr = std::shared_ptr<const SineCollocation>;

inline CollocationPtr make_collocation(std::size_t n_modes) {
    return std::make_shared<SineCollocation>(n_modes);
}

// -- drift ---------------------------------------------------------------------

enum class DriftKind { zero, linear_diagonal, matrix, nemytskii };

struct DriftSpec {
    DriftKind kind = DriftKind::zero;
    std::vector<double> diag;          // linear_diagonal
    std::vector<double> dense;         // matrix, row-major n x n
    ScalarFunction f;                  // nemytskii
    CollocationPtr colloc;             // nemytskii
    double source_regularity = 0.0;    // gamma
    double target_regularity = 0.0;    // alpha
    double lipschitz = 0.0;

    static DriftSpec zero_drift(double gamma = 0.0, double alpha = 0.0) {
        DriftSpec s;
        s.kind = DriftKind::zero;
        s.source_regularity = gamma;
        s.target_regularity = alpha;
        return s;
    }
    static DriftSpec linear_diag(std::vector<double> d, double gamma = 0.0, double alpha = 0.0) {
        DriftSpec s;
        s.kind = DriftKind::linear_diagonal;
        s.diag = std::move(d);
        for (double v : s.diag) s.lipschitz = std::max(s.lipschitz, std::abs(v));
        s.source_regularity = gamma;
        s.target_regularity = alpha;
        return s;
    }
    static DriftSpec matrix_drift(std::vector<double> m, std::size_t n, double gamma = 0.0,
                                  double alpha = 0.0) {
        if (m.size() != n * n) throw std::invalid_argument("matrix_drift: bad dimensions");
        DriftSpec s;
        s.kind = DriftKind::matrix;
        s.dense = std::move(m);
        // operator norm estimate by power iteration on M^T M
        std::vector<double> v(n, 1.0), w(n);
        double norm = 0.0;
        for (int it = 0; it < 30; ++it) {
            for (std::size_t i = 0; i < n; ++i) {
                w[i] = 0.0;
                for (std::size_t j = 0; j < n; ++j) w[i] += s.dense[i * n + j] * v[j];
            }
            std::vector<double> u(n, 0.0);
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t i = 0; i < n; ++i) u[j] += s.dense[i * n + j] * w[i];
            double nu = 0.0;
            for (double x : u) nu += x * x;
            nu = std::sqrt(nu);
            if (nu == 0.0) break;
            for (std::size_t j = 0; j < n; ++j) v[j] = u[j] / nu;
            norm = std::sqrt(nu);
        }
        s.lipschitz = norm;
        s.source_regularity = gamma;
        s.target_regularity = alpha;
        return s;
    }
    // Lipschitz constant estimated as sup |f'| on [-box, box]; diagnostics only
    static DriftSpec nemytskii_drift(ScalarFunction fn, CollocationPtr c, double gamma = 0.0,
                                     double alpha = 0.0, double box = 8.0) {
        DriftSpec s;
        s.kind = DriftKind::nemytskii;
        s.f = std::move(fn);
        s.colloc = std::move(c);
        for (int i = 0; i <= 2048; ++i) {
            double y = -box + 2.0 * box * static_cast<double>(i) / 2048.0;
            s.lipschitz = std::max(s.lipschitz, std::abs(s.f.d(1, y)));
        }
        s.source_regularity = gamma;
        s.target_regularity = alpha;
        return s;
    }

    bool is_zero() const { return kind == DriftKind::zero; }
};

// F(x); the time argument is reserved for time-dependent problems and is
// ignored by the built-in autonomous kinds
inline ModalState eval_drift(const DriftSpec& F, double /*t*/, const ModalState& x) {
    switch (F.kind) {
        case DriftKind::zero:
            return ModalState(x.size(), F.target_regularity);
        case DriftKind::linear_diagonal: {
            ModalState r(x.size(), F.target_regularity);
            std::size_t n = std::min(x.size(), F.diag.size());
            for (std::size_t i = 0; i < n; ++i) r[i] = F.diag[i] * x[i];
            return r;
        }
        case DriftKind::matrix: {
            std::size_t n = x.size();
            ModalState r(n, F.target_regularity);
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += F.dense[i * n + j] * x[j];
                r[i] = s;
            }
            return r;
        }
        case DriftKind::nemytskii: {
            const auto& c = *F.colloc;
            auto& grid = detail::scratch(c.point_count(), 0);
            c.to_grid(std::span<const double>(x.coeff), std::span<double>(grid.data(), c.point_count()));
            for (std::size_t i = 0; i < c.point_count(); ++i) grid[i] = F.f.d(0, grid[i]);
            ModalState r(x.size(), F.target_regularity);
            c.to_modal(std::span<const double>(grid.data(), c.point_count()),
                       std::span<double>(r.coeff));
            return r;
        }
    }
    throw std::logic_error("eval_drift: unknown kind");
}

// k-th Frechet derivative of F at x applied to directions (k >= 1)
inline ModalState drift_derivative(const DriftSpec& F, const ModalState& x,
                                   std::span<const ModalState> dirs) {
    if (dirs.empty()) return eval_drift(F, 0.0, x);
    switch (F.kind) {
        case DriftKind::zero:
            return ModalState(x.size(), F.target_regularity);
        case DriftKind::linear_diagonal: {
            if (dirs.size() > 1) return ModalState(x.size(), F.target_regularity);
            ModalState r(x.size(), F.target_regularity);
            std::size_t n = std::min(x.size(), F.diag.size());
            for (std::size_t i = 0; i < n; ++i) r[i] = F.diag[i] * dirs[0][i];
            return r;
        }
        case DriftKind::matrix: {
            if (dirs.size() > 1) return ModalState(x.size(), F.target_regularity);
            return eval_drift(F, 0.0, dirs[0]);
        }
        case DriftKind::nemytskii: {
            const auto& c = *F.colloc;
            std::size_t P = c.point_count();
            auto& grid = detail::scratch(P, 0);
            auto& prod = detail::scratch(P, 1);
            auto& dbuf = detail::scratch(P, 2);
            c.to_grid(std::span<const double>(x.coeff), std::span<double>(grid.data(), P));
            for (std::size_t i = 0; i < P; ++i)
                prod[i] = F.f.d(static_cast<int>(dirs.size()), grid[i]);
            for (const auto& d : dirs) {
                c.to_grid(std::span<const double>(d.coeff), std::span<double>(dbuf.data(), P));
                for (std::size_t i = 0; i < P; ++i) prod[i] *= dbuf[i];
            }
            ModalState r(x.size(), F.target_regularity);
            c.to_modal(std::span<const double>(prod.data(), P), std::span<double>(r.coeff));
            return r;
        }
    }
    throw std::logic_error("drift_derivative: unknown kind");
}

// -- diffusion -------------------------------------------------------------------

enum class DiffusionKind { additive_diagonal, multiplicative_diagonal, nemytskii };

struct DiffusionSpec {
    DiffusionKind kind = DiffusionKind::additive_diagonal;
    std::vector<double> amp;   // per-mode amplitude b_j
    ScalarFunction b;          // multiplicative_diagonal / nemytskii
    CollocationPtr colloc;     // nemytskii
    double target_regularity = 0.0;  // beta

    static DiffusionSpec additive(std::vector<double> bj, double beta = 0.0) {
        DiffusionSpec s;
        s.kind = DiffusionKind::additive_diagonal;
        s.amp = std::move(bj);
        s.target_regularity = beta;
        return s;
    }
    // B(x) g_j = amp_j g(x_j) e_j
    static DiffusionSpec multiplicative(ScalarFunction g, std::vector<double> amplitudes,
                                        double beta = 0.0) {
        DiffusionSpec s;
        s.kind = DiffusionKind::multiplicative_diagonal;
        s.b = std::move(g);
        s.amp = std::move(amplitudes);
        s.target_regularity = beta;
        return s;
    }
    // (B(x) u)(xi) = b(x(xi)) u(xi)
    static DiffusionSpec nemytskii_diffusion(ScalarFunction g, CollocationPtr c,
                                             double beta = 0.0) {
        DiffusionSpec s;
        s.kind = DiffusionKind::nemytskii;
        s.b = std::move(g);
        s.colloc = std::move(c);
        s.target_regularity = beta;
        return s;
    }

    bool is_additive() const { return kind == DiffusionKind::additive_diagonal; }
    bool is_diagonal() const { return kind != DiffusionKind::nemytskii; }

    double amp_at(std::size_t j) const {
        if (amp.empty()) return 1.0;
        return j < amp.size() ? amp[j] : 0.0;
    }
};

// B(x) applied to the j-th noise basis vector (U-basis image; the U_0 image
// carries an extra sqrt(q_j))
inline ModalState eval_diffusion_mode(const DiffusionSpec& B, double /*t*/, const ModalState& x,
                                      std::size_t j) {
    std::size_t n = x.size();
    ModalState r(n, B.target_regularity);
    switch (B.kind) {
        case DiffusionKind::additive_diagonal:
            if (j < n) r[j] = B.amp_at(j);
            return r;
        case DiffusionKind::multiplicative_diagonal:
            if (j < n) r[j] = B.amp_at(j) * B.b.d(0, x[j]);
            return r;
        case DiffusionKind::nemytskii: {
            const auto& c = *B.colloc;
            std::size_t P = c.point_count();
            auto& grid = detail::scratch(P, 0);
            auto& prod = detail::scratch(P, 1);
            c.to_grid(std::span<const double>(x.coeff), std::span<double>(grid.data(), P));
            for (std::size_t i = 0; i < P; ++i)
                prod[i] = B.b.d(0, grid[i]) * c.basis_at(j, i);
            c.to_modal(std::span<const double>(prod.data(), P), std::span<double>(r.coeff));
            return r;
        }
    }
    throw std::logic_error("eval_diffusion_mode: unknown kind");
}

// (B^{(k)}(x)(dirs)) g_j for k = dirs.size() >= 1; additive noise is constant
inline ModalState diffusion_derivative_apply(const DiffusionSpec& B, const ModalState& x,
                                             std::span<const ModalState> dirs, std::size_t j) {
    std::size_t n = x.size();
    ModalState r(n, B.target_regularity);
    if (dirs.empty()) return eval_diffusion_mode(B, 0.0, x, j);
    switch (B.kind) {
        case DiffusionKind::additive_diagonal:
            return r;  // constant B
        case DiffusionKind::multiplicative_diagonal: {
            if (j < n) {
                double v = B.amp_at(j) * B.b.d(static_cast<int>(dirs.size()), x[j]);
                for (const auto& d : dirs) v *= d[j];
                r[j] = v;
            }
            return r;
        }
        case DiffusionKind::nemytskii: {
            const auto& c = *B.colloc;
            std::size_t P = c.point_count();
            auto& grid = detail::scratch(P, 0);
            auto& prod = detail::scratch(P, 1);
            auto& dbuf = detail::scratch(P, 2);
            c.to_grid(std::span<const double>(x.coeff), std::span<double>(grid.data(), P));
            for (std::size_t i = 0; i < P; ++i)
                prod[i] = B.b.d(static_cast<int>(dirs.size()), grid[i]) * c.basis_at(j, i);
            for (const auto& d : dirs) {
                c.to_grid(std::span<const double>(d.coeff), std::span<double>(dbuf.data(), P));
                for (std::size_t i = 0; i < P; ++i) prod[i] *= dbuf[i];
            }
            c.to_modal(std::span<const double>(prod.data(), P), std::span<double>(r.coeff));
            return r;
        }
    }
    throw std::logic_error("diffusion_derivative_apply: unknown kind");
}

inline ModalState diffusion_derivative_apply(const DiffusionSpec& B, const ModalState& x,
                                             const ModalState& h, std::size_t j) {
    return diffusion_derivative_apply(B, x, std::span<const ModalState>(&h, 1), j);
}

// sum_j B(x) e_j dw_j in one pass; dw are the U-basis increments
inline ModalState diffusion_apply_noise(const DiffusionSpec& B, const ModalState& x,
                                        std::span<const double> dw) {
    std::size_t n = x.size();
    ModalState r(n, B.target_regularity);
    switch (B.kind) {
        case DiffusionKind::additive_diagonal: {
            std::size_t m = std::min(n, dw.size());
            for (std::size_t j = 0; j < m; ++j) r[j] = B.amp_at(j) * dw[j];
            return r;
        }
        case DiffusionKind::multiplicative_diagonal: {
            std::size_t m = std::min(n, dw.size());
            for (std::size_t j = 0; j < m; ++j) r[j] = B.amp_at(j) * B.b.d(0, x[j]) * dw[j];
            return r;
        }
        case DiffusionKind::nemytskii: {
            const auto& c = *B.colloc;
            std::size_t P = c.point_count();
            auto& grid = detail::scratch(P, 0);
            auto& wgrid = detail::scratch(P, 1);
            c.to_grid(std::span<const double>(x.coeff), std::span<double>(grid.data(), P));
            c.to_grid(dw, std::span<double>(wgrid.data(), P));
            for (std::size_t i = 0; i < P; ++i) grid[i] = B.b.d(0, grid[i]) * wgrid[i];
            c.to_modal(std::span<const double>(grid.data(), P), std::span<double>(r.coeff));
            return r;
        }
    }
    throw std::logic_error("diffusion_apply_noise: unknown kind");
}

// F(x) and sum_j B(x) e_j w_j in one collocation pass when both coefficients
// are Nemytskii operators on the same grid; falls back to the separate
// evaluations otherwise
inline void eval_drift_and_noise(const DriftSpec& F, const DiffusionSpec& B,
                                 const ModalState& x, std::span<const double> w,
                                 ModalState& drift_out, ModalState& noise_out) {
    if (F.kind == DriftKind::nemytskii && B.kind == DiffusionKind::nemytskii &&
        F.colloc->point_count() == B.colloc->point_count()) {
        const auto& c = *F.colloc;
        std::size_t P = c.point_count();
        auto& gx = detail::scratch(P, 0);
        auto& gw = detail::scratch(P, 1);
        c.to_grid2(std::span<const double>(x.coeff), w, std::span<double>(gx.data(), P),
                   std::span<double>(gw.data(), P));
        for (std::size_t i = 0; i < P; ++i) {
            double u = gx[i];
            gx[i] = F.f.d(0, u);
            gw[i] = B.b.d(0, u) * gw[i];
        }
        drift_out = ModalState(x.size(), F.target_regularity);
        noise_out = ModalState(x.size(), B.target_regularity);
        c.to_modal2(std::span<const double>(gx.data(), P), std::span<const double>(gw.data(), P),
                    std::span<double>(drift_out.coeff), std::span<double>(noise_out.coeff));
        return;
    }
    drift_out = eval_drift(F, 0.0, x);
    noise_out = diffusion_apply_noise(B, x, w);
}

// b_j'(x_j) b_j(x_j), the diagonal Milstein factor; requires commutative
// diagonal noise
inline double milstein_diag_factor(const DiffusionSpec& B, const ModalState& x, std::size_t j) {
    switch (B.kind) {
        case DiffusionKind::additive_diagonal:
            return 0.0;
        case DiffusionKind::multiplicative_diagonal: {
            double a = B.amp_at(j);
            return a * a * B.b.d(1, x[j]) * B.b.d(0, x[j]);
        }
        case DiffusionKind::nemytskii:
            throw std::domain_error(
                "milstein_diag_factor: Nemytskii diffusion is non-commutative; "
                "diagonal Milstein terms are unsupported");
    }
    throw std::logic_error("milstein_diag_factor: unknown kind");
}

// |B(x)|^2_{HS(U_0, H_beta)} = sum_j q_j sum_n (eta+lambda_n)^{2 beta} [B(x)e_j]_n^2
inline double diffusion_hs_norm_sq(const SpectralModel& model, const NoiseSpec& noise,
                                   const DiffusionSpec& B, double beta, const ModalState& x) {
    double s = 0.0;
    std::size_t J = std::min(noise.mode_count(), x.size());
    if (B.is_diagonal()) {
        for (std::size_t j = 0; j < J; ++j) {
            double bj = B.kind == DiffusionKind::additive_diagonal
                            ? B.amp_at(j)
                            : B.amp_at(j) * B.b.d(0, x[j]);
            double w = model.fractional_weight(beta, j);
            s += noise.q[j] * w * w * bj * bj;
        }
        return s;
    }
    for (std::size_t j = 0; j < J; ++j) {
        auto col = eval_diffusion_mode(B, 0.0, x, j);
        double cs = 0.0;
        for (std::size_t n = 0; n < col.size(); ++n) {
            double w = model.fractional_weight(beta, n);
            cs += w * w * col[n] * col[n];
        }
        s += noise.q[j] * cs;
    }
    return s;
}

// -- test functions --------------------------------------------------------------

// Value in the codomain V: either a real number or a modal state.
struct Value {
    bool is_state = false;
    double scalar = 0.0;
    ModalState state;

    static Value real(double x) { return {false, x, {}}; }
    static Value vec(ModalState v) { return {true, 0.0, std::move(v)}; }

    double as_real() const {
        if (is_state) throw std::logic_error("Value: state used as real");
        return scalar;
    }
    double norm() const { return is_state ? h_norm(state) : std::abs(scalar); }

    Value& operator+=(const Value& o) {
        if (is_state != o.is_state) throw std::logic_error("Value: mixed codomains");
        if (is_state) {
            if (state.size() < o.state.size()) state.coeff.resize(o.state.size(), 0.0);
            for (std::size_t i = 0; i < o.state.size(); ++i) state[i] += o.state[i];
        } else {
            scalar += o.scalar;
        }
        return *this;
    }
    Value& operator-=(const Value& o) {
        if (is_state != o.is_state) throw std::logic_error("Value: mixed codomains");
        if (is_state) {
            if (state.size() < o.state.size()) state.coeff.resize(o.state.size(), 0.0);
            for (std::size_t i = 0; i < o.state.size(); ++i) state[i] -= o.state[i];
        } else {
            scalar -= o.scalar;
        }
        return *this;
    }
    Value& operator*=(double a) {
        if (is_state)
            for (auto& c : state.coeff) c *= a;
        else
            scalar *= a;
        return *this;
    }
};

inline Value value_zero_like(const Value& v) {
    if (v.is_state) return Value::vec(ModalState(v.state.size()));
    return Value::real(0.0);
}

enum class GrowthTag { bounded, lipschitz, polynomial };

// phi in C^k(H_r, V) exposed through directional derivatives:
// deriv(x, {h_1..h_k}) = phi^{(k)}(x)(h_1,...,h_k).
struct TestFunction {
    std::string name;
    int max_order = 2;
    bool state_valued = false;  // codomain V = H instead of R
    GrowthTag growth = GrowthTag::polynomial;
    std::function<Value(const ModalState&)> value;
    std::function<Value(const ModalState&, std::span<const ModalState>)> deriv;

    Value operator()(const ModalState& x) const { return value(x); }
    Value grad_apply(const ModalState& x, const ModalState& h) const {
        return deriv(x, std::span<const ModalState>(&h, 1));
    }
    Value hess_apply(const ModalState& x, const ModalState& h, const ModalState& k) const {
        ModalState dirs[2] = {h, k};
        return deriv(x, std::span<const ModalState>(dirs, 2));
    }
};

inline TestFunction tf_identity() {
    TestFunction f;
    f.name = "identity";
    f.max_order = 1 << 20;
    f.state_valued = true;
    f.growth = GrowthTag::lipschitz;
    f.value = [](const ModalState& x) { return Value::vec(x); };
    f.deriv = [](const ModalState& x, std::span<const ModalState> dirs) {
        if (dirs.size() == 1) return Value::vec(dirs[0]);
        return Value::vec(ModalState(x.size()));
    };
    return f;
}

inline TestFunction tf_squared_norm() {
    TestFunction f;
    f.name = "squared_norm";
    f.max_order = 1 << 20;
    f.growth = GrowthTag::polynomial;
    f.value = [](const ModalState& x) { return Value::real(dot(x, x)); };
    f.deriv = [](const ModalState& x, std::span<const ModalState> dirs) {
        if (dirs.size() == 1) return Value::real(2.0 * dot(x, dirs[0]));
        if (dirs.size() == 2) return Value::real(2.0 * dot(dirs[0], dirs[1]));
        return Value::real(0.0);
    };
    return f;
}

inline TestFunction tf_linear(ModalState w) {
    TestFunction f;
    f.name = "linear";
    f.max_order = 1 << 20;
    f.growth = GrowthTag::lipschitz;
    auto wp = std::make_shared<ModalState>(std::move(w));
    f.value = [wp](const ModalState& x) { return Value::real(dot(*wp, x)); };
    f.deriv = [wp](const ModalState&, std::span<const ModalState> dirs) {
        if (dirs.size() == 1) return Value::real(dot(*wp, dirs[0]));
        return Value::real(0.0);
    };
    return f;
}

// phi(v) = exp(-c |v|^2); smooth, bounded, derivatives up to order 4
inline TestFunction tf_exp_neg_sq(double c = 1.0) {
    TestFunction f;
    f.name = "exp_neg_sq";
    f.max_order = 4;
    f.growth = GrowthTag::bounded;
    f.value = [c](const ModalState& x) { return Value::real(std::exp(-c * dot(x, x))); };
    f.deriv = [c](const ModalState& x, std::span<const ModalState> dirs) {
        double e = std::exp(-c * dot(x, x));
        auto a = [&](std::size_t i) { return dot(x, dirs[i]); };
        auto b = [&](std::size_t i, std::size_t j) { return dot(dirs[i], dirs[j]); };
        switch (dirs.size()) {
            case 1:
                return Value::real(-2.0 * c * a(0) * e);
            case 2:
                return Value::real((4.0 * c * c * a(0) * a(1) - 2.0 * c * b(0, 1)) * e);
            case 3: {
                double t = -8.0 * c * c * c * a(0) * a(1) * a(2) +
                           4.0 * c * c * (a(0) * b(1, 2) + a(1) * b(0, 2) + a(2) * b(0, 1));
                return Value::real(t * e);
            }
            case 4: {
                double c2 = c * c, c3 = c2 * c, c4 = c3 * c;
                double t = 16.0 * c4 * a(0) * a(1) * a(2) * a(3) -
                           8.0 * c3 *
                               (b(0, 3) * a(1) * a(2) + a(0) * b(1, 3) * a(2) +
                                a(0) * a(1) * b(2, 3) + a(3) * a(0) * b(1, 2) +
                                a(3) * a(1) * b(0, 2) + a(3) * a(2) * b(0, 1)) +
                           4.0 * c2 * (b(0, 3) * b(1, 2) + b(1, 3) * b(0, 2) + b(2, 3) * b(0, 1));
                return Value::real(t * e);
            }
            default:
                throw std::invalid_argument("tf_exp_neg_sq: derivative order > 4");
        }
    };
    return f;
}

// phi(v) = int_0^1 psi(v(x)) dx via collocation
inline TestFunction tf_nemytskii_integral(ScalarFunction psi, CollocationPtr colloc) {
    TestFunction f;
    f.name = "integral_" + psi.name;
    f.max_order = psi.max_order;
    f.growth = GrowthTag::bounded;
    auto ps = std::make_shared<ScalarFunction>(std::move(psi));
    f.value = [ps, colloc](const ModalState& x) {
        const auto& c = *colloc;
        std::size_t P = c.point_count();
        auto& grid = detail::scratch(P, 0);
        c.to_grid(std::span<const double>(x.coeff), std::span<double>(grid.data(), P));
        double s = 0.0;
        for (std::size_t i = 0; i < P; ++i) s += ps->d(0, grid[i]);
        return Value::real(s * c.quad_weight());
    };
    f.deriv = [ps, colloc](const ModalState& x, std::span<const ModalState> dirs) {
        const auto& c = *colloc;
        std::size_t P = c.point_count();
        auto& grid = detail::scratch(P, 0);
        auto& prod = detail::scratch(P, 1);
        auto& dbuf = detail::scratch(P, 2);
        c.to_grid(std::span<const double>(x.coeff), std::span<double>(grid.data(), P));
        for (std::size_t i = 0; i < P; ++i)
            prod[i] = ps->d(static_cast<int>(dirs.size()), grid[i]);
        for (const auto& d : dirs) {
            c.to_grid(std::span<const double>(d.coeff), std::span<double>(dbuf.data(), P));
            for (std::size_t i = 0; i < P; ++i) prod[i] *= dbuf[i];
        }
        double s = 0.0;
        for (std::size_t i = 0; i < P; ++i) s += prod[i];
        return Value::real(s * c.quad_weight());
    };
    return f;
}

}  // namespace mildspde
