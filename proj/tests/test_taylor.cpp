#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mildspde/taylor.hpp"

#include <cmath>

using namespace mildspde;

namespace {

SpdeProblem ou_problem(std::size_t modes, double T) {
    SpdeProblem p;
    p.model = dirichlet_laplacian(modes);
    p.noise = NoiseSpec::cylindrical(modes);
    std::vector<double> b(modes);
    for (std::size_t j = 0; j < modes; ++j) b[j] = std::pow(p.model.lambda(j), -0.3);
    p.drift = DriftSpec::zero_drift();
    p.diffusion = DiffusionSpec::additive(b);
    p.xi = ModalState(modes);
    for (std::size_t j = 0; j < modes; ++j) p.xi[j] = 0.4 / static_cast<double>(j + 1);
    p.horizon = T;
    return p;
}

// E exp(-|X|^2) for X with independent Gaussian modes N(m_j, s_j^2)
double gaussian_exp_neg_sq(const std::vector<double>& m, const std::vector<double>& s2) {
    double v = 1.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
        double d = 1.0 + 2.0 * s2[j];
        v *= std::exp(-m[j] * m[j] / d) / std::sqrt(d);
    }
    return v;
}

}  // namespace

TEST_CASE("multi-index basics") {
    MultiIndex e;
    CHECK(e.length() == 0);
    MultiIndex a({0, 1, 1});
    CHECK(a.length() == 3);
    CHECK(a.ones() == 2);
    CHECK(a.tail() == MultiIndex({1, 1}));
    CHECK(a.derivative_demand() == 4);
    CHECK(MultiIndex({1}).prepend(0) == MultiIndex({0, 1}));
    CHECK_THROWS_AS(MultiIndex({2}), std::invalid_argument);
    CHECK_THROWS_AS(e.tail(), std::logic_error);
}

TEST_CASE("hierarchical set validation") {
    CHECK_NOTHROW(HierarchicalSet({MultiIndex{}, MultiIndex({1})}));
    CHECK_NOTHROW(HierarchicalSet({MultiIndex{}, MultiIndex({0}), MultiIndex({1}),
                                   MultiIndex({1, 1})}));
    // (0,1) requires its tail (1)
    CHECK_THROWS_AS(HierarchicalSet({MultiIndex{}, MultiIndex({0, 1})}), std::invalid_argument);
    // must contain the empty word
    CHECK_THROWS_AS(HierarchicalSet({MultiIndex({0})}), std::invalid_argument);
}

TEST_CASE("remainder sets of the worked examples") {
    HierarchicalSet just_empty({MultiIndex{}});
    auto b0 = remainder_set(just_empty);
    CHECK(b0 == std::set<MultiIndex>({MultiIndex({0}), MultiIndex({1})}));

    HierarchicalSet a1({MultiIndex{}, MultiIndex({1})});
    auto b1 = remainder_set(a1);
    CHECK(b1 == std::set<MultiIndex>({MultiIndex({0}), MultiIndex({0, 1}), MultiIndex({1, 1})}));

    HierarchicalSet a2({MultiIndex{}, MultiIndex({0})});
    auto b2 = remainder_set(a2);
    CHECK(b2 == std::set<MultiIndex>({MultiIndex({1}), MultiIndex({0, 0}), MultiIndex({1, 0})}));
}

TEST_CASE("remainder set agrees with exhaustive enumeration") {
    std::vector<HierarchicalSet> sets = {
        HierarchicalSet({MultiIndex{}}),
        HierarchicalSet({MultiIndex{}, MultiIndex({1})}),
        HierarchicalSet({MultiIndex{}, MultiIndex({0})}),
        HierarchicalSet({MultiIndex{}, MultiIndex({0}), MultiIndex({1}), MultiIndex({1, 1})}),
    };
    // enumerate all indices of length <= 3
    std::vector<MultiIndex> all;
    all.push_back(MultiIndex{});
    for (int n = 1; n <= 3; ++n)
        for (int code = 0; code < (1 << n); ++code) {
            std::vector<int> e(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) e[static_cast<std::size_t>(i)] = (code >> i) & 1;
            all.push_back(MultiIndex(e));
        }
    for (const auto& A : sets) {
        std::set<MultiIndex> brute;
        for (const auto& a : all)
            if (!a.empty() && !A.contains(a) && A.contains(a.tail())) brute.insert(a);
        CHECK(remainder_set(A) == brute);
    }
}

TEST_CASE("removing a boundary index breaks hierarchical closure one level up") {
    // every member of B(A) extends A to a hierarchical set; extending by a
    // longer index skipping the boundary is rejected
    HierarchicalSet A({MultiIndex{}, MultiIndex({1})});
    for (const auto& b : remainder_set(A)) {
        auto ext = A.members;
        ext.insert(b);
        CHECK_NOTHROW(HierarchicalSet{ext});
    }
    auto bad = A.members;
    bad.insert(MultiIndex({0, 0, 1}));  // needs (0,1) which is absent
    CHECK_THROWS_AS(HierarchicalSet{bad}, std::invalid_argument);
}

TEST_CASE("strong expansion with A = {empty} is the semigroup image") {
    auto p = ou_problem(4, 0.5);
    long fine = 128;
    PathStream stream{10, 0, 0.5 / fine, 0.5};
    PathNoise noise(p.noise, stream, &p.model);
    auto path = solve_reference(p, noise);
    auto phi = tf_squared_norm();
    HierarchicalSet A({MultiIndex{}});
    auto res = taylor_strong_terms(p, A, phi, path, noise, 0.0, 0.5);
    CHECK(res.terms.empty());
    CHECK(res.approximation ==
          doctest::Approx(phi(apply_semigroup(p.model, 0.5, p.xi)).as_real()).epsilon(1e-13));
    CHECK(res.remainder == doctest::Approx(res.lhs - res.approximation));
}

TEST_CASE("noise-free problems kill every index containing a 1") {
    SpdeProblem p = ou_problem(3, 0.5);
    p.noise = NoiseSpec(std::vector<double>(3, 0.0));
    p.diffusion = DiffusionSpec::additive(std::vector<double>(3, 0.0));
    p.drift = DriftSpec::linear_diag({-1.0, -1.0, -1.0});
    long fine = 64;
    PathStream stream{11, 0, 0.5 / fine, 0.5};
    PathNoise noise(p.noise, stream, &p.model);
    auto path = solve_reference(p, noise);
    auto phi = tf_squared_norm();
    HierarchicalSet A({MultiIndex{}, MultiIndex({0}), MultiIndex({1})});
    auto res = taylor_strong_terms(p, A, phi, path, noise, 0.0, 0.5, 4);
    for (const auto& [a, v] : res.terms) {
        if (a == MultiIndex({1})) CHECK(v == 0.0);
        if (a == MultiIndex({0})) CHECK(std::abs(v) > 1e-6);  // deterministic chain survives
    }
}

TEST_CASE("telescoping: nested hierarchical sets differ by their extra terms") {
    SpdeProblem p = ou_problem(4, 0.5);
    p.drift = DriftSpec::linear_diag(std::vector<double>(4, -0.7));
    p.diffusion = DiffusionSpec::multiplicative(scalar_bounded_rational(0.5),
                                                std::vector<double>(4, 1.0));
    long fine = 64;
    PathStream stream{12, 3, 0.5 / fine, 0.5};
    PathNoise noise(p.noise, stream, &p.model);
    auto path = solve_reference(p, noise);
    auto phi = tf_exp_neg_sq(0.8);
    HierarchicalSet small({MultiIndex{}, MultiIndex({1})});
    HierarchicalSet big({MultiIndex{}, MultiIndex({1}), MultiIndex({0})});
    auto rs = taylor_strong_terms(p, small, phi, path, noise, 0.25, 0.5, 2);
    auto rb = taylor_strong_terms(p, big, phi, path, noise, 0.25, 0.5, 2);
    double extra = 0.0;
    for (const auto& [a, v] : rb.terms)
        if (!small.contains(a)) extra += v;
    CHECK(rb.approximation ==
          doctest::Approx(rs.approximation + extra).epsilon(1e-12));
    // shared terms agree exactly
    for (const auto& [a, v] : rb.terms)
        for (const auto& [a2, v2] : rs.terms)
            if (a == a2) CHECK(v == doctest::Approx(v2).epsilon(1e-12));
}

TEST_CASE("exact convolution route matches the generic quadrature route") {
    auto p = ou_problem(4, 0.25);
    long fine = 512;
    PathStream stream{13, 1, 0.25 / fine, 0.25};
    PathNoise noise(p.noise, stream, &p.model);
    auto path = solve_reference(p, noise);
    auto phi = tf_exp_neg_sq(0.7);
    HierarchicalSet A({MultiIndex{}, MultiIndex({1})});
    auto exact = taylor_strong_terms(p, A, phi, path, noise, 0.0, 0.25, 1);

    // force the generic route through an exponential-Euler path without the
    // convolution channel
    PathNoise plain(p.noise, stream);
    auto path2 = record_fine_path(SchemeKind::exponential_euler, p, plain, fine);
    auto generic = taylor_strong_terms(p, A, phi, path2, plain, 0.0, 0.25, 1);
    CHECK(exact.terms[0].second ==
          doctest::Approx(generic.terms[0].second).epsilon(0.05));
}

TEST_CASE("strong order of A = {empty,(1)} on the linear problem with drift") {
    SpdeProblem p = ou_problem(6, 0.5);
    p.drift = DriftSpec::linear_diag(std::vector<double>(6, -1.0));
    long fine = 512;
    auto phi = tf_exp_neg_sq(1.0);
    HierarchicalSet A1({MultiIndex{}, MultiIndex({1})});
    HierarchicalSet A0({MultiIndex{}});
    const long npaths = 300;
    std::vector<double> deltas = {1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0};
    std::vector<double> ms1(deltas.size(), 0.0), ms0(deltas.size(), 0.0);
    for (long c = 0; c < npaths; ++c) {
        PathStream stream{314, static_cast<std::uint64_t>(c), 0.5 / fine, 0.5};
        PathNoise noise(p.noise, stream, &p.model);
        auto path = solve_reference(p, noise);
        for (std::size_t di = 0; di < deltas.size(); ++di) {
            double t0 = 0.25, t = 0.25 + deltas[di];
            auto r1 = taylor_strong_terms(p, A1, phi, path, noise, t0, t, 1);
            auto r0 = taylor_strong_terms(p, A0, phi, path, noise, t0, t, 1);
            ms1[di] += r1.remainder * r1.remainder;
            ms0[di] += r0.remainder * r0.remainder;
        }
    }
    // rms remainder of the richer set is smaller at every step size
    for (std::size_t di = 0; di < deltas.size(); ++di) CHECK(ms1[di] < ms0[di]);
    // strong order ~ 1: rms ~ delta
    double slope = 0.5 * std::log2(ms1.front() / ms1.back()) / 2.0;
    CHECK(slope > 0.7);
    CHECK(slope < 1.4);
}

TEST_CASE("weak expansion n=1: truncation error matches the OU closed form") {
    // modest eigenvalues keep lambda*t small so the order-in-t regime is
    // visible before the variance saturates
    SpdeProblem p;
    p.model = SpectralModel({0.5, 1.0, 1.5, 2.0, 2.5});
    p.noise = NoiseSpec::cylindrical(5);
    p.drift = DriftSpec::zero_drift();
    p.diffusion = DiffusionSpec::additive({1.0, 0.8, 0.6, 0.5, 0.4});
    p.xi = ModalState({0.4, 0.2, 0.1, 0.05, 0.02});
    p.horizon = 0.5;
    auto phi = tf_squared_norm();
    std::vector<double> ts = {0.04, 0.02, 0.01, 0.005};
    std::vector<double> errs;
    for (double t : ts) {
        auto w = taylor_weak_expansion(p, 1, p.xi, phi, t, 64, 5);
        double analytic_lhs = 0.0;
        double closed_form_err = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            double lam = p.model.lambda(j), b = p.diffusion.amp_at(j), q = p.noise.q[j];
            double var = q * b * b * (1.0 - std::exp(-2.0 * lam * t)) / (2.0 * lam);
            double mean = std::exp(-lam * t) * p.xi[j];
            analytic_lhs += mean * mean + var;
            closed_form_err += var;
        }
        double err = analytic_lhs - w.approximation();
        CHECK(err == doctest::Approx(closed_form_err).epsilon(1e-10));
        errs.push_back(std::abs(err));
    }
    double slope = std::log2(errs.front() / errs.back()) / 3.0;
    CHECK(slope > 0.9);
}

TEST_CASE("weak expansion n=2 is exact for the squared norm on the OU problem") {
    auto p = ou_problem(4, 0.5);
    auto phi = tf_squared_norm();
    double t = 0.3;
    auto w = taylor_weak_expansion(p, 2, p.xi, phi, t, 512, 4);
    double analytic = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        double lam = p.model.lambda(j), b = p.diffusion.amp_at(j), q = p.noise.q[j];
        analytic += std::exp(-2.0 * lam * t) * p.xi[j] * p.xi[j] +
                    q * b * b * (1.0 - std::exp(-2.0 * lam * t)) / (2.0 * lam);
    }
    // only the left-point quadrature error of the k=1 term remains
    CHECK(w.approximation() == doctest::Approx(analytic).epsilon(2e-3));
}

TEST_CASE("weak expansion order in t for n = 1, 2") {
    SpdeProblem p;
    p.model = SpectralModel({0.5, 1.0, 1.5, 2.0});
    p.noise = NoiseSpec::cylindrical(4);
    p.drift = DriftSpec::zero_drift();
    p.diffusion = DiffusionSpec::additive({1.0, 0.7, 0.5, 0.3});
    p.xi = ModalState({0.5, 0.3, -0.2, 0.1});
    p.horizon = 0.5;
    auto phi = tf_exp_neg_sq(1.0);
    std::vector<double> ts = {0.08, 0.04, 0.02};
    for (int n : {1, 2}) {
        std::vector<double> errs;
        for (double t : ts) {
            auto w = taylor_weak_expansion(p, n, p.xi, phi, t, 256, 4);
            std::vector<double> mean(4), var(4);
            for (std::size_t j = 0; j < 4; ++j) {
                double lam = p.model.lambda(j), b = p.diffusion.amp_at(j), q = p.noise.q[j];
                mean[j] = std::exp(-lam * t) * p.xi[j];
                var[j] = q * b * b * (1.0 - std::exp(-2.0 * lam * t)) / (2.0 * lam);
            }
            errs.push_back(std::abs(gaussian_exp_neg_sq(mean, var) - w.approximation()));
        }
        double slope = std::log2(errs.front() / errs.back()) / 2.0;
        CHECK(slope > static_cast<double>(n) - 0.3);
    }
}

TEST_CASE("weak correction terms vanish for linear phi with zero drift") {
    auto p = ou_problem(3, 0.5);
    ModalState w({1.0, -2.0, 0.5});
    auto phi = tf_linear(w);
    auto res = taylor_weak_expansion(p, 2, p.xi, phi, 0.25, 64, 3);
    REQUIRE(res.order_terms.size() == 1);
    CHECK(res.order_terms[0] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("differentiability bookkeeping rejects under-smooth inputs") {
    auto p = ou_problem(3, 0.5);
    long fine = 32;
    PathStream stream{14, 0, 0.5 / fine, 0.5};
    PathNoise noise(p.noise, stream, &p.model);
    auto path = solve_reference(p, noise);

    auto phi = tf_exp_neg_sq(1.0);
    phi.max_order = 1;  // too few derivatives for an L^(0) chain
    HierarchicalSet A({MultiIndex{}, MultiIndex({0})});
    CHECK_THROWS_AS(taylor_strong_terms(p, A, phi, path, noise, 0.0, 0.5, 4),
                    std::invalid_argument);

    // drift with only two derivatives cannot feed a (0,0,0) chain, whose
    // innermost operator is differentiated four times by the outer ones
    SpdeProblem pn = p;
    pn.drift = DriftSpec::nemytskii_drift(scalar_bounded_rational(0.5), make_collocation(3));
    auto phi_sq = tf_squared_norm();
    PathNoise noise_n(pn.noise, stream, &pn.model);
    auto path_n = solve_reference(pn, noise_n);
    HierarchicalSet chain3({MultiIndex{}, MultiIndex({0}), MultiIndex({0, 0}),
                            MultiIndex({0, 0, 0})});
    CHECK_THROWS_AS(taylor_strong_terms(pn, chain3, phi_sq, path_n, noise_n, 0.0, 0.5, 4),
                    std::invalid_argument);
    // the weak n=3 expansion only needs (0) and (0,0), which just fit
    CHECK_NOTHROW(taylor_weak_expansion(pn, 3, pn.xi, phi_sq, 0.25, 8, 3));

    // state-valued test functions are outside the scalar expansion machinery
    CHECK_THROWS_AS(taylor_strong_terms(p, A, tf_identity(), path, noise, 0.0, 0.5, 4),
                    std::invalid_argument);

    // indices longer than 3 are rejected
    HierarchicalSet deep({MultiIndex{}, MultiIndex({1}), MultiIndex({1, 1}),
                          MultiIndex({1, 1, 1}), MultiIndex({1, 1, 1, 1})});
    CHECK_THROWS_AS(taylor_strong_terms(p, deep, phi_sq, path, noise, 0.0, 0.5, 4),
                    std::invalid_argument);
}

TEST_CASE("two-symbol chains against a Monte Carlo oracle") {
    // alpha = (1,1) on a 2-mode multiplicative problem: the chain value times
    // the iterated increments should reproduce phi(X_t) - (lower terms) to
    // first order; here we only check the chain evaluator against a direct
    // finite-difference composition of the operators
    SpdeProblem p;
    p.model = SpectralModel({1.0, 3.0});
    p.noise = NoiseSpec::cylindrical(2);
    p.drift = DriftSpec::zero_drift();
    p.diffusion = DiffusionSpec::multiplicative(scalar_identity(), {1.0, 0.5});
    p.xi = ModalState({0.6, -0.4});
    p.horizon = 1.0;
    auto phi = tf_exp_neg_sq(0.9);

    taylor_detail::ChainEvaluator chain;
    chain.p = &p;
    chain.phi = &phi;
    chain.J = 2;
    chain.sym = {1, 1};
    chain.lag = {0.2, 0.3};
    chain.mode = {0, 1};
    ModalState x({0.5, 0.2});
    double got = chain.value(x);

    // direct: psi(y) = phi'(e^{A u2} y)(e^{A u2} B(y) e_{j2});
    // value = psi'(e^{A u1} x)(e^{A u1} B(x) e_{j1}) via finite differences
    auto psi = [&](const ModalState& y) {
        auto z = apply_semigroup(p.model, 0.3, y);
        auto col = apply_semigroup(p.model, 0.3, eval_diffusion_mode(p.diffusion, 0.0, y, 1));
        return phi.grad_apply(z, col).as_real();
    };
    ModalState yy = apply_semigroup(p.model, 0.2, x);
    ModalState dir = apply_semigroup(p.model, 0.2, eval_diffusion_mode(p.diffusion, 0.0, x, 0));
    double eps = 1e-6;
    ModalState yp = yy, ym = yy;
    axpy(eps, dir, yp);
    axpy(-eps, dir, ym);
    double fd = (psi(yp) - psi(ym)) / (2.0 * eps);
    CHECK(got == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("zero-one chain (0,1) against operator composition") {
    SpdeProblem p;
    p.model = SpectralModel({1.5, 2.5});
    p.noise = NoiseSpec::cylindrical(2);
    p.drift = DriftSpec::linear_diag({-0.8, -0.6});
    p.diffusion = DiffusionSpec::multiplicative(scalar_cos(0.7), {1.0, 1.0});
    p.xi = ModalState({0.2, 0.1});
    p.horizon = 1.0;
    auto phi = tf_exp_neg_sq(0.8);

    taylor_detail::ChainEvaluator chain;
    chain.p = &p;
    chain.phi = &phi;
    chain.J = 2;
    chain.sym = {0, 1};
    chain.lag = {0.15, 0.25};
    chain.mode = {0, 1};  // mode entry for position 1
    ModalState x({0.4, -0.3});
    double got = chain.value(x);

    // psi(y) = (L^{(1)}_{0.25} phi)(y) e_1; value = (L^{(0)}_{0.15} psi)(x)
    auto psi = [&](const ModalState& y) {
        auto z = apply_semigroup(p.model, 0.25, y);
        auto col = apply_semigroup(p.model, 0.25, eval_diffusion_mode(p.diffusion, 0.0, y, 1));
        return phi.grad_apply(z, col).as_real();
    };
    // finite-difference L^(0): psi'(e^{Au}x)(e^{Au}F) + 1/2 sum_j q psi''(...)
    double u = 0.15;
    ModalState y = apply_semigroup(p.model, u, x);
    auto fdir = apply_semigroup(p.model, u, eval_drift(p.drift, 0.0, x));
    double eps = 5e-5;
    auto dpsi = [&](const ModalState& at, const ModalState& dir) {
        ModalState a = at, b = at;
        axpy(eps, dir, a);
        axpy(-eps, dir, b);
        return (psi(a) - psi(b)) / (2.0 * eps);
    };
    double expect = dpsi(y, fdir);
    for (std::size_t j = 0; j < 2; ++j) {
        auto col = apply_semigroup(p.model, u, eval_diffusion_mode(p.diffusion, 0.0, x, j));
        // second difference for psi''(col, col)
        ModalState a = y, b = y;
        axpy(eps, col, a);
        axpy(-eps, col, b);
        double second = (psi(a) - 2.0 * psi(y) + psi(b)) / (eps * eps);
        expect += 0.5 * p.noise.q[j] * second;
    }
    CHECK(got == doctest::Approx(expect).epsilon(1e-4));
}
