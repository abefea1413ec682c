#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mildspde/mild_ito.hpp"

#include <cmath>
#include <random>

using namespace mildspde;

namespace {

ModalState random_state(std::size_t n, unsigned seed, double scale = 1.0) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd(0.0, scale);
    ModalState v(n);
    for (auto& c : v.coeff) c = nd(rng);
    return v;
}

SpdeProblem linear_additive(std::size_t modes, double T) {
    SpdeProblem p;
    p.model = dirichlet_laplacian(modes);
    p.noise = NoiseSpec::cylindrical(modes);
    std::vector<double> b(modes);
    for (std::size_t j = 0; j < modes; ++j) b[j] = std::pow(p.model.lambda(j), -0.3);
    p.drift = DriftSpec::zero_drift();
    p.diffusion = DiffusionSpec::additive(b);
    p.xi = ModalState(modes);
    p.horizon = T;
    return p;
}

SpdeProblem multiplicative(std::size_t modes, double T) {
    SpdeProblem p;
    p.model = dirichlet_laplacian(modes);
    p.noise = NoiseSpec::cylindrical(modes);
    p.drift = DriftSpec::linear_diag(std::vector<double>(modes, -0.4));
    p.diffusion = DiffusionSpec::multiplicative(scalar_bounded_rational(0.7),
                                                std::vector<double>(modes, 1.0));
    p.xi = ModalState(modes);
    for (std::size_t j = 0; j < modes; ++j) p.xi[j] = 0.5 / static_cast<double>(j + 1);
    p.horizon = T;
    return p;
}

double ou_second_moment(const SpdeProblem& p, double t) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.dim(); ++j) {
        double lam = p.model.lambda(j), b = p.diffusion.amp_at(j), q = p.noise.q[j];
        s += std::exp(-2.0 * lam * t) * p.xi[j] * p.xi[j] +
             q * b * b * (1.0 - std::exp(-2.0 * lam * t)) / (2.0 * lam);
    }
    return s;
}

}  // namespace

TEST_CASE("apply_K basics") {
    auto model = dirichlet_laplacian(6);
    auto phi = tf_squared_norm();
    auto x = random_state(6, 1);

    auto k0 = apply_K(0.0, phi, model);
    CHECK(k0(x).as_real() == doctest::Approx(phi(x).as_real()).epsilon(1e-14));

    double t = 0.07;
    auto kt = apply_K(t, phi, model);
    double expect = 0.0;
    for (std::size_t n = 0; n < 6; ++n)
        expect += std::exp(-2.0 * model.lambda(n) * t) * x[n] * x[n];
    CHECK(kt(x).as_real() == doctest::Approx(expect).epsilon(1e-13));

    // semigroup law K_{t1} K_{t2} = K_{t1+t2} pointwise
    auto k1 = apply_K(0.02, apply_K(0.05, phi, model), model);
    auto k2 = apply_K(0.07, phi, model);
    for (unsigned s = 2; s < 6; ++s) {
        auto y = random_state(6, s);
        CHECK(std::abs(k1(y).as_real() - k2(y).as_real()) <
              1e-12 * std::max(1.0, std::abs(k2(y).as_real())));
    }
}

TEST_CASE("apply_L0 special cases") {
    auto p = linear_additive(5, 1.0);
    auto x = random_state(5, 3);

    // linear phi: vanishing second derivative, so only phi' F survives (= 0 here)
    auto w = random_state(5, 4);
    auto lin = tf_linear(w);
    CHECK(apply_L0(lin, p, x, 5).as_real() == doctest::Approx(0.0));

    // squared norm with additive diagonal noise: trace = sum_j q_j b_j^2
    auto sq = tf_squared_norm();
    double trace = 0.0;
    for (std::size_t j = 0; j < 5; ++j)
        trace += p.noise.q[j] * p.diffusion.amp_at(j) * p.diffusion.amp_at(j);
    CHECK(apply_L0(sq, p, x, 5).as_real() == doctest::Approx(trace).epsilon(1e-13));

    // F = 0, B = 0 -> 0
    auto p0 = p;
    p0.diffusion = DiffusionSpec::additive(std::vector<double>(5, 0.0));
    CHECK(apply_L0(sq, p0, x, 5).as_real() == doctest::Approx(0.0));
}

TEST_CASE("apply_L0_t: reduction, identity test function, operator identity") {
    auto p = multiplicative(5, 1.0);
    auto x = random_state(5, 5, 0.4);
    auto sq = tf_squared_norm();

    CHECK(apply_L0_t(0.0, sq, p, x, 5).as_real() ==
          doctest::Approx(apply_L0(sq, p, x, 5).as_real()).epsilon(1e-14));

    // identity: hess vanishes, so L_t^(0)(id)(x) = e^{At} F(x)
    auto idf = tf_identity();
    double t = 0.13;
    auto v = apply_L0_t(t, idf, p, x, 5);
    auto expect = apply_semigroup(p.model, t, eval_drift(p.drift, 0.0, x));
    REQUIRE(v.is_state);
    for (std::size_t n = 0; n < 5; ++n)
        CHECK(v.state[n] == doctest::Approx(expect[n]).epsilon(1e-12));

    // L^(0)(K_t phi) = L_t^(0) phi on random inputs
    for (unsigned s = 6; s < 10; ++s) {
        auto y = random_state(5, s, 0.5);
        for (auto phi : {tf_squared_norm(), tf_exp_neg_sq(0.8)}) {
            double a = apply_L0(apply_K(t, phi, p.model), p, y, 5).as_real();
            double b = apply_L0_t(t, phi, p, y, 5).as_real();
            CHECK(std::abs(a - b) < 1e-10 * std::max(1.0, std::abs(b)));
        }
    }
}

TEST_CASE("identity residual vanishes on every scheme path") {
    // exact reduction to the mild formulation, any quadrature resolution
    std::size_t modes = 5;
    long fine = 128;
    auto idf = tf_identity();
    for (auto kind :
         {SchemeKind::exponential_euler, SchemeKind::accelerated_exponential_euler,
          SchemeKind::implicit_euler, SchemeKind::crank_nicolson,
          SchemeKind::exponential_milstein, SchemeKind::implicit_euler_milstein,
          SchemeKind::crank_nicolson_milstein, SchemeKind::reference}) {
        CAPTURE(scheme_name(kind));
        auto p = scheme_uses_convolution(kind) ? linear_additive(modes, 1.0)
                                               : multiplicative(modes, 1.0);
        PathStream stream{404, 11, 1.0 / static_cast<double>(fine), 1.0};
        PathNoise noise(p.noise, stream, &p.model);
        long steps = kind == SchemeKind::reference ? fine : 16;
        auto path = record_fine_path(kind, p, noise, steps);
        for (long M : {4L, 16L, 64L}) {
            auto bd = evaluate_mild_ito(p, path, noise, idf, 0.25, 0.75, M, modes);
            double scale = std::max(1.0, bd.lhs.norm());
            CHECK(bd.residual.norm() / scale < 1e-10);
        }
    }
}

TEST_CASE("squared norm on the linear additive problem: moments of the terms") {
    auto p = linear_additive(6, 0.5);
    long fine = 256;
    auto sq = tf_squared_norm();
    const long npaths = 2000;
    const std::vector<long> Ms = {16, 64, 256};
    double lhs_sum = 0.0, lhs_sq = 0.0, sto_sum = 0.0, sto_sq = 0.0;
    std::vector<double> res_ms(Ms.size(), 0.0);
    for (long c = 0; c < npaths; ++c) {
        PathStream stream{606, static_cast<std::uint64_t>(c), 0.5 / fine, 0.5};
        PathNoise noise(p.noise, stream, &p.model);
        auto path = record_fine_path(SchemeKind::accelerated_exponential_euler, p, noise, fine);
        for (std::size_t mi = 0; mi < Ms.size(); ++mi) {
            auto bd = evaluate_mild_ito(p, path, noise, sq, 0.0, 0.5, Ms[mi], 6);
            double r = bd.residual.as_real();
            res_ms[mi] += r * r;
            if (mi + 1 == Ms.size()) {
                double l = bd.lhs.as_real(), s = bd.stochastic_term.as_real();
                lhs_sum += l;
                lhs_sq += l * l;
                sto_sum += s;
                sto_sq += s * s;
            }
        }
    }
    double lm = lhs_sum / npaths;
    double lse = std::sqrt((lhs_sq / npaths - lm * lm) / npaths);
    CHECK(std::abs(lm - ou_second_moment(p, 0.5)) < 3.0 * lse);
    double sm = sto_sum / npaths;
    double sse = std::sqrt((sto_sq / npaths - sm * sm) / npaths);
    CHECK(std::abs(sm) < 3.0 * sse);
    // mean-square residual contracts in the quadrature resolution
    double slope = std::log2(res_ms.front() / res_ms.back()) /
                   std::log2(static_cast<double>(Ms.back() / Ms.front()));
    CHECK(slope > 0.4);
}

TEST_CASE("deterministic mild chain rule: residual contracts at first order") {
    // B = 0, Nemytskii drift: only the left-point error of the drift term
    // remains, so the residual decays like 1/M
    std::size_t modes = 6;
    SpdeProblem p;
    p.model = dirichlet_laplacian(modes);
    p.noise = NoiseSpec(std::vector<double>(modes, 0.0));
    p.drift = DriftSpec::nemytskii_drift(scalar_sin(0.8), make_collocation(modes));
    p.diffusion = DiffusionSpec::additive(std::vector<double>(modes, 0.0));
    p.xi = random_state(modes, 12, 0.5);
    p.horizon = 1.0;
    long fine = 512;
    PathStream stream{1, 0, 1.0 / fine, 1.0};
    PathNoise noise(p.noise, stream);
    auto path = record_fine_path(SchemeKind::exponential_euler, p, noise, fine);
    auto phi = tf_exp_neg_sq(0.9);
    std::vector<double> res;
    for (long M : {8L, 16L, 32L, 64L, 128L}) {
        auto bd = evaluate_mild_ito(p, path, noise, phi, 0.0, 1.0, M, modes);
        res.push_back(std::abs(bd.residual.as_real()));
    }
    double slope = std::log2(res.front() / res.back()) / 4.0;
    CHECK(slope > 0.8);
    CHECK(slope < 1.3);
}

TEST_CASE("alternative formulas: identity reduction and deterministic telescoping") {
    auto p = multiplicative(4, 1.0);
    long fine = 128;
    PathStream stream{77, 5, 1.0 / fine, 1.0};
    PathNoise noise(p.noise, stream, &p.model);
    auto path = record_fine_path(SchemeKind::exponential_euler, p, noise, 16);
    auto idf = tf_identity();
    for (auto variant :
         {FormulaVariant::corollary_anotherito1, FormulaVariant::proposition_secondito}) {
        auto bd = evaluate_alternative_formula(p, path, noise, idf, 0.25, 0.75, 32, 4, variant);
        CHECK(bd.residual.norm() < 1e-10 * std::max(1.0, bd.lhs.norm()));
    }

    // B = F = 0: the generator integral telescopes to phi(e^{A dt} x0) - phi(x0)
    SpdeProblem p0 = p;
    p0.noise = NoiseSpec(std::vector<double>(4, 0.0));
    p0.drift = DriftSpec::zero_drift();
    p0.diffusion = DiffusionSpec::additive(std::vector<double>(4, 0.0));
    p0.xi = random_state(4, 30, 0.8);
    PathNoise noise0(p0.noise, stream);
    auto path0 = record_fine_path(SchemeKind::exponential_euler, p0, noise0, 16);
    auto phi = tf_exp_neg_sq(0.6);
    // the drift-free deterministic path satisfies X_{t0} = e^{A t0} xi
    ModalState x_t0 = apply_semigroup(p0.model, 0.25, p0.xi);
    double target = phi(apply_semigroup(p0.model, 0.5, x_t0)).as_real() -
                    phi(x_t0).as_real();
    std::vector<double> err;
    for (long M : {8L, 16L, 32L, 64L}) {
        auto bd = evaluate_alternative_formula(p0, path0, noise0, phi, 0.25, 0.75, M, 4,
                                               FormulaVariant::corollary_anotherito1);
        err.push_back(std::abs(bd.generator_term.as_real() - target));
        CHECK(std::abs(bd.residual.as_real()) ==
              doctest::Approx(err.back()).epsilon(1e-9));  // only source of residual
    }
    double slope = std::log2(err.front() / err.back()) / 3.0;
    CHECK(slope > 0.8);
}

TEST_CASE("alternative formulas agree with the base formula in expectation") {
    auto p = linear_additive(4, 0.5);
    long fine = 128;
    auto phi = tf_exp_neg_sq(1.0);
    const long npaths = 1500;
    // expectations of the reconstructed phi(X_t) must agree within the Monte
    // Carlo error bars; the left-point biases contract with the quadrature
    double base_sum = 0.0, base_sq = 0.0;
    std::vector<double> d1_sum = {0.0, 0.0}, d2_sum = {0.0, 0.0};
    const long Mcoarse = 16, Mfine = 64;
    for (long c = 0; c < npaths; ++c) {
        PathStream stream{1999, static_cast<std::uint64_t>(c), 0.5 / fine, 0.5};
        PathNoise noise(p.noise, stream, &p.model);
        auto path = record_fine_path(SchemeKind::exponential_euler, p, noise, fine / 2);
        auto base = evaluate_mild_ito(p, path, noise, phi, 0.125, 0.375, Mfine, 4);
        double b = base.term_sum().as_real();
        base_sum += b;
        base_sq += b * b;
        int mi = 0;
        for (long M : {Mcoarse, Mfine}) {
            auto va = evaluate_alternative_formula(p, path, noise, phi, 0.125, 0.375, M, 4,
                                                   FormulaVariant::corollary_anotherito1);
            auto vb = evaluate_alternative_formula(p, path, noise, phi, 0.125, 0.375, M, 4,
                                                   FormulaVariant::proposition_secondito);
            d1_sum[mi] += va.term_sum().as_real() - b;
            d2_sum[mi] += vb.term_sum().as_real() - b;
            ++mi;
        }
    }
    double bm = base_sum / npaths;
    double bse = std::sqrt((base_sq / npaths - bm * bm) / npaths);
    for (auto& d : {d1_sum, d2_sum}) {
        double coarse = std::abs(d[0] / npaths), fine_d = std::abs(d[1] / npaths);
        CHECK(fine_d < 3.0 * bse);       // agreement at the MC scale
        CHECK(fine_d < coarse + 1e-9);   // quadrature bias contracts
    }
}

TEST_CASE("trace truncation: monotone for squared norm, Cauchy for smooth phi") {
    auto p = linear_additive(8, 1.0);
    long fine = 64;
    PathStream stream{8080, 3, 1.0 / fine, 1.0};
    PathNoise noise(p.noise, stream, &p.model);
    auto path = record_fine_path(SchemeKind::accelerated_exponential_euler, p, noise, fine);
    auto sq = tf_squared_norm();
    double prev = -1.0;
    std::vector<double> traces;
    for (std::size_t J : {1u, 2u, 4u, 6u, 8u}) {
        auto bd = evaluate_mild_ito(p, path, noise, sq, 0.0, 1.0, 16, J);
        double tr = bd.trace_term.as_real();
        CHECK(tr >= prev);  // all summands nonnegative for the squared norm
        traces.push_back(tr);
        prev = tr;
    }
    // Cauchy in J for a general smooth phi: successive gaps shrink
    auto phi = tf_exp_neg_sq(0.5);
    std::vector<double> vals;
    for (std::size_t J : {2u, 4u, 6u, 8u}) {
        auto bd = evaluate_mild_ito(p, path, noise, phi, 0.0, 1.0, 16, J);
        vals.push_back(bd.trace_term.as_real());
    }
    double gap1 = std::abs(vals[1] - vals[0]);
    double gap3 = std::abs(vals[3] - vals[2]);
    CHECK(gap3 < gap1 + 1e-12);
}

TEST_CASE("mild stochastic integration by parts for two drift-free processes") {
    // E<X_t, Y_t> = <e^{At} x0, e^{At} y0> + sum_j q_j b_j c_j (1 - e^{-2 lam t})/(2 lam)
    std::size_t modes = 4;
    auto model = dirichlet_laplacian(modes);
    NoiseSpec qspec = NoiseSpec::cylindrical(modes);
    std::vector<double> b = {1.0, 0.8, 0.6, 0.4}, cvec = {0.5, -0.4, 0.3, 0.2};
    ModalState x0({0.4, -0.2, 0.1, 0.3}), y0({-0.1, 0.5, 0.2, -0.3});
    double t = 0.4;
    long fine = 256;

    SpdeProblem px;
    px.model = model;
    px.noise = qspec;
    px.drift = DriftSpec::zero_drift();
    px.diffusion = DiffusionSpec::additive(b);
    px.xi = x0;
    px.horizon = t;
    SpdeProblem py = px;
    py.diffusion = DiffusionSpec::additive(cvec);
    py.xi = y0;

    double analytic = 0.0;
    for (std::size_t j = 0; j < modes; ++j) {
        double lam = model.lambda(j);
        analytic += std::exp(-2.0 * lam * t) * x0[j] * y0[j] +
                    qspec.q[j] * b[j] * cvec[j] * (1.0 - std::exp(-2.0 * lam * t)) / (2.0 * lam);
    }
    const long npaths = 3000;
    double sum = 0.0, sq = 0.0;
    for (long c = 0; c < npaths; ++c) {
        PathStream stream{2221, static_cast<std::uint64_t>(c), t / fine, t};
        PathNoise noise(qspec, stream, &model);  // same noise drives both
        auto xt = run_scheme_terminal(SchemeKind::accelerated_exponential_euler, px, noise, fine);
        auto yt = run_scheme_terminal(SchemeKind::accelerated_exponential_euler, py, noise, fine);
        double v = dot(xt, yt);
        sum += v;
        sq += v * v;
    }
    double mean = sum / npaths, se = std::sqrt((sq / npaths - mean * mean) / npaths);
    CHECK(std::abs(mean - analytic) < 3.0 * se);
}

TEST_CASE("Ito isometry form: E|X_t|^2 equals the quadrature of the HS norm") {
    auto p = linear_additive(6, 0.5);  // zero initial value, drift-free
    double t = 0.5;
    // analytic right side: int_0^t sum_j q_j b_j^2 e^{-2 lam (t-s)} ds
    double rhs = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
        double lam = p.model.lambda(j), bj = p.diffusion.amp_at(j);
        rhs += p.noise.q[j] * bj * bj * (1.0 - std::exp(-2.0 * lam * t)) / (2.0 * lam);
    }
    // quadrature of E |e^{A(t-s)} B|_HS^2 (deterministic for additive noise)
    long M = 4096;
    double quad = 0.0;
    for (long k = 0; k < M; ++k) {
        double s = (static_cast<double>(k) + 0.5) * t / static_cast<double>(M);
        ModalState dummy(6);
        quad += diffusion_hs_norm_sq(p.model, p.noise, p.diffusion, 0.0, dummy) * 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            double lam = p.model.lambda(j), bj = p.diffusion.amp_at(j);
            quad += p.noise.q[j] * bj * bj * std::exp(-2.0 * lam * (t - s)) * t /
                    static_cast<double>(M);
        }
    }
    CHECK(quad == doctest::Approx(rhs).epsilon(1e-5));

    const long npaths = 3000;
    long fine = 128;
    double sum = 0.0, sq = 0.0;
    for (long c = 0; c < npaths; ++c) {
        PathStream stream{3111, static_cast<std::uint64_t>(c), t / fine, t};
        PathNoise noise(p.noise, stream, &p.model);
        auto xt = run_scheme_terminal(SchemeKind::accelerated_exponential_euler, p, noise, fine);
        double v = dot(xt, xt);
        sum += v;
        sq += v * v;
    }
    double mean = sum / npaths, se = std::sqrt((sq / npaths - mean * mean) / npaths);
    CHECK(std::abs(mean - rhs) < 3.0 * se);
}

TEST_CASE("mild Kolmogorov identity on the linear additive problem") {
    auto p = linear_additive(4, 0.5);
    p.xi = ModalState({0.5, -0.3, 0.2, 0.1});
    auto phi = tf_squared_norm();
    auto rep = check_mild_kolmogorov(p, p.xi, phi, 0.125, 0.375, 800, 800, 8, 256, 5150);
    CHECK(std::abs(rep.z) < 3.0);
    // the left side also matches the analytic OU moment
    double analytic = ou_second_moment(p, 0.375);
    CHECK(std::abs(rep.lhs_mean - analytic) < 3.0 * std::max(rep.lhs_se, 1e-9) + 2e-3);
}

TEST_CASE("time-dependent test function: the d1 term closes the formula") {
    // phi(t, x) = g(t) |x|^2 with g(t) = 1 + t: the formula gains the
    // time-derivative term; residual contracts with the quadrature just as in
    // the autonomous case
    auto p = linear_additive(5, 0.5);
    long fine = 256;
    auto sq = tf_squared_norm();
    TimeTestFunction phi;
    phi.name = "ramped_squared_norm";
    phi.value = [](double t, const ModalState& x) {
        return Value::real((1.0 + t) * dot(x, x));
    };
    phi.time_deriv = [](double, const ModalState& x) { return Value::real(dot(x, x)); };
    phi.deriv = [sq](double t, const ModalState& x, std::span<const ModalState> dirs) {
        Value v = sq.deriv(x, dirs);
        v *= 1.0 + t;
        return v;
    };

    const long npaths = 400;
    std::vector<long> Ms = {16, 64, 256};
    std::vector<double> res_ms(Ms.size(), 0.0);
    double dt_sum = 0.0;
    for (long c = 0; c < npaths; ++c) {
        PathStream stream{919, static_cast<std::uint64_t>(c), 0.5 / fine, 0.5};
        PathNoise noise(p.noise, stream, &p.model);
        auto path = record_fine_path(SchemeKind::accelerated_exponential_euler, p, noise, fine);
        for (std::size_t mi = 0; mi < Ms.size(); ++mi) {
            auto bd = evaluate_mild_ito(p, path, noise, phi, 0.0, 0.5, Ms[mi], 5);
            double r = bd.residual.as_real();
            res_ms[mi] += r * r;
            if (mi + 1 == Ms.size()) dt_sum += bd.time_derivative_term.as_real();
        }
    }
    double slope = std::log2(res_ms.front() / res_ms.back()) / 4.0;
    CHECK(slope > 0.4);
    CHECK(dt_sum / npaths > 0.0);  // the d1 term is active
}

TEST_CASE("mild Kolmogorov identity degenerates at t0 = t") {
    auto p = linear_additive(3, 0.25);
    p.xi = ModalState({0.4, 0.2, -0.1});
    auto phi = tf_squared_norm();
    auto rep = check_mild_kolmogorov(p, p.xi, phi, 0.25, 0.25, 400, 400, 4, 64, 12);
    // both sides estimate E phi(X_t); the K term carries everything
    CHECK(rep.integral_mean == 0.0);
    CHECK(std::abs(rep.z) < 3.0);
}

TEST_CASE("mild Kolmogorov identity with t0 = 0 reduces to the operator form") {
    auto p = linear_additive(3, 0.25);
    p.xi = ModalState({0.4, 0.2, -0.1});
    auto phi = tf_squared_norm();
    auto rep = check_mild_kolmogorov(p, p.xi, phi, 0.0, 0.25, 600, 600, 8, 128, 99);
    CHECK(std::abs(rep.z) < 3.0);
    // with t0 = 0 the K term is deterministic: phi(e^{At} x)
    double kterm = phi(apply_semigroup(p.model, 0.25, p.xi)).as_real();
    CHECK(rep.k_term_mean == doctest::Approx(kterm).epsilon(1e-12));
}
