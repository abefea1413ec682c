// taylor.hpp — multi-index algebra, hierarchical sets, and numerical
// evaluation of the strong and weak stochastic Taylor expansions built from
// iterated applications of L_t^(0) and L_t^(1).
//
// Multi-indices are finite words over {0,1}; the empty word is allowed.
// -(a_1,...,a_n) = (a_2,...,a_n) drops the first entry.  A finite set A
// containing the empty word and closed under -(.) is hierarchical, and
// B(A) = { a not in A : -a in A } indexes the remainder integrals.
//
// The term of a multi-index a with |a| = m is the iterated integral over the
// simplex t0 <= s_1 <= ... <= s_m <= t of
//   ( L^{(a_1)}_{s_2-s_1} ... L^{(a_{m-1})}_{s_m-s_{m-1}} L^{(a_m)}_{t-s_m} phi )
//   ( e^{A (s_1-t0)} X_{t0} )  dW^{a_1}_{s_1} ... dW^{a_m}_{s_m},
// with dW^0 = ds and dW^1 the driving noise.  Operator chains are evaluated
// by a recursion on directional derivatives: each L^(1) consumes one
// derivative of the inner chain and one diffusion slot, each L^(0) consumes
// up to two plus the drift slot, so the chain for a needs 2|a| - sum(a)
// derivatives of phi.  Derivative demands are checked before evaluation.

#pragma once

#include "mildspde/mild_process.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

namespace mildspde {

// -- multi-index algebra ---------------------------------------------------------

struct MultiIndex {
    std::vector<int> entries;  // over {0,1}; empty = the empty word

    MultiIndex() = default;
    MultiIndex(std::initializer_list<int> e) : entries(e) { validate(); }
    explicit MultiIndex(std::vector<int> e) : entries(std::move(e)) { validate(); }

    void validate() const {
        for (int v : entries)
            if (v != 0 && v != 1)
                throw std::invalid_argument("MultiIndex: entries must be 0 or 1");
    }
    std::size_t length() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    int ones() const {
        int s = 0;
        for (int v : entries) s += v;
        return s;
    }
    // -(a_1,...,a_n) = (a_2,...,a_n)
    MultiIndex tail() const {
        if (empty()) throw std::logic_error("MultiIndex: tail of the empty word");
        return MultiIndex(std::vector<int>(entries.begin() + 1, entries.end()));
    }
    MultiIndex prepend(int a) const {
        std::vector<int> e;
        e.reserve(entries.size() + 1);
        e.push_back(a);
        e.insert(e.end(), entries.begin(), entries.end());
        return MultiIndex(std::move(e));
    }
    // derivatives of phi the chain of this index consumes
    int derivative_demand() const { return 2 * static_cast<int>(length()) - ones(); }

    bool operator==(const MultiIndex& o) const { return entries == o.entries; }
    bool operator<(const MultiIndex& o) const {
        if (entries.size() != o.entries.size()) return entries.size() < o.entries.size();
        return entries < o.entries;
    }
    std::string str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (i) s += ",";
            s += entries[i] ? "1" : "0";
        }
        return s + ")";
    }
};

struct HierarchicalSet {
    std::set<MultiIndex> members;

    explicit HierarchicalSet(std::set<MultiIndex> m) : members(std::move(m)) { validate(); }
    HierarchicalSet(std::initializer_list<MultiIndex> m) : members(m) { validate(); }

    void validate() const {
        if (members.find(MultiIndex{}) == members.end())
            throw std::invalid_argument("HierarchicalSet: must contain the empty word");
        for (const auto& a : members)
            if (!a.empty() && members.find(a.tail()) == members.end())
                throw std::invalid_argument("HierarchicalSet: not closed under -(.): missing " +
                                            a.tail().str());
    }
    bool contains(const MultiIndex& a) const { return members.count(a) > 0; }
    std::size_t max_length() const {
        std::size_t m = 0;
        for (const auto& a : members) m = std::max(m, a.length());
        return m;
    }
};

// B(A) = { a in M \ A : -a in A }: every element is some member with one
// symbol prepended, so prepending over A enumerates all candidates
inline std::set<MultiIndex> remainder_set(const HierarchicalSet& A) {
    std::set<MultiIndex> out;
    for (const auto& a : A.members)
        for (int sym : {0, 1}) {
            MultiIndex c = a.prepend(sym);
            if (!A.contains(c)) out.insert(c);
        }
    return out;
}

// -- operator chains ----------------------------------------------------------------

namespace taylor_detail {

inline int drift_max_order(const DriftSpec& F) {
    switch (F.kind) {
        case DriftKind::zero:
        case DriftKind::linear_diagonal:
        case DriftKind::matrix:
            return 1 << 20;
        case DriftKind::nemytskii:
            return F.f.max_order;
    }
    return 0;
}

inline int diffusion_max_order(const DiffusionSpec& B) {
    switch (B.kind) {
        case DiffusionKind::additive_diagonal:
            return 1 << 20;
        case DiffusionKind::multiplicative_diagonal:
        case DiffusionKind::nemytskii:
            return B.b.max_order;
    }
    return 0;
}

// Evaluates (L^{(sym_1)}_{lag_1} ... L^{(sym_m)}_{lag_m} phi)(x) for a fixed
// assignment of noise modes to the 1-positions.
struct ChainEvaluator {
    const SpdeProblem* p = nullptr;
    const TestFunction* phi = nullptr;
    std::size_t J = 0;
    std::vector<int> sym;
    std::vector<double> lag;
    std::vector<std::size_t> mode;  // per position; used when sym == 1

    double value(const ModalState& x) const {
        std::vector<ModalState> dirs;
        return eval(0, x, dirs);
    }

    double deriv_or_value(const ModalState& x, const std::vector<ModalState>& dirs) const {
        if (dirs.empty()) return phi->value(x).as_real();
        return phi->deriv(x, dirs).as_real();
    }

    double eval(std::size_t k, const ModalState& x, std::vector<ModalState>& dirs) const {
        if (k == sym.size()) return deriv_or_value(x, dirs);
        double u = lag[k];
        ModalState y = apply_semigroup(p->model, u, x);
        std::size_t r = dirs.size();

        if (sym[k] == 1) {
            std::size_t j = mode[k];
            double total = 0.0;
            // distribute the r directions over the evaluation point and the
            // diffusion slot
            for (std::size_t mask = 0; mask < (1u << r); ++mask) {
                std::vector<ModalState> slot_dirs, pass;
                for (std::size_t i = 0; i < r; ++i)
                    if (mask & (1u << i))
                        slot_dirs.push_back(dirs[i]);
                    else
                        pass.push_back(apply_semigroup(p->model, u, dirs[i]));
                ModalState w = diffusion_derivative_apply(p->diffusion, x, slot_dirs, j);
                pass.push_back(apply_semigroup(p->model, u, w));
                total += eval(k + 1, y, pass);
            }
            return total;
        }

        // sym == 0: drift part plus trace part
        double total = 0.0;
        for (std::size_t mask = 0; mask < (1u << r); ++mask) {
            std::vector<ModalState> slot_dirs, pass;
            for (std::size_t i = 0; i < r; ++i)
                if (mask & (1u << i))
                    slot_dirs.push_back(dirs[i]);
                else
                    pass.push_back(apply_semigroup(p->model, u, dirs[i]));
            ModalState v = slot_dirs.empty()
                               ? eval_drift(p->drift, 0.0, x)
                               : drift_derivative(p->drift, x, slot_dirs);
            pass.push_back(apply_semigroup(p->model, u, v));
            total += eval(k + 1, y, pass);
        }
        // trace: assign each direction to the point slot (0) or one of the
        // two diffusion slots (1, 2)
        std::size_t assignments = 1;
        for (std::size_t i = 0; i < r; ++i) assignments *= 3;
        for (std::size_t j = 0; j < J; ++j) {
            double q = p->noise.q[j];
            if (q == 0.0) continue;
            double jtotal = 0.0;
            for (std::size_t code = 0; code < assignments; ++code) {
                std::vector<ModalState> s1, s2, pass;
                std::size_t c = code;
                for (std::size_t i = 0; i < r; ++i) {
                    switch (c % 3) {
                        case 0: pass.push_back(apply_semigroup(p->model, u, dirs[i])); break;
                        case 1: s1.push_back(dirs[i]); break;
                        case 2: s2.push_back(dirs[i]); break;
                    }
                    c /= 3;
                }
                ModalState w1 = diffusion_derivative_apply(p->diffusion, x, s1, j);
                ModalState w2 = diffusion_derivative_apply(p->diffusion, x, s2, j);
                pass.push_back(apply_semigroup(p->model, u, w1));
                pass.push_back(apply_semigroup(p->model, u, w2));
                jtotal += eval(k + 1, y, pass);
            }
            total += 0.5 * q * jtotal;
        }
        return total;
    }

};

inline void check_orders(const SpdeProblem& p, const TestFunction& phi, const MultiIndex& a) {
    if (phi.state_valued)
        throw std::invalid_argument("taylor expansions support scalar test functions");
    if (a.derivative_demand() > phi.max_order)
        throw std::invalid_argument("taylor: test function lacks derivatives for " + a.str());
    // coefficient derivatives demanded by the enclosing operators
    int demand = 0;
    for (std::size_t k = 0; k < a.length(); ++k) {
        if (a.entries[k] == 0 && demand > drift_max_order(p.drift))
            throw std::invalid_argument("taylor: drift lacks derivatives for " + a.str());
        if (demand > diffusion_max_order(p.diffusion))
            throw std::invalid_argument("taylor: diffusion lacks derivatives for " + a.str());
        demand += a.entries[k] == 0 ? 2 : 1;
    }
}

}  // namespace taylor_detail

// -- strong expansion ----------------------------------------------------------------

struct StrongTaylorResult {
    std::vector<std::pair<MultiIndex, double>> terms;  // alpha != empty
    double initial = 0.0;        // phi(e^{A (t-t0)} X_{t0})
    double approximation = 0.0;  // initial + sum of terms
    double lhs = 0.0;            // phi(X_t) along the path
    double remainder = 0.0;      // lhs - approximation
};

// Evaluates the strong expansion of phi(X_t) for the hierarchical set A along
// a simulated path.  Iterated integrals use the left-point rule on a
// quadrature grid of cells of `stride` fine steps; the single-index (1) term
// with additive diffusion uses the bundle's exact convolutions instead.
inline StrongTaylorResult taylor_strong_terms(const SpdeProblem& p, const HierarchicalSet& A,
                                              const TestFunction& phi, const SimulatedPath& path,
                                              const PathNoise& noise, double t0, double t,
                                              long stride = 1) {
    if (A.max_length() > 3)
        throw std::invalid_argument("taylor_strong_terms: indices longer than 3 unsupported");
    for (const auto& a : A.members)
        if (!a.empty()) taylor_detail::check_orders(p, phi, a);

    double hf = noise.fine_step();
    long k0 = static_cast<long>(std::llround(t0 / hf));
    long k1 = static_cast<long>(std::llround(t / hf));
    if (std::abs(t0 - static_cast<double>(k0) * hf) > 1e-9 ||
        std::abs(t - static_cast<double>(k1) * hf) > 1e-9 || k1 <= k0)
        throw std::invalid_argument("taylor_strong_terms: t0, t must be fine grid points");
    if (stride < 1 || (k1 - k0) % stride != 0)
        throw std::invalid_argument("taylor_strong_terms: stride must divide the span");
    long Mq = (k1 - k0) / stride;
    double delta = static_cast<double>(stride) * hf;
    std::size_t J = p.noise.mode_count();

    const ModalState& x0 = path.at_fine(k0);
    ModalState sx0 = apply_semigroup(p.model, t - t0, x0);

    // per-cell increments
    std::vector<std::vector<double>> dw(static_cast<std::size_t>(Mq),
                                        std::vector<double>(J, 0.0));
    for (long c = 0; c < Mq; ++c)
        for (std::size_t j = 0; j < J; ++j)
            dw[static_cast<std::size_t>(c)][j] =
                noise.increment(k0 + c * stride, k0 + (c + 1) * stride, static_cast<long>(j));

    StrongTaylorResult out;
    out.initial = phi(sx0).as_real();
    out.lhs = phi(path.at_fine(k1)).as_real();

    for (const auto& a : A.members) {
        if (a.empty()) continue;
        double term = 0.0;
        std::size_t m = a.length();

        if (m == 1 && a.entries[0] == 1 && p.diffusion.is_additive() &&
            noise.has_convolution()) {
            // exact Gaussian convolution term
            ModalState v(p.dim());
            for (std::size_t j = 0; j < std::min<std::size_t>(J, p.dim()); ++j)
                v[j] = p.diffusion.amp_at(j) * noise.convolution(k0, k1, static_cast<long>(j));
            term = phi.grad_apply(sx0, v).as_real();
        } else {
            taylor_detail::ChainEvaluator chain;
            chain.p = &p;
            chain.phi = &phi;
            chain.J = J;
            chain.sym = a.entries;
            chain.lag.assign(m, 0.0);
            chain.mode.assign(m, 0);

            // iterate over ordered node tuples i_1 < ... < i_m
            std::vector<long> idx(m, 0);
            std::function<void(std::size_t, long)> loop = [&](std::size_t level, long lo) {
                // level counts from the outermost variable s_m downward
                std::size_t kpos = m - 1 - level;
                for (long i = lo - 1; i >= static_cast<long>(kpos); --i) {
                    idx[kpos] = i;
                    if (kpos > 0) {
                        loop(level + 1, i);
                        continue;
                    }
                    // lags from the node times
                    for (std::size_t k = 0; k + 1 < m; ++k)
                        chain.lag[k] = static_cast<double>(idx[k + 1] - idx[k]) * delta;
                    chain.lag[m - 1] =
                        t - (t0 + static_cast<double>(idx[m - 1]) * delta);
                    ModalState x = apply_semigroup(
                        p.model, static_cast<double>(idx[0]) * delta, x0);
                    // sum over mode assignments of the 1-positions
                    std::vector<std::size_t> ones;
                    for (std::size_t k = 0; k < m; ++k)
                        if (a.entries[k] == 1) ones.push_back(k);
                    std::vector<std::size_t> jj(ones.size(), 0);
                    bool done = false;
                    while (!done) {
                        double weight = 1.0;
                        for (std::size_t k = 0; k < m; ++k) {
                            if (a.entries[k] == 0) {
                                weight *= delta;
                            }
                        }
                        for (std::size_t oi = 0; oi < ones.size(); ++oi) {
                            chain.mode[ones[oi]] = jj[oi];
                            weight *= dw[static_cast<std::size_t>(idx[ones[oi]])][jj[oi]];
                        }
                        term += weight * chain.value(x);
                        // advance the mode tuple
                        done = ones.empty();
                        for (std::size_t oi = 0; oi < ones.size(); ++oi) {
                            if (++jj[oi] < J) break;
                            jj[oi] = 0;
                            if (oi + 1 == ones.size()) done = true;
                        }
                    }
                }
            };
            loop(0, Mq);
        }
        out.terms.emplace_back(a, term);
    }

    out.approximation = out.initial;
    for (const auto& [a, v] : out.terms) out.approximation += v;
    out.remainder = out.lhs - out.approximation;
    return out;
}

// -- weak expansion -----------------------------------------------------------------

struct WeakTaylorResult {
    double k_term = 0.0;              // E phi(e^{At} x0) = phi(e^{At} x0)
    std::vector<double> order_terms;  // k = 1 .. n-1
    double approximation() const {
        double s = k_term;
        for (double v : order_terms) s += v;
        return s;
    }
};

// Deterministic part of the weak expansion of E phi(X_t) started at x0:
// phi(e^{At} x0) plus the iterated L^(0) chains over the simplex.
inline WeakTaylorResult taylor_weak_expansion(const SpdeProblem& p, int n, const ModalState& x0,
                                              const TestFunction& phi, double t, long Mq,
                                              std::size_t J) {
    if (n < 1) throw std::invalid_argument("taylor_weak_expansion: n >= 1");
    if (n > 3) throw std::invalid_argument("taylor_weak_expansion: n <= 3 supported");
    WeakTaylorResult out;
    out.k_term = phi(apply_semigroup(p.model, t, x0)).as_real();

    for (int k = 1; k <= n - 1; ++k) {
        MultiIndex a(std::vector<int>(static_cast<std::size_t>(k), 0));
        taylor_detail::check_orders(p, phi, a);
        taylor_detail::ChainEvaluator chain;
        chain.p = &p;
        chain.phi = &phi;
        chain.J = std::min(J, p.noise.mode_count());
        chain.sym = a.entries;
        chain.lag.assign(static_cast<std::size_t>(k), 0.0);
        chain.mode.assign(static_cast<std::size_t>(k), 0);

        double delta = t / static_cast<double>(Mq);
        double term = 0.0;
        std::vector<long> idx(static_cast<std::size_t>(k), 0);
        std::function<void(std::size_t, long)> loop = [&](std::size_t level, long lo) {
            std::size_t kpos = static_cast<std::size_t>(k) - 1 - level;
            for (long i = lo - 1; i >= static_cast<long>(kpos); --i) {
                idx[kpos] = i;
                if (kpos > 0) {
                    loop(level + 1, i);
                    continue;
                }
                for (std::size_t kk = 0; kk + 1 < static_cast<std::size_t>(k); ++kk)
                    chain.lag[kk] = static_cast<double>(idx[kk + 1] - idx[kk]) * delta;
                chain.lag[static_cast<std::size_t>(k) - 1] =
                    t - static_cast<double>(idx[static_cast<std::size_t>(k) - 1]) * delta;
                ModalState x =
                    apply_semigroup(p.model, static_cast<double>(idx[0]) * delta, x0);
                double w = 1.0;
                for (int kk = 0; kk < k; ++kk) w *= delta;
                term += w * chain.value(x);
            }
        };
        loop(0, Mq);
        out.order_terms.push_back(term);
    }
    return out;
}

}  // namespace mildspde
