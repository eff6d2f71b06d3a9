#pragma once

// Exact planning on known MDPs: optimal gain and bias, policy evaluation,
// adversarial hitting times and hitting probabilities, and certification of
// a frequent state.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "mdp.hpp"
#include "operators.hpp"

namespace freqstate {

class NoConvergence : public Error {
public:
    using Error::Error;
};

class NoFrequentState : public Error {
public:
    using Error::Error;
};

struct SolverOptions {
    double tol = 1e-10;
    std::size_t max_iter = 1'000'000;
};

struct PlanSolution {
    double gain = 0.0;
    Vector bias;
    DeterministicPolicy policy;
    double residual = 0.0;
    std::size_t iterations = 0;
    bool damped = false;
};

struct PolicyEvaluation {
    double gain = 0.0;
    Vector bias;
    double residual = 0.0;
    std::size_t iterations = 0;
};

namespace detail {

struct RviResult {
    double gain;
    Vector v;  // min-normalized
    double residual;
    std::size_t iterations;
    bool damped;
};

/// Relative value iteration for any monotone, constant-shift-equivariant
/// operator `apply(v, out)`. Reference state 0. Switches to the aperiodicity
/// transform v <- (v + Tv)/2 once the residual stops shrinking.
template <class Apply>
RviResult relative_value_iteration(std::size_t S, Apply&& apply, const SolverOptions& opt) {
    if (!(opt.tol > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
    Vector v(S, 0.0), tv(S);
    bool damped = false;
    constexpr std::size_t kWindow = 64;
    double checkpoint = std::numeric_limits<double>::infinity();

    for (std::size_t it = 1; it <= opt.max_iter; ++it) {
        apply(v, tv);
        double lo = tv[0] - v[0], hi = lo;
        for (std::size_t s = 1; s < S; ++s) {
            const double d = tv[s] - v[s];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        const double residual = hi - lo;
        if (residual <= opt.tol) {
            const double vmin = *std::min_element(v.begin(), v.end());
            for (double& x : v) x -= vmin;
            return {0.5 * (lo + hi), std::move(v), residual, it, damped};
        }
        if (!damped && it % kWindow == 0) {
            if (residual > 0.9 * checkpoint) damped = true;
            checkpoint = residual;
        }
        const double ref = damped ? 0.5 * (v[0] + tv[0]) : tv[0];
        for (std::size_t s = 0; s < S; ++s)
            v[s] = (damped ? 0.5 * (v[s] + tv[s]) : tv[s]) - ref;
    }
    throw NoConvergence("relative value iteration did not converge within " +
                        std::to_string(opt.max_iter) + " iterations");
}

}  // namespace detail

inline PlanSolution solve_average_reward(const TabularMdp& mdp, const SolverOptions& opt = {}) {
    auto res = detail::relative_value_iteration(
        mdp.num_states(), [&](const Vector& v, Vector& out) { bellman_apply_into(mdp, v, out); },
        opt);
    PlanSolution sol;
    sol.policy = greedy_policy(mdp, res.v);
    sol.gain = res.gain;
    sol.bias = std::move(res.v);
    sol.residual = res.residual;
    sol.iterations = res.iterations;
    sol.damped = res.damped;
    return sol;
}

inline PolicyEvaluation policy_gain_bias(const TabularMdp& mdp, const RandomizedPolicy& policy,
                                         const SolverOptions& opt = {}) {
    const PolicyKernel k = policy_kernel(mdp, policy);
    const std::size_t S = k.num_states;
    auto res = detail::relative_value_iteration(
        S,
        [&](const Vector& v, Vector& out) {
            for (std::size_t s = 0; s < S; ++s) {
                const auto row = k.row(s);
                double acc = k.reward[s];
                for (std::size_t n = 0; n < S; ++n) acc += row[n] * v[n];
                out[s] = acc;
            }
        },
        opt);
    return {res.gain, std::move(res.v), res.residual, res.iterations};
}

inline PolicyEvaluation policy_gain_bias(const TabularMdp& mdp, const DeterministicPolicy& policy,
                                         const SolverOptions& opt = {}) {
    return policy_gain_bias(mdp, RandomizedPolicy::from_deterministic(policy, mdp.num_actions()),
                            opt);
}

// ---------------------------------------------------------------------------
// Hitting times

inline constexpr double kDivergenceCap = 1e8;

/// States that some policy can keep away from s0 forever: the largest set W
/// not containing s0 such that every s in W has an action with support in W.
inline std::vector<bool> avoiding_set(const TabularMdp& mdp, std::size_t s0) {
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    std::vector<bool> in(S, true);
    in[s0] = false;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t s = 0; s < S; ++s) {
            if (!in[s]) continue;
            bool keeps = false;
            for (std::size_t a = 0; a < A && !keeps; ++a) {
                const auto row = mdp.row(s, a);
                bool inside = true;
                for (std::size_t n = 0; n < S; ++n)
                    if (row[n] > 0.0 && !in[n]) {
                        inside = false;
                        break;
                    }
                keeps = inside;
            }
            if (!keeps) {
                in[s] = false;
                changed = true;
            }
        }
    }
    return in;
}

/// Worst-case expected hitting time of s0 from every state, or nullopt when
/// some policy avoids s0 indefinitely (or the values exceed the cap).
inline std::optional<Vector> expected_hitting_times(const TabularMdp& mdp, std::size_t s0,
                                                    double divergence_cap = kDivergenceCap) {
    mdp.check_indices(s0, 0);
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    const auto avoid = avoiding_set(mdp, s0);
    if (std::find(avoid.begin(), avoid.end(), true) != avoid.end()) return std::nullopt;

    Vector h(S, 0.0), next(S, 0.0);
    double prev_delta = 0.0;
    for (std::size_t it = 0;; ++it) {
        double delta = 0.0, top = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            if (s == s0) {
                next[s] = 0.0;
                continue;
            }
            double best = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                const auto row = mdp.row(s, a);
                double acc = 0.0;
                for (std::size_t n = 0; n < S; ++n) acc += row[n] * h[n];
                best = std::max(best, acc);
            }
            next[s] = 1.0 + best;
            delta = std::max(delta, next[s] - h[s]);
            top = std::max(top, next[s]);
        }
        h.swap(next);
        if (top > divergence_cap) return std::nullopt;
        // The increments shrink geometrically; stop once the projected tail
        // of the series is below the tolerance.
        if (it > 0 && delta < prev_delta) {
            const double ratio = delta / prev_delta;
            const double tail = delta * ratio / (1.0 - ratio);
            if (tail <= 1e-13 * std::max(1.0, top)) break;
        }
        if (delta == 0.0) break;
        prev_delta = delta;
    }
    return h;
}

inline std::optional<double> max_expected_hitting_time(const TabularMdp& mdp, std::size_t s0,
                                                       double divergence_cap = kDivergenceCap) {
    const auto h = expected_hitting_times(mdp, s0, divergence_cap);
    if (!h) return std::nullopt;
    return *std::max_element(h->begin(), h->end());
}

/// f_k(s): minimum over policies of the probability of visiting s0 within k
/// transitions, for k = 0..horizon. Starting at s0 counts as a visit.
inline std::vector<Vector> hitting_probability_profile(const TabularMdp& mdp, std::size_t s0,
                                                       std::size_t horizon) {
    mdp.check_indices(s0, 0);
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    std::vector<Vector> f(horizon + 1, Vector(S, 0.0));
    f[0][s0] = 1.0;
    for (std::size_t k = 1; k <= horizon; ++k) {
        for (std::size_t s = 0; s < S; ++s) {
            if (s == s0) {
                f[k][s] = 1.0;
                continue;
            }
            double worst = 1.0;
            for (std::size_t a = 0; a < A; ++a) {
                const auto row = mdp.row(s, a);
                double acc = 0.0;
                for (std::size_t n = 0; n < S; ++n) acc += row[n] * f[k - 1][n];
                worst = std::min(worst, acc);
            }
            f[k][s] = worst;
        }
    }
    return f;
}

inline double min_hitting_probability(const TabularMdp& mdp, std::size_t s0, std::size_t horizon) {
    if (horizon < 1) throw std::invalid_argument("min_hitting_probability: horizon must be >= 1");
    const auto f = hitting_probability_profile(mdp, s0, horizon);
    double worst = 1.0;
    for (std::size_t s = 0; s < mdp.num_states(); ++s)
        if (s != s0) worst = std::min(worst, f[horizon][s]);
    return worst;
}

/// Minimum over policies of the probability that a trajectory started at s0
/// comes back to s0 within `horizon` transitions.
inline double min_return_probability(const TabularMdp& mdp, std::size_t s0, std::size_t horizon) {
    if (horizon < 1) throw std::invalid_argument("min_return_probability: horizon must be >= 1");
    const auto f = hitting_probability_profile(mdp, s0, horizon - 1);
    double worst = 1.0;
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        const auto row = mdp.row(s0, a);
        double acc = 0.0;
        for (std::size_t n = 0; n < mdp.num_states(); ++n) acc += row[n] * f[horizon - 1][n];
        worst = std::min(worst, acc);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Certification

enum class CertificateMethod { Expected, Probabilistic, Both };

inline const char* to_string(CertificateMethod m) {
    switch (m) {
    case CertificateMethod::Expected: return "expected";
    case CertificateMethod::Probabilistic: return "probabilistic";
    case CertificateMethod::Both: return "both";
    }
    return "unknown";
}

struct AssumptionCertificate {
    std::size_t frequent_state = 0;
    std::optional<double> expected_bound;
    std::optional<std::size_t> prob_horizon;
    std::optional<double> prob_lower;
    CertificateMethod method = CertificateMethod::Both;
};

/// Probability that s0 is visited within h steps from every start, counting
/// only returns (not time 0) when the start is s0 itself.
inline double certified_probability(const TabularMdp& mdp, std::size_t s0, std::size_t h) {
    return std::min(min_hitting_probability(mdp, s0, h), min_return_probability(mdp, s0, h));
}

inline AssumptionCertificate certify_state(const TabularMdp& mdp, std::size_t s0, double E) {
    AssumptionCertificate cert;
    cert.frequent_state = s0;
    cert.expected_bound = E;
    // Search horizons up to the one guaranteed to give p >= 1/2 and keep the
    // pair with the best p/H ratio (smallest horizon on ties).
    const auto h_max = static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * E)));
    std::size_t best_h = 0;
    double best_p = 0.0;
    for (std::size_t h = 1; h <= h_max; ++h) {
        const double p = certified_probability(mdp, s0, h);
        if (p > 0.0 && (best_h == 0 || p * static_cast<double>(best_h) >
                                           best_p * static_cast<double>(h))) {
            best_h = h;
            best_p = p;
        }
    }
    if (best_h > 0) {
        cert.prob_horizon = best_h;
        cert.prob_lower = best_p;
        cert.method = CertificateMethod::Both;
    } else {
        cert.method = CertificateMethod::Expected;
    }
    return cert;
}

/// Certify `candidate` when given, otherwise the state with the smallest
/// worst-case expected hitting time (lowest index on ties).
inline AssumptionCertificate certify_assumptions(const TabularMdp& mdp,
                                                 std::optional<std::size_t> candidate = {}) {
    if (candidate) {
        const auto E = max_expected_hitting_time(mdp, *candidate);
        if (!E)
            throw NoFrequentState("state " + std::to_string(*candidate) +
                                  " can be avoided indefinitely");
        return certify_state(mdp, *candidate, *E);
    }
    std::optional<std::size_t> best;
    double best_E = 0.0;
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        const auto E = max_expected_hitting_time(mdp, s);
        if (E && (!best || *E < best_E)) {
            best = s;
            best_E = *E;
        }
    }
    if (!best) throw NoFrequentState("every state can be avoided indefinitely by some policy");
    return certify_state(mdp, *best, best_E);
}

}  // namespace freqstate
