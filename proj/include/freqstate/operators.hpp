#pragma once

// Bellman operator (discount 1), its powers, the averaged operator and the
// span projection.

#include <algorithm>
#include <stdexcept>

#include "mdp.hpp"

namespace freqstate {

struct OperatorConfig {
    std::size_t horizon_H = 1;
    double span_cap = 0.0;

    void check() const {
        if (horizon_H < 1) throw std::invalid_argument("OperatorConfig: horizon_H must be >= 1");
        if (!(span_cap >= 0.0)) throw std::invalid_argument("OperatorConfig: span_cap must be >= 0");
    }
};

namespace detail {
inline void require_length(const TabularMdp& mdp, std::span<const double> v) {
    if (v.size() != mdp.num_states())
        throw std::invalid_argument("value vector length does not match the number of states");
}
}  // namespace detail

/// out = Lv. `out` must not alias `v`.
inline void bellman_apply_into(const TabularMdp& mdp, std::span<const double> v, Vector& out) {
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    out.resize(S);
    for (std::size_t s = 0; s < S; ++s) {
        double best = mdp.q_value(s, 0, v);
        for (std::size_t a = 1; a < A; ++a) best = std::max(best, mdp.q_value(s, a, v));
        out[s] = best;
    }
}

inline Vector bellman_apply(const TabularMdp& mdp, std::span<const double> v) {
    detail::require_length(mdp, v);
    Vector out;
    bellman_apply_into(mdp, v, out);
    return out;
}

inline Vector bellman_power(const TabularMdp& mdp, std::span<const double> v, std::size_t h) {
    if (h < 1) throw std::invalid_argument("bellman_power: h must be >= 1");
    detail::require_length(mdp, v);
    Vector cur(v.begin(), v.end()), next;
    for (std::size_t i = 0; i < h; ++i) {
        bellman_apply_into(mdp, cur, next);
        cur.swap(next);
    }
    return cur;
}

/// (1/H) * sum_{h=1..H} L^h v, using H Bellman sweeps in total.
inline Vector lbar_apply(const TabularMdp& mdp, std::span<const double> v, std::size_t H) {
    if (H < 1) throw std::invalid_argument("lbar_apply: H must be >= 1");
    detail::require_length(mdp, v);
    const std::size_t S = mdp.num_states();
    Vector cur(v.begin(), v.end()), next, acc(S, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
        bellman_apply_into(mdp, cur, next);
        cur.swap(next);
        for (std::size_t s = 0; s < S; ++s) acc[s] += cur[s];
    }
    const double inv = 1.0 / static_cast<double>(H);
    for (double& x : acc) x *= inv;
    return acc;
}

/// [P v](s) = min(cap, v(s) - min v) + min v
inline Vector project_span(std::span<const double> v, double span_cap) {
    if (v.empty()) return {};
    if (!(span_cap >= 0.0)) throw std::invalid_argument("project_span: span_cap must be >= 0");
    const double lo = *std::min_element(v.begin(), v.end());
    Vector out(v.size());
    for (std::size_t s = 0; s < v.size(); ++s) out[s] = v[s] - lo <= span_cap ? v[s] : lo + span_cap;
    return out;
}

/// argmax_a R(s,a) + P_{s,a}.v per state; lowest index wins ties.
inline DeterministicPolicy greedy_policy(const TabularMdp& mdp, std::span<const double> v) {
    detail::require_length(mdp, v);
    DeterministicPolicy pi{std::vector<std::size_t>(mdp.num_states(), 0)};
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        double best = mdp.q_value(s, 0, v);
        for (std::size_t a = 1; a < mdp.num_actions(); ++a) {
            const double q = mdp.q_value(s, a, v);
            if (q > best) {
                best = q;
                pi.action_of[s] = a;
            }
        }
    }
    return pi;
}

}  // namespace freqstate
