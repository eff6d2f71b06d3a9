#pragma once

// Benchmark MDP constructors.

#include <cmath>
#include <string>
#include <vector>

#include "mdp.hpp"

namespace freqstate {

class InvalidParams : public Error {
public:
    using Error::Error;
};

/// Affine map from normalized rewards back to the raw economic quantity:
/// raw = offset + scale * normalized.
struct RewardScaling {
    double offset = 0.0;
    double scale = 1.0;
};

struct EnvInstance {
    TabularMdp mdp;
    RewardScaling scaling;
};

namespace detail {

inline void check_distribution(const std::vector<double>& probs, const char* what) {
    if (probs.empty()) throw InvalidParams(std::string(what) + " is empty");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw InvalidParams(std::string(what) + " has a negative entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw InvalidParams(std::string(what) + " does not sum to 1");
}

/// Rescale raw rewards affinely into [0, 1]. A constant table maps to 0.
inline RewardScaling normalize_rewards(std::vector<double>& R) {
    const auto [lo_it, hi_it] = std::minmax_element(R.begin(), R.end());
    const double lo = *lo_it, hi = *hi_it;
    RewardScaling sc{lo, hi > lo ? hi - lo : 1.0};
    for (double& r : R) r = (r - sc.offset) / sc.scale;
    for (double& r : R) r = std::clamp(r, 0.0, 1.0);
    return sc;
}

inline double binomial_pmf(std::size_t n, std::size_t k, double q) {
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)) *
           std::pow(q, static_cast<double>(k)) * std::pow(1.0 - q, static_cast<double>(n - k));
}

/// Renormalize a row so that its entries sum to one as closely as doubles allow.
inline void renormalize(std::span<double> row) {
    double sum = 0.0;
    for (double p : row) sum += p;
    for (double& p : row) p /= sum;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Queueing admission control

struct QueueParams {
    std::size_t capacity = 5;
    /// arrival_probs[k] = P(k jobs arrive in one step)
    std::vector<double> arrival_probs{0.4, 0.6};
    double service_prob = 0.5;
    std::vector<std::size_t> admit_limits{0, 1};
    double reward_per_service = 1.0;
    double holding_cost_scale = 0.05;
};

/// State: jobs in the system. Arrivals are admitted up to the action's cap
/// and the free capacity; then each job present completes independently with
/// probability service_prob. Raw reward is the expected service revenue minus
/// a convex holding cost on the post-admission occupancy.
inline EnvInstance make_queueing_admission(const QueueParams& params) {
    detail::check_distribution(params.arrival_probs, "arrival_probs");
    if (!(params.service_prob > 0.0 && params.service_prob <= 1.0))
        throw InvalidParams("service_prob must lie in (0, 1]");
    if (params.admit_limits.empty()) throw InvalidParams("admit_limits is empty");
    if (params.holding_cost_scale < 0.0) throw InvalidParams("holding_cost_scale must be >= 0");

    const std::size_t M = params.capacity, S = M + 1, A = params.admit_limits.size();
    const double q = params.service_prob;
    MdpTables t(S, A);
    for (std::size_t x = 0; x < S; ++x) {
        for (std::size_t a = 0; a < A; ++a) {
            double raw = 0.0;
            for (std::size_t k = 0; k < params.arrival_probs.size(); ++k) {
                const double pk = params.arrival_probs[k];
                if (pk == 0.0) continue;
                const std::size_t admitted = std::min({k, params.admit_limits[a], M - x});
                const std::size_t y = x + admitted;
                for (std::size_t done = 0; done <= y; ++done)
                    t.p(x, a, y - done) += pk * detail::binomial_pmf(y, done, q);
                const double yd = static_cast<double>(y);
                raw += pk * (params.reward_per_service * q * yd - params.holding_cost_scale * yd * yd);
            }
            t.r(x, a) = raw;
            detail::renormalize({&t.p(x, a, 0), S});
        }
    }
    const RewardScaling sc = detail::normalize_rewards(t.R);
    return {std::move(t).build(), sc};
}

// ---------------------------------------------------------------------------
// Inventory with base-stock style ordering

struct InventoryParams {
    std::size_t capacity = 4;
    /// demand_probs[d] = P(D = d); the last entry is read as P(D >= its index).
    std::vector<double> demand_probs{0.2, 0.2, 0.2, 0.1, 0.3};
    std::vector<std::size_t> order_actions{0, 1, 2, 4};
    double margin = 1.0;
    double holding_cost = 0.1;
    double order_cost = 0.2;
};

/// State: stock on hand. Order is delivered immediately (stock capped at
/// capacity), then demand is served with lost sales. Raw reward is
/// margin * E[sales] - holding_cost * post-delivery stock - order_cost * units
/// actually ordered.
inline EnvInstance make_inventory_base_stock(const InventoryParams& params) {
    detail::check_distribution(params.demand_probs, "demand_probs");
    if (params.order_actions.empty()) throw InvalidParams("order_actions is empty");
    if (params.margin < 0.0 || params.holding_cost < 0.0 || params.order_cost < 0.0)
        throw InvalidParams("economic constants must be nonnegative");

    const std::size_t M = params.capacity, S = M + 1, A = params.order_actions.size();
    MdpTables t(S, A);
    for (std::size_t x = 0; x < S; ++x) {
        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t y = std::min(x + params.order_actions[a], M);
            double sales = 0.0;
            for (std::size_t d = 0; d < params.demand_probs.size(); ++d) {
                const double pd = params.demand_probs[d];
                if (pd == 0.0) continue;
                const std::size_t sold = std::min(d, y);
                t.p(x, a, y - sold) += pd;
                sales += pd * static_cast<double>(sold);
            }
            t.r(x, a) = params.margin * sales - params.holding_cost * static_cast<double>(y) -
                        params.order_cost * static_cast<double>(y - x);
            detail::renormalize({&t.p(x, a, 0), S});
        }
    }
    const RewardScaling sc = detail::normalize_rewards(t.R);
    return {std::move(t).build(), sc};
}

// ---------------------------------------------------------------------------
// Episodic reduction

struct EpisodicMdp {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    std::size_t horizon = 0;
    /// transitions[h-1] is the S*A*S kernel used at step h.
    std::vector<std::vector<double>> transitions;
    /// rewards[h-1] is the S*A table used at step h.
    std::vector<std::vector<double>> rewards;
    std::size_t start_state = 0;

    std::span<const double> row(std::size_t h, std::size_t s, std::size_t a) const {
        return {transitions[h - 1].data() + (s * num_actions + a) * num_states, num_states};
    }
    double reward(std::size_t h, std::size_t s, std::size_t a) const {
        return rewards[h - 1][s * num_actions + a];
    }

    void check() const {
        if (num_states == 0 || num_actions == 0 || horizon == 0)
            throw InvalidMdp("episodic MDP needs S, A, H >= 1");
        if (start_state >= num_states) throw InvalidMdp("episodic start state out of range");
        if (transitions.size() != horizon || rewards.size() != horizon)
            throw InvalidMdp("episodic MDP needs one kernel and one reward table per step");
        for (std::size_t h = 1; h <= horizon; ++h) {
            if (transitions[h - 1].size() != num_states * num_actions * num_states ||
                rewards[h - 1].size() != num_states * num_actions)
                throw InvalidMdp("episodic tables have the wrong size");
            require_valid(TabularMdp(num_states, num_actions, transitions[h - 1], rewards[h - 1]));
        }
    }
};

/// Layer index is the fast-varying coordinate: (s, h) <-> s * H + (h - 1).
struct EpisodicIndex {
    std::size_t num_states = 0;
    std::size_t horizon = 0;

    std::size_t index(std::size_t s, std::size_t h) const { return s * horizon + (h - 1); }
    std::size_t state(std::size_t i) const { return i / horizon; }
    std::size_t layer(std::size_t i) const { return i % horizon + 1; }
};

struct EpisodicReduction {
    TabularMdp mdp;
    EpisodicIndex index;
};

/// Homogeneous MDP on S*H states. Step h < H moves to layer h + 1 with
/// kernel P^h; the last step collects R^H and returns to (s1, 1).
inline EpisodicReduction episodic_to_average(const EpisodicMdp& ep) {
    ep.check();
    const std::size_t S = ep.num_states, A = ep.num_actions, H = ep.horizon;
    const EpisodicIndex idx{S, H};
    MdpTables t(S * H, A);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t h = 1; h <= H; ++h) {
            const std::size_t i = idx.index(s, h);
            for (std::size_t a = 0; a < A; ++a) {
                t.r(i, a) = ep.reward(h, s, a);
                if (h == H) {
                    t.p(i, a, idx.index(ep.start_state, 1)) = 1.0;
                } else {
                    const auto row = ep.row(h, s, a);
                    for (std::size_t n = 0; n < S; ++n) t.p(i, a, idx.index(n, h + 1)) = row[n];
                }
            }
        }
    }
    return {std::move(t).build(), idx};
}

// ---------------------------------------------------------------------------
// Random instances

namespace detail {
/// Flat Dirichlet(1) draw via normalized exponentials.
inline void dirichlet_row(Rng& rng, std::span<double> out) {
    double sum = 0.0;
    for (double& x : out) {
        x = -std::log1p(-uniform01(rng));
        sum += x;
    }
    if (sum <= 0.0) {
        out[0] = 1.0;
        return;
    }
    for (double& x : out) x /= sum;
}
}  // namespace detail

/// Each row is p0 * e_0 + (1 - p0) * Dirichlet(1); rewards uniform in [0, 1].
/// State 0 is hit in one step with probability >= p0 from anywhere.
inline TabularMdp make_random_frequent(std::size_t S, std::size_t A, double p0, std::uint64_t seed) {
    if (S < 1 || A < 1) throw InvalidParams("random MDP needs S, A >= 1");
    if (!(p0 > 0.0 && p0 <= 1.0)) throw InvalidParams("p0 must lie in (0, 1]");
    Rng rng(seed);
    MdpTables t(S, A);
    Vector w(S);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            detail::dirichlet_row(rng, w);
            for (std::size_t n = 0; n < S; ++n) t.p(s, a, n) = (1.0 - p0) * w[n];
            t.p(s, a, 0) += p0;
            t.r(s, a) = uniform01(rng);
        }
    }
    return std::move(t).build();
}

inline EpisodicMdp make_random_episodic(std::size_t S, std::size_t A, std::size_t H,
                                        std::uint64_t seed) {
    if (S < 1 || A < 1 || H < 1) throw InvalidParams("episodic MDP needs S, A, H >= 1");
    Rng rng(seed);
    EpisodicMdp ep;
    ep.num_states = S;
    ep.num_actions = A;
    ep.horizon = H;
    ep.start_state = uniform_index(rng, S);
    for (std::size_t h = 0; h < H; ++h) {
        std::vector<double> P(S * A * S), R(S * A);
        for (std::size_t sa = 0; sa < S * A; ++sa) {
            detail::dirichlet_row(rng, {P.data() + sa * S, S});
            R[sa] = uniform01(rng);
        }
        ep.transitions.push_back(std::move(P));
        ep.rewards.push_back(std::move(R));
    }
    return ep;
}

// ---------------------------------------------------------------------------
// Three-state fixture

/// The fixture's two policies are "go through branch A" and "go through
/// branch B". Each branch keeps its own copy of s1 and s2 so the chosen
/// policy is remembered along the way:
///   branch A: s1 -> s0, s2 -> s1   (s1 one step away, s2 two steps)
///   branch B: s2 -> s0, s1 -> s2   (roles reversed)
/// From s0 the action picks the branch; half the mass stays at s0 and half
/// enters the branch's one-step state. Reward is 1 at s0 and 0 elsewhere.
namespace three_state {
inline constexpr std::size_t kS0 = 0;
inline constexpr std::size_t kS1A = 1;
inline constexpr std::size_t kS2A = 2;
inline constexpr std::size_t kS1B = 3;
inline constexpr std::size_t kS2B = 4;
inline constexpr std::size_t kPolicyA = 0;
inline constexpr std::size_t kPolicyB = 1;
}  // namespace three_state

inline TabularMdp make_three_state_example() {
    using namespace three_state;
    MdpTables t(5, 2);
    for (std::size_t a = 0; a < 2; ++a) {
        t.p(kS0, a, kS0) = 0.5;
        t.p(kS0, a, a == kPolicyA ? kS1A : kS2B) = 0.5;
        t.r(kS0, a) = 1.0;
        t.p(kS1A, a, kS0) = 1.0;
        t.p(kS2A, a, kS1A) = 1.0;
        t.p(kS2B, a, kS0) = 1.0;
        t.p(kS1B, a, kS2B) = 1.0;
    }
    return std::move(t).build();
}

/// Three states with action-dependent moves at every state. Mixing the two
/// actions (action 1 at s1, action 0 at s2) cycles s1 <-> s2 and never
/// reaches s0, so no frequent state exists.
inline TabularMdp make_three_state_literal() {
    MdpTables t(3, 2);
    for (std::size_t a = 0; a < 2; ++a) {
        t.p(0, a, 1) = 0.5;
        t.p(0, a, 2) = 0.5;
        t.r(0, a) = 1.0;
    }
    t.p(1, 0, 0) = 1.0;
    t.p(2, 0, 1) = 1.0;
    t.p(2, 1, 0) = 1.0;
    t.p(1, 1, 2) = 1.0;
    return std::move(t).build();
}

// ---------------------------------------------------------------------------
// Trap instance

/// Two states. At s0, action 0 ("safe") pays `safe_reward` and stays; action 1
/// ("risky") pays nothing and reaches s1 with probability `entry_prob`. At s1
/// the only action pays 1 and falls back to s0 with probability `exit_prob`.
/// The risky action is optimal, but a single sample of it mostly shows the
/// zero reward and a return to s0.
struct TrapParams {
    double safe_reward = 0.5;
    double entry_prob = 0.2;
    double exit_prob = 0.05;
};

inline TabularMdp make_trap_instance(const TrapParams& params = {}) {
    if (!(params.entry_prob > 0.0 && params.entry_prob <= 1.0) ||
        !(params.exit_prob > 0.0 && params.exit_prob <= 1.0) ||
        !(params.safe_reward >= 0.0 && params.safe_reward <= 1.0))
        throw InvalidParams("trap parameters out of range");
    MdpTables t(2, 2);
    t.p(0, 0, 0) = 1.0;
    t.r(0, 0) = params.safe_reward;
    t.p(0, 1, 1) = params.entry_prob;
    t.p(0, 1, 0) = 1.0 - params.entry_prob;
    t.r(0, 1) = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
        t.p(1, a, 0) = params.exit_prob;
        t.p(1, a, 1) = 1.0 - params.exit_prob;
        t.r(1, a) = 1.0;
    }
    return std::move(t).build();
}

}  // namespace freqstate
