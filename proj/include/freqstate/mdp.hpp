#pragma once

// Finite MDP representation, validation, sampling and policy algebra.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace freqstate {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

/// Tolerance used for row-stochasticity checks throughout the library.
inline constexpr double kStochasticTol = 1e-12;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IndexOutOfRange : public Error {
public:
    using Error::Error;
};

class InvalidMdp : public Error {
public:
    using Error::Error;
};

/// Uniform double in [0, 1) built from the top 53 bits of one generator draw.
/// Independent of the standard library's distribution implementations, so a
/// seeded trajectory is reproducible across toolchains.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return static_cast<std::size_t>(x % bound);
}

/// Inverse-CDF draw from a probability row using a single uniform.
inline std::size_t sample_row(std::span<const double> row, double u) {
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (row[i] <= 0.0) continue;
        cum += row[i];
        last_positive = i;
        if (u < cum) return i;
    }
    return last_positive;  // u landed in the rounding gap above the row sum
}

inline double span(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("span of an empty vector");
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

inline double span_of_difference(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("span_of_difference: size mismatch");
    double lo = a[0] - b[0], hi = lo;
    for (std::size_t i = 1; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return hi - lo;
}

/// Dense finite MDP: transition(s, a, s') and mean reward R(s, a).
/// Immutable once constructed; share freely across threads.
class TabularMdp {
public:
    TabularMdp() = default;

    TabularMdp(std::size_t num_states, std::size_t num_actions, std::vector<double> transition,
               std::vector<double> reward)
        : num_states_(num_states), num_actions_(num_actions),
          transition_(std::move(transition)), reward_(std::move(reward)) {
        if (num_states_ == 0 || num_actions_ == 0)
            throw InvalidMdp("MDP needs at least one state and one action");
        if (transition_.size() != num_states_ * num_actions_ * num_states_)
            throw InvalidMdp("transition tensor has the wrong size");
        if (reward_.size() != num_states_ * num_actions_)
            throw InvalidMdp("reward table has the wrong size");
    }

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return num_actions_; }

    std::span<const double> row(std::size_t s, std::size_t a) const {
        return {transition_.data() + (s * num_actions_ + a) * num_states_, num_states_};
    }
    double prob(std::size_t s, std::size_t a, std::size_t next) const {
        return transition_[(s * num_actions_ + a) * num_states_ + next];
    }
    double reward(std::size_t s, std::size_t a) const { return reward_[s * num_actions_ + a]; }

    /// R(s, a) + P_{s,a} . v
    double q_value(std::size_t s, std::size_t a, std::span<const double> v) const {
        const auto r = row(s, a);
        double acc = reward(s, a);
        for (std::size_t n = 0; n < num_states_; ++n) acc += r[n] * v[n];
        return acc;
    }

    const std::vector<double>& transition_data() const { return transition_; }
    const std::vector<double>& reward_data() const { return reward_; }

    void check_indices(std::size_t s, std::size_t a) const {
        if (s >= num_states_ || a >= num_actions_) {
            std::ostringstream os;
            os << "state/action (" << s << ", " << a << ") out of range for S=" << num_states_
               << ", A=" << num_actions_;
            throw IndexOutOfRange(os.str());
        }
    }

private:
    std::size_t num_states_ = 0;
    std::size_t num_actions_ = 0;
    std::vector<double> transition_;
    std::vector<double> reward_;
};

/// Mutable scratch tables used by the environment constructors.
struct MdpTables {
    std::size_t S = 0;
    std::size_t A = 0;
    std::vector<double> P;
    std::vector<double> R;

    MdpTables(std::size_t num_states, std::size_t num_actions)
        : S(num_states), A(num_actions), P(num_states * num_actions * num_states, 0.0),
          R(num_states * num_actions, 0.0) {}

    double& p(std::size_t s, std::size_t a, std::size_t next) { return P[(s * A + a) * S + next]; }
    double& r(std::size_t s, std::size_t a) { return R[s * A + a]; }

    TabularMdp build() && { return TabularMdp(S, A, std::move(P), std::move(R)); }
};

// ---------------------------------------------------------------------------
// Validation

struct ValidationIssue {
    enum class Kind { RowNotStochastic, NegativeProbability, RewardOutOfRange, NonFinite };
    Kind kind;
    std::size_t state;
    std::size_t action;
    /// RowNotStochastic: 1 - row sum. RewardOutOfRange: the offending reward.
    double value;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const { return issues.empty(); }

    std::string describe() const {
        std::ostringstream os;
        for (const auto& i : issues) {
            os << "(" << i.state << "," << i.action << "): ";
            switch (i.kind) {
            case ValidationIssue::Kind::RowNotStochastic: os << "RowNotStochastic deficit="; break;
            case ValidationIssue::Kind::NegativeProbability: os << "NegativeProbability value="; break;
            case ValidationIssue::Kind::RewardOutOfRange: os << "RewardOutOfRange value="; break;
            case ValidationIssue::Kind::NonFinite: os << "NonFinite value="; break;
            }
            os << i.value << "\n";
        }
        return os.str();
    }
};

inline ValidationReport validate(const TabularMdp& mdp) {
    using Kind = ValidationIssue::Kind;
    ValidationReport report;
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
        for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
            const auto row = mdp.row(s, a);
            double sum = 0.0;
            bool finite = true;
            for (double p : row) {
                if (!std::isfinite(p)) {
                    finite = false;
                    report.issues.push_back({Kind::NonFinite, s, a, p});
                    break;
                }
                if (p < 0.0) report.issues.push_back({Kind::NegativeProbability, s, a, p});
                sum += p;
            }
            if (finite && std::abs(1.0 - sum) > kStochasticTol)
                report.issues.push_back({Kind::RowNotStochastic, s, a, 1.0 - sum});
            const double r = mdp.reward(s, a);
            if (!std::isfinite(r))
                report.issues.push_back({Kind::NonFinite, s, a, r});
            else if (r < 0.0 || r > 1.0)
                report.issues.push_back({Kind::RewardOutOfRange, s, a, r});
        }
    }
    return report;
}

inline void require_valid(const TabularMdp& mdp) {
    const auto report = validate(mdp);
    if (!report.ok()) throw InvalidMdp("invalid MDP:\n" + report.describe());
}

// ---------------------------------------------------------------------------
// Simulation

enum class RewardMode { Mean, Bernoulli };

struct Transition {
    std::size_t next_state;
    double reward;
};

/// One environment step. Exactly one uniform is consumed for the transition,
/// plus one more for the reward in Bernoulli mode.
inline Transition step(const TabularMdp& mdp, std::size_t s, std::size_t a, Rng& rng,
                       RewardMode mode = RewardMode::Mean) {
    mdp.check_indices(s, a);
    const std::size_t next = sample_row(mdp.row(s, a), uniform01(rng));
    double r = mdp.reward(s, a);
    if (mode == RewardMode::Bernoulli) r = uniform01(rng) < r ? 1.0 : 0.0;
    return {next, r};
}

// ---------------------------------------------------------------------------
// Policies

struct DeterministicPolicy {
    std::vector<std::size_t> action_of;

    std::size_t operator()(std::size_t s) const { return action_of[s]; }
    bool operator==(const DeterministicPolicy&) const = default;
};

/// Row-major S x A action distribution.
class RandomizedPolicy {
public:
    RandomizedPolicy() = default;
    RandomizedPolicy(std::size_t num_states, std::size_t num_actions, std::vector<double> probs)
        : num_states_(num_states), num_actions_(num_actions), probs_(std::move(probs)) {
        if (probs_.size() != num_states_ * num_actions_)
            throw std::invalid_argument("RandomizedPolicy: table has the wrong size");
        for (std::size_t s = 0; s < num_states_; ++s) {
            double sum = 0.0;
            for (double p : dist(s)) {
                if (p < 0.0) throw std::invalid_argument("RandomizedPolicy: negative probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > kStochasticTol)
                throw std::invalid_argument("RandomizedPolicy: row does not sum to one");
        }
    }

    static RandomizedPolicy from_deterministic(const DeterministicPolicy& det, std::size_t num_actions) {
        std::vector<double> probs(det.action_of.size() * num_actions, 0.0);
        for (std::size_t s = 0; s < det.action_of.size(); ++s) {
            if (det.action_of[s] >= num_actions)
                throw IndexOutOfRange("deterministic policy action out of range");
            probs[s * num_actions + det.action_of[s]] = 1.0;
        }
        return RandomizedPolicy(det.action_of.size(), num_actions, std::move(probs));
    }

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return num_actions_; }
    std::span<const double> dist(std::size_t s) const {
        return {probs_.data() + s * num_actions_, num_actions_};
    }
    double prob(std::size_t s, std::size_t a) const { return probs_[s * num_actions_ + a]; }
    const std::vector<double>& data() const { return probs_; }

    std::size_t sample(std::size_t s, Rng& rng) const { return sample_row(dist(s), uniform01(rng)); }

    bool operator==(const RandomizedPolicy&) const = default;

private:
    std::size_t num_states_ = 0;
    std::size_t num_actions_ = 0;
    std::vector<double> probs_;
};

/// Reward vector r_pi and row-major transition matrix P_pi of a fixed policy.
struct PolicyKernel {
    std::size_t num_states = 0;
    Vector reward;
    std::vector<double> transition;

    std::span<const double> row(std::size_t s) const {
        return {transition.data() + s * num_states, num_states};
    }
};

inline PolicyKernel policy_kernel(const TabularMdp& mdp, const RandomizedPolicy& policy) {
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    if (policy.num_states() != S || policy.num_actions() != A)
        throw std::invalid_argument("policy_kernel: policy shape does not match the MDP");
    PolicyKernel k{S, Vector(S, 0.0), std::vector<double>(S * S, 0.0)};
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            const double w = policy.prob(s, a);
            if (w == 0.0) continue;
            k.reward[s] += w * mdp.reward(s, a);
            const auto r = mdp.row(s, a);
            for (std::size_t n = 0; n < S; ++n) k.transition[s * S + n] += w * r[n];
        }
    }
    return k;
}

inline PolicyKernel policy_kernel(const TabularMdp& mdp, const DeterministicPolicy& policy) {
    return policy_kernel(mdp, RandomizedPolicy::from_deterministic(policy, mdp.num_actions()));
}

/// States reachable from `start` in the chain induced by a deterministic policy.
inline std::vector<bool> reachable_states(const TabularMdp& mdp, const DeterministicPolicy& policy,
                                          std::size_t start) {
    std::vector<bool> seen(mdp.num_states(), false);
    std::vector<std::size_t> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        const auto r = mdp.row(s, policy(s));
        for (std::size_t n = 0; n < r.size(); ++n) {
            if (r[n] > 0.0 && !seen[n]) {
                seen[n] = true;
                stack.push_back(n);
            }
        }
    }
    return seen;
}

}  // namespace freqstate
