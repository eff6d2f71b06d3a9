#pragma once

// Optimistic Q-learning for average-reward MDPs with a frequent state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdp.hpp"
#include "operators.hpp"

namespace freqstate {

class MismatchedAction : public Error {
public:
    using Error::Error;
};

enum class VbarSampleTiming { PostUpdate, PreUpdate };

struct AgentConfig {
    std::size_t H = 1;
    double p = 1.0;
    std::optional<double> H_star;
    double delta = 0.05;
    std::uint64_t T = 1;
    double bonus_scale = 1.0;
    bool literal_vbar_update = false;
    VbarSampleTiming vbar_timing = VbarSampleTiming::PostUpdate;

    void check() const {
        if (H < 1) throw std::invalid_argument("AgentConfig: H must be >= 1");
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("AgentConfig: p must lie in (0, 1]");
        if (H_star && !(*H_star > 0.0)) throw std::invalid_argument("AgentConfig: H_star must be > 0");
        if (!(delta > 0.0 && delta < 1.0))
            throw std::invalid_argument("AgentConfig: delta must lie in (0, 1)");
        if (T < 1) throw std::invalid_argument("AgentConfig: T must be >= 1");
        if (!(bonus_scale >= 0.0)) throw std::invalid_argument("AgentConfig: bonus_scale must be >= 0");
    }

    double span_bound() const { return H_star ? *H_star : 2.0 * static_cast<double>(H) / p; }
    double log_T() const { return std::log(static_cast<double>(T)); }

    /// K = ceil((2H/p) ln T), at least 1.
    std::uint64_t K() const {
        const double k = std::ceil(2.0 * static_cast<double>(H) / p * log_T());
        return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(k));
    }
    /// C = 2K(H+2)
    std::uint64_t C() const { return 2 * K() * (H + 2); }
    /// Epoch-count bound ceil(C S ln T).
    std::uint64_t epoch_cap(std::size_t S) const {
        return static_cast<std::uint64_t>(
            std::ceil(static_cast<double>(C()) * static_cast<double>(S) * log_T()));
    }
};

/// alpha_n = (C+1)/(C+n)
inline double learning_rate(std::uint64_t C, std::uint64_t n) {
    return static_cast<double>(C + 1) / static_cast<double>(C + n);
}

/// Weights alpha_n^i = alpha_i prod_{j=i+1..n} (1 - alpha_j), i = 1..n
/// (index 0 of the result is i = 1).
inline Vector learning_rate_weights(std::uint64_t C, std::uint64_t n) {
    Vector w(n);
    double tail = 1.0;
    for (std::uint64_t i = n; i >= 1; --i) {
        w[i - 1] = learning_rate(C, i) * tail;
        tail *= 1.0 - learning_rate(C, i);
    }
    return w;
}

struct ObserveEvents {
    bool epoch_ended = false;
    bool projected = false;
};

struct AgentCounters {
    std::vector<std::uint64_t> n_sa;
    std::vector<std::uint64_t> n_s;
    std::vector<std::uint64_t> n_prev_s;
    std::uint64_t tau = 0;
    std::uint64_t tau_prev = 0;
};

class OptimisticQAgent {
public:
    OptimisticQAgent(AgentConfig config, std::size_t num_states, std::size_t num_actions)
        : cfg_(std::move(config)), S_(num_states), A_(num_actions) {
        cfg_.check();
        if (S_ < 1 || A_ < 1) throw std::invalid_argument("agent needs S, A >= 1");
        K_ = cfg_.K();
        C_ = cfg_.C();
        log_term_ = std::log(8.0 * static_cast<double>(cfg_.H) * static_cast<double>(S_) *
                             static_cast<double>(A_) * std::pow(static_cast<double>(cfg_.T), 4.0) /
                             cfg_.delta);
        const std::size_t H = cfg_.H;
        q_.assign(H * S_ * A_, 0.0);
        v_.assign((H + 1) * S_, 0.0);
        vbar_.assign(S_, static_cast<double>(H));
        vbar_sum_.assign(S_, 0.0);
        counters_.n_sa.assign(S_ * A_, 0);
        counters_.n_s.assign(S_, 0);
        counters_.n_prev_s.assign(S_, 0);
    }

    const AgentConfig& config() const { return cfg_; }
    std::size_t num_states() const { return S_; }
    std::size_t num_actions() const { return A_; }
    std::uint64_t K() const { return K_; }
    std::uint64_t C() const { return C_; }
    std::uint64_t epoch() const { return epoch_; }
    std::uint64_t t() const { return t_; }
    const AgentCounters& counters() const { return counters_; }
    bool epoch_active() const { return epoch_ > 0 && !reset_pending_; }

    /// Q^h(s, a) for h = 1..H.
    double q(std::size_t h, std::size_t s, std::size_t a) const { return q_[qi(h, s, a)]; }
    /// V^h(s) for h = 1..H+1.
    double v(std::size_t h, std::size_t s) const { return v_[vi(h, s)]; }
    std::span<const double> v_layer(std::size_t h) const { return {v_.data() + vi(h, 0), S_}; }
    const Vector& vbar() const { return vbar_; }

    double bonus(std::uint64_t n) const {
        return cfg_.bonus_scale * (4.0 * cfg_.span_bound() + 1.0) *
               std::sqrt(4.0 * static_cast<double>(C_) * log_term_ / static_cast<double>(n + 1));
    }
    double learning_rate(std::uint64_t n) const { return freqstate::learning_rate(C_, n); }

    /// Start a new epoch: V^{H+1} takes the current V-bar, every Q^h, V^h and
    /// V-bar entry is set to max V-bar + H, and the in-epoch counters clear.
    void epoch_reset() {
        const std::size_t H = cfg_.H;
        const double init = *std::max_element(vbar_.begin(), vbar_.end()) + static_cast<double>(H);
        std::copy(vbar_.begin(), vbar_.end(), v_.begin() + static_cast<std::ptrdiff_t>(vi(H + 1, 0)));
        std::fill(q_.begin(), q_.end(), init);
        std::fill(v_.begin(), v_.begin() + static_cast<std::ptrdiff_t>(vi(H + 1, 0)), init);
        std::fill(vbar_.begin(), vbar_.end(), init);
        std::fill(vbar_sum_.begin(), vbar_sum_.end(), 0.0);
        std::fill(counters_.n_sa.begin(), counters_.n_sa.end(), 0);
        std::fill(counters_.n_s.begin(), counters_.n_s.end(), 0);
        counters_.tau = 0;
        ++epoch_;
        reset_pending_ = false;
    }

    struct Selection {
        std::size_t action;
        std::size_t h;
    };

    /// Draw h uniformly from 1..H and act greedily on Q^h (lowest index on
    /// ties). Opens the next epoch first if the previous one has ended.
    Selection select_action(std::size_t s, Rng& rng) {
        if (s >= S_) throw IndexOutOfRange("select_action: state out of range");
        if (reset_pending_) epoch_reset();
        const std::size_t h = cfg_.H == 1 ? 1 : 1 + uniform_index(rng, cfg_.H);
        const std::size_t a = greedy_action(h, s);
        pending_ = {s, a};
        return {a, h};
    }

    std::size_t greedy_action(std::size_t h, std::size_t s) const {
        const double* row = q_.data() + qi(h, s, 0);
        std::size_t best = 0;
        for (std::size_t a = 1; a < A_; ++a)
            if (row[a] > row[best]) best = a;
        return best;
    }

    ObserveEvents observe(std::size_t s, std::size_t a, double r, std::size_t s_next) {
        if (!pending_ || pending_->first != s || pending_->second != a)
            throw MismatchedAction("observe does not match the last select_action");
        if (s_next >= S_) throw IndexOutOfRange("observe: next state out of range");
        pending_.reset();
        const std::size_t H = cfg_.H;

        const std::uint64_t n = ++counters_.n_sa[s * A_ + a];
        const std::uint64_t ns = ++counters_.n_s[s];
        ++counters_.tau;
        ++t_;

        const double u_pre = cfg_.vbar_timing == VbarSampleTiming::PreUpdate ? layer_mean(s) : 0.0;

        const double alpha = learning_rate(n);
        const double b = bonus(n);
        for (std::size_t h = H; h >= 1; --h) {
            double& qv = q_[qi(h, s, a)];
            qv = (1.0 - alpha) * qv + alpha * (r + v_[vi(h + 1, s_next)] + b);
            const double* row = q_.data() + qi(h, s, 0);
            v_[vi(h, s)] = *std::max_element(row, row + A_);
        }

        const double u = cfg_.vbar_timing == VbarSampleTiming::PreUpdate ? u_pre : layer_mean(s);
        if (cfg_.literal_vbar_update) {
            const double w = 1.0 / static_cast<double>(ns);
            vbar_[s] = w * vbar_[s] + (1.0 - w) * u;
        } else {
            vbar_sum_[s] += u;
            vbar_[s] = vbar_sum_[s] / static_cast<double>(ns);
        }

        ObserveEvents ev;
        if (break_condition(s)) {
            ev.epoch_ended = true;
            if (epoch_ % K_ == 0) {
                vbar_ = project_span(vbar_, 2.0 * cfg_.span_bound());
                ev.projected = true;
            }
            counters_.n_prev_s = counters_.n_s;
            counters_.tau_prev = counters_.tau;
            reset_pending_ = true;
        }
        return ev;
    }

    /// pi(a|s) = (1/H) #{h : a is greedy for Q^h at s}
    RandomizedPolicy snapshot_policy() const {
        std::vector<double> probs(S_ * A_, 0.0);
        const double w = 1.0 / static_cast<double>(cfg_.H);
        for (std::size_t s = 0; s < S_; ++s)
            for (std::size_t h = 1; h <= cfg_.H; ++h) probs[s * A_ + greedy_action(h, s)] += w;
        // Repeated addition of 1/H can leave a row a few ulps away from one.
        for (std::size_t s = 0; s < S_; ++s) renormalize_row({probs.data() + s * A_, A_});
        return RandomizedPolicy(S_, A_, std::move(probs));
    }

    // Checkpoint access.
    const std::vector<double>& q_data() const { return q_; }
    const std::vector<double>& v_data() const { return v_; }
    const std::vector<double>& vbar_sum() const { return vbar_sum_; }
    bool reset_pending() const { return reset_pending_; }

    struct Snapshot {
        std::uint64_t epoch;
        std::uint64_t t;
        bool reset_pending;
        std::vector<double> q, v, vbar, vbar_sum;
        AgentCounters counters;
    };

    void restore(const Snapshot& snap) {
        const std::size_t H = cfg_.H;
        if (snap.q.size() != H * S_ * A_ || snap.v.size() != (H + 1) * S_ ||
            snap.vbar.size() != S_ || snap.vbar_sum.size() != S_ ||
            snap.counters.n_sa.size() != S_ * A_ || snap.counters.n_s.size() != S_ ||
            snap.counters.n_prev_s.size() != S_)
            throw std::invalid_argument("agent snapshot does not match the agent's shape");
        epoch_ = snap.epoch;
        t_ = snap.t;
        reset_pending_ = snap.reset_pending;
        q_ = snap.q;
        v_ = snap.v;
        vbar_ = snap.vbar;
        vbar_sum_ = snap.vbar_sum;
        counters_ = snap.counters;
        pending_.reset();
    }

private:
    std::size_t qi(std::size_t h, std::size_t s, std::size_t a) const {
        return ((h - 1) * S_ + s) * A_ + a;
    }
    std::size_t vi(std::size_t h, std::size_t s) const { return (h - 1) * S_ + s; }

    double layer_mean(std::size_t s) const {
        double acc = 0.0;
        for (std::size_t h = 1; h <= cfg_.H; ++h) acc += v_[vi(h, s)];
        return acc / static_cast<double>(cfg_.H);
    }

    /// N(s) >= max(1, (1 + 1/C) N_prev(s)) for the state just visited, or the
    /// same growth test on the epoch length. Compared in integers.
    bool break_condition(std::size_t s) const {
        const auto grown = [this](std::uint64_t now, std::uint64_t prev) {
            return now >= 1 && now * C_ >= (C_ + 1) * prev;
        };
        return grown(counters_.n_s[s], counters_.n_prev_s[s]) ||
               grown(counters_.tau, counters_.tau_prev);
    }

    static void renormalize_row(std::span<double> row) {
        double sum = 0.0;
        for (double x : row) sum += x;
        for (double& x : row) x /= sum;
    }

    AgentConfig cfg_;
    std::size_t S_, A_;
    std::uint64_t K_ = 1, C_ = 1;
    double log_term_ = 0.0;
    std::vector<double> q_, v_, vbar_, vbar_sum_;
    AgentCounters counters_;
    std::uint64_t epoch_ = 0;
    std::uint64_t t_ = 0;
    bool reset_pending_ = true;
    std::optional<std::pair<std::size_t, std::size_t>> pending_;
};

}  // namespace freqstate
