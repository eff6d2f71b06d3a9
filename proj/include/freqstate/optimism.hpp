#pragma once

// Empirical check of the optimism inequalities on a known MDP:
//   Vbar^l       >= Lbar^k Vbar^{l-k}
//   V^{t,h}      >= L^{H-h+1} Lbar^k Vbar^{l-k}
// with l - k = K j + 1 and j = max(0, floor((l - K - 1) / K)). Here Vbar^l is
// the value of V-bar when epoch l opens, which the agent keeps as V^{H+1}.

#include <cstdint>
#include <map>

#include "agent.hpp"
#include "operators.hpp"

namespace freqstate {

struct OptimismReport {
    std::uint64_t checks = 0;
    std::uint64_t violations = 0;
    std::uint64_t epoch_checks = 0;
    std::uint64_t epoch_violations = 0;
    /// Largest shortfall rhs - lhs seen (negative when every check held).
    double worst_margin = -std::numeric_limits<double>::infinity();

    double violation_fraction() const {
        const auto total = checks + epoch_checks;
        return total == 0 ? 0.0
                          : static_cast<double>(violations + epoch_violations) /
                                static_cast<double>(total);
    }
};

/// Admissible k for epoch l.
inline std::uint64_t optimism_k(std::uint64_t l, std::uint64_t K) {
    const std::uint64_t j = l >= K + 1 ? (l - K - 1) / K : 0;
    return l - (K * j + 1);
}

class OptimismMonitor {
public:
    OptimismMonitor(const TabularMdp& mdp, const OptimisticQAgent& agent, double slack = 1e-9,
                    std::uint64_t step_stride = 1)
        : mdp_(mdp), agent_(agent), slack_(slack), stride_(std::max<std::uint64_t>(1, step_stride)) {}

    /// Call after select_action and before observe, so V^h is the round's
    /// pre-update value.
    void before_observe() {
        if (agent_.epoch() != epoch_) open_epoch();
        if (step_++ % stride_ != 0) return;
        const std::size_t H = agent_.config().H, S = mdp_.num_states();
        for (std::size_t h = 1; h <= H; ++h) {
            const auto vh = agent_.v_layer(h);
            const Vector& rhs = targets_[h - 1];
            for (std::size_t s = 0; s < S; ++s) record(vh[s], rhs[s], report_.checks, report_.violations);
        }
    }

    const OptimismReport& report() const { return report_; }

private:
    void record(double lhs, double rhs, std::uint64_t& checks, std::uint64_t& violations) {
        ++checks;
        const double shortfall = rhs - lhs;
        report_.worst_margin = std::max(report_.worst_margin, shortfall);
        if (shortfall > slack_) ++violations;
    }

    void open_epoch() {
        epoch_ = agent_.epoch();
        const std::size_t H = agent_.config().H;
        const std::uint64_t K = agent_.K();
        const auto opening = agent_.v_layer(H + 1);
        Vector vbar_l(opening.begin(), opening.end());
        if ((epoch_ - 1) % K == 0) bases_[epoch_] = vbar_l;

        const std::uint64_t k = optimism_k(epoch_, K);
        const std::uint64_t base = epoch_ - k;
        if (base != cached_base_ || k < cached_k_) {
            cached_base_ = base;
            cached_k_ = 0;
            cached_ = bases_.at(base);
            // Bases older than the current one are never needed again.
            bases_.erase(bases_.begin(), bases_.find(base));
        }
        for (; cached_k_ < k; ++cached_k_) cached_ = lbar_apply(mdp_, cached_, H);

        for (std::size_t s = 0; s < vbar_l.size(); ++s)
            record(vbar_l[s], cached_[s], report_.epoch_checks, report_.epoch_violations);

        // targets_[h-1] = L^{H-h+1} W, built from h = H downwards.
        targets_.assign(H, Vector{});
        Vector cur = cached_, next;
        for (std::size_t h = H; h >= 1; --h) {
            bellman_apply_into(mdp_, cur, next);
            cur.swap(next);
            targets_[h - 1] = cur;
        }
    }

    const TabularMdp& mdp_;
    const OptimisticQAgent& agent_;
    double slack_;
    std::uint64_t stride_;
    std::uint64_t step_ = 0;
    std::uint64_t epoch_ = 0;
    std::map<std::uint64_t, Vector> bases_;
    std::uint64_t cached_base_ = 0;
    std::uint64_t cached_k_ = 0;
    Vector cached_;
    std::vector<Vector> targets_;
    OptimismReport report_;
};

}  // namespace freqstate
