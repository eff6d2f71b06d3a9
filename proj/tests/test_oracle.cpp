#include <gtest/gtest.h>

#include <cmath>

#include "freqstate/envs.hpp"
#include "freqstate/oracle.hpp"
#include "oracles.hpp"

using namespace freqstate;

namespace {

TabularMdp swap_cycle() {
    MdpTables t(2, 1);
    t.p(0, 0, 1) = 1.0;
    t.p(1, 0, 0) = 1.0;
    t.r(0, 0) = 1.0;
    return std::move(t).build();
}

/// Every action jumps to s0 with probability 0.5 and stays otherwise.
TabularMdp half_jump() {
    MdpTables t(2, 2);
    for (std::size_t a = 0; a < 2; ++a) {
        t.p(0, a, 0) = 1.0;
        t.p(1, a, 0) = 0.5;
        t.p(1, a, 1) = 0.5;
    }
    return std::move(t).build();
}

/// Deterministic chain s2 -> s1 -> s0 under every action.
TabularMdp chain3() {
    MdpTables t(3, 2);
    for (std::size_t a = 0; a < 2; ++a) {
        t.p(0, a, 0) = 1.0;
        t.p(1, a, 0) = 1.0;
        t.p(2, a, 1) = 1.0;
    }
    return std::move(t).build();
}

void bellman_residual_check(const TabularMdp& m, const PlanSolution& sol, double tol) {
    Vector lv = bellman_apply(m, sol.bias);
    for (std::size_t s = 0; s < lv.size(); ++s) lv[s] -= sol.bias[s] + sol.gain;
    EXPECT_LE(span(lv), tol);
}

/// Probability of reaching s0 within k steps by enumerating all paths of a
/// stationary deterministic policy.
double path_enumeration(const TabularMdp& m, const std::vector<std::size_t>& pi, std::size_t s0,
                        std::size_t s, std::size_t k) {
    if (s == s0) return 1.0;
    if (k == 0) return 0.0;
    double total = 0.0;
    for (std::size_t n = 0; n < m.num_states(); ++n) {
        const double p = m.prob(s, pi[s], n);
        if (p > 0.0) total += p * path_enumeration(m, pi, s0, n, k - 1);
    }
    return total;
}

}  // namespace

TEST(SolveAverageReward, SingleStateChain) {
    MdpTables t(1, 1);
    t.p(0, 0, 0) = 1.0;
    t.r(0, 0) = 0.3;
    const PlanSolution sol = solve_average_reward(std::move(t).build());
    EXPECT_NEAR(sol.gain, 0.3, 1e-12);
    EXPECT_EQ(sol.bias, Vector{0.0});
}

TEST(SolveAverageReward, SwapCycleHasHalfGain) {
    const PlanSolution sol = solve_average_reward(swap_cycle());
    EXPECT_NEAR(sol.gain, 0.5, 1e-9);
    // The 2x2 system g + V0 = 1 + V1, g + V1 = V0 gives V0 - V1 = 1/2.
    EXPECT_NEAR(sol.bias[0], 0.5, 1e-9);
    EXPECT_NEAR(sol.bias[1], 0.0, 1e-9);
    bellman_residual_check(swap_cycle(), sol, 1e-9);
    const auto ref = oracle_ref::evaluate_policy(swap_cycle(), {0, 0});
    EXPECT_NEAR(ref.bias[0], 0.5, 1e-12);
}

TEST(SolveAverageReward, MatchesExhaustivePolicySearch) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const TabularMdp m = make_random_frequent(2 + seed % 5, 1 + seed % 3, 0.3, seed);
        const PlanSolution sol = solve_average_reward(m);
        EXPECT_NEAR(sol.gain, oracle_ref::best_gain(m), 1e-8) << "seed " << seed;
        bellman_residual_check(m, sol, 1e-8);
    }
}

TEST(SolveAverageReward, BiasMatchesLinearSolveOfOptimalPolicy) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const TabularMdp m = make_random_frequent(6, 2, 0.25, 100 + seed);
        const PlanSolution sol = solve_average_reward(m);
        const auto ref = oracle_ref::evaluate_policy(m, sol.policy.action_of);
        EXPECT_NEAR(ref.gain, sol.gain, 1e-9);
        for (std::size_t s = 0; s < 6; ++s) EXPECT_NEAR(ref.bias[s], sol.bias[s], 1e-7);
    }
}

TEST(SolveAverageReward, PeriodicChainNeedsDamping) {
    const PlanSolution sol = solve_average_reward(make_three_state_example());
    EXPECT_NEAR(sol.gain, 2.0 / 3.0, 1e-9);
}

TEST(SolveAverageReward, EpisodicReductionGainIsFirstStepValueOverHorizon) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const EpisodicMdp ep = make_random_episodic(3, 2, 4, seed);
        const auto red = episodic_to_average(ep);
        const PlanSolution sol = solve_average_reward(red.mdp);
        const auto V1 = oracle_ref::backward_induction(ep);
        EXPECT_NEAR(sol.gain, V1[ep.start_state] / 4.0, 1e-8);
    }
}

TEST(PolicyGainBias, AgreesWithSolverOnOptimalPolicy) {
    const TabularMdp m = make_random_frequent(7, 3, 0.2, 5);
    const SolverOptions opt;
    const PlanSolution sol = solve_average_reward(m, opt);
    EXPECT_NEAR(policy_gain_bias(m, sol.policy, opt).gain, sol.gain, 2 * opt.tol);
}

TEST(PolicyGainBias, SingleActionMatchesSolverExactly) {
    const TabularMdp m = make_random_frequent(5, 1, 0.3, 8);
    const PlanSolution sol = solve_average_reward(m);
    const PolicyEvaluation ev = policy_gain_bias(m, DeterministicPolicy{{0, 0, 0, 0, 0}});
    EXPECT_EQ(ev.gain, sol.gain);
    EXPECT_EQ(ev.bias, sol.bias);
}

TEST(PolicyGainBias, MatchesLinearSolveForEveryPolicy) {
    const TabularMdp m = make_random_frequent(4, 3, 0.3, 12);
    oracle_ref::for_each_policy(4, 3, [&](const std::vector<std::size_t>& pi) {
        const auto ref = oracle_ref::evaluate_policy(m, pi);
        const auto ev = policy_gain_bias(m, DeterministicPolicy{pi});
        EXPECT_NEAR(ev.gain, ref.gain, 1e-9);
        for (std::size_t s = 0; s < 4; ++s) EXPECT_NEAR(ev.bias[s], ref.bias[s], 1e-7);
    });
}

TEST(PolicyGainBias, RandomizedPolicyMixesKernels) {
    const TabularMdp m = make_random_frequent(3, 2, 0.4, 3);
    const RandomizedPolicy mix(3, 2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
    // The mixture's kernel as a one-action MDP.
    MdpTables t(3, 1);
    for (std::size_t s = 0; s < 3; ++s) {
        t.r(s, 0) = 0.5 * (m.reward(s, 0) + m.reward(s, 1));
        for (std::size_t n = 0; n < 3; ++n) t.p(s, 0, n) = 0.5 * (m.prob(s, 0, n) + m.prob(s, 1, n));
    }
    const auto ref = oracle_ref::evaluate_policy(std::move(t).build(), {0, 0, 0});
    EXPECT_NEAR(policy_gain_bias(m, mix).gain, ref.gain, 1e-9);
}

TEST(PolicyGainBias, BiasSpanBoundedByTwiceHittingTime) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const TabularMdp m = make_random_frequent(4, 3, 0.2 + 0.03 * static_cast<double>(seed), seed);
        const auto cert = certify_assumptions(m, 0);
        const double E = *cert.expected_bound;
        oracle_ref::for_each_policy(4, 3, [&](const std::vector<std::size_t>& pi) {
            EXPECT_LE(span(policy_gain_bias(m, DeterministicPolicy{pi}).bias), 2.0 * E + 1e-8);
        });
        EXPECT_LE(span(solve_average_reward(m).bias),
                  2.0 * static_cast<double>(*cert.prob_horizon) / *cert.prob_lower + 1e-8);
    }
}

TEST(HittingTime, HalfJumpTakesTwoSteps) {
    const auto h = expected_hitting_times(half_jump(), 0);
    ASSERT_TRUE(h);
    EXPECT_NEAR((*h)[1], 2.0, 1e-9);
    EXPECT_EQ((*h)[0], 0.0);
}

TEST(HittingTime, HalfJumpAgreesWithMonteCarlo) {
    Rng rng(99);
    const TabularMdp m = half_jump();
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
        std::size_t s = 1;
        int steps = 0;
        while (s != 0) {
            s = step(m, s, 0, rng).next_state;
            ++steps;
        }
        sum += steps;
        sq += static_cast<double>(steps) * steps;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    EXPECT_NEAR(*max_expected_hitting_time(m, 0), mean, 3.0 * se);
}

TEST(HittingTime, DeterministicChain) {
    const auto h = expected_hitting_times(chain3(), 0);
    ASSERT_TRUE(h);
    EXPECT_NEAR((*h)[1], 1.0, 1e-12);
    EXPECT_NEAR((*h)[2], 2.0, 1e-12);
    EXPECT_NEAR(*max_expected_hitting_time(chain3(), 0), 2.0, 1e-12);
}

TEST(HittingTime, AvoidableStateDiverges) {
    MdpTables t(2, 2);
    t.p(0, 0, 0) = 1.0;
    t.p(0, 1, 0) = 1.0;
    t.p(1, 0, 0) = 1.0;
    t.p(1, 1, 1) = 1.0;  // self-loop that never reaches s0
    EXPECT_FALSE(max_expected_hitting_time(std::move(t).build(), 0));
    EXPECT_FALSE(max_expected_hitting_time(make_three_state_literal(), 0));
}

TEST(HittingTime, WorstCaseMatchesExhaustiveLinearSolves) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const TabularMdp m = make_random_frequent(4, 3, 0.15, 300 + seed);
        double worst = 0.0;
        oracle_ref::for_each_policy(4, 3, [&](const std::vector<std::size_t>& pi) {
            for (double x : oracle_ref::hitting_times(m, pi, 0)) worst = std::max(worst, x);
        });
        EXPECT_NEAR(*max_expected_hitting_time(m, 0), worst, 1e-9 * std::max(1.0, worst));
    }
}

TEST(HittingTime, AdversarialPolicyAgreesWithMonteCarlo) {
    const TabularMdp m = make_random_frequent(4, 2, 0.2, 77);
    // Adversarial policy: the one maximizing the linear-solve hitting time from state 3.
    std::vector<std::size_t> worst_pi;
    double worst = -1.0;
    oracle_ref::for_each_policy(4, 2, [&](const std::vector<std::size_t>& pi) {
        const double h = oracle_ref::hitting_times(m, pi, 0)[3];
        if (h > worst) {
            worst = h;
            worst_pi = pi;
        }
    });
    Rng rng(5);
    const int n = 50000;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
        std::size_t s = 3;
        int steps = 0;
        while (s != 0) {
            s = step(m, s, worst_pi[s], rng).next_state;
            ++steps;
        }
        sum += steps;
        sq += static_cast<double>(steps) * steps;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    EXPECT_NEAR((*expected_hitting_times(m, 0))[3], mean, 3.0 * se);
}

TEST(HittingProbability, OneStepBoundFromForcedMass) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const double p0 = 0.1 + 0.04 * static_cast<double>(seed);
        EXPECT_GE(min_hitting_probability(make_random_frequent(6, 3, p0, seed), 0, 1), p0 - 1e-12);
    }
}

TEST(HittingProbability, ThreeStateFixtureAtHorizonTwo) {
    EXPECT_EQ(min_hitting_probability(make_three_state_example(), 0, 2), 1.0);
    EXPECT_EQ(certified_probability(make_three_state_example(), 0, 2), 1.0);
}

TEST(HittingProbability, HalfJumpHorizonTwoMatchesPathEnumeration) {
    const TabularMdp m = half_jump();
    EXPECT_NEAR(min_hitting_probability(m, 0, 2), 0.75, 1e-15);
    EXPECT_NEAR(path_enumeration(m, {0, 0}, 0, 1, 2), 0.75, 1e-15);
}

TEST(HittingProbability, MatchesForwardPropagationOverMarkovPolicies) {
    // With two states besides s0 and two actions, enumerate every Markov
    // policy of length k and take the minimum forward-propagated probability.
    const TabularMdp m = make_random_frequent(3, 2, 0.2, 4);
    const std::size_t k = 3;
    const auto profile = hitting_probability_profile(m, 0, k);
    for (std::size_t start = 1; start < 3; ++start) {
        double worst = 1.0;
        oracle_ref::for_each_policy(3 * k, 2, [&](const std::vector<std::size_t>& flat) {
            std::vector<std::vector<std::size_t>> pi(k, std::vector<std::size_t>(3));
            for (std::size_t t = 0; t < k; ++t)
                for (std::size_t s = 0; s < 3; ++s) pi[t][s] = flat[t * 3 + s];
            worst = std::min(worst, oracle_ref::forward_hit_probability(m, pi, 0, start, k));
        });
        EXPECT_NEAR(profile[k][start], worst, 1e-12);
    }
}

TEST(HittingProbability, NondecreasingInHorizon) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const TabularMdp m = make_random_frequent(5, 2, 0.1, seed);
        double prev = 0.0;
        for (std::size_t k = 1; k <= 30; ++k) {
            const double p = min_hitting_probability(m, 0, k);
            EXPECT_GE(p, prev);
            prev = p;
        }
    }
}

TEST(HittingProbability, RejectsZeroHorizon) {
    EXPECT_THROW(min_hitting_probability(half_jump(), 0, 0), std::invalid_argument);
}

TEST(Certify, RandomFrequentInstanceCertifiesStateZero) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const double p0 = 0.2 + 0.035 * static_cast<double>(seed);
        const TabularMdp m = make_random_frequent(5, 3, p0, seed);
        const auto cert = certify_assumptions(m, 0);
        EXPECT_EQ(cert.frequent_state, 0u);
        ASSERT_TRUE(cert.prob_lower);
        // The certificate maximizes p/H, so it can only beat (1, p0).
        EXPECT_GE(*cert.prob_lower / static_cast<double>(*cert.prob_horizon), p0 - 1e-12);
    }
}

TEST(Certify, HittingTimeAndProbabilityBoundsAgree) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const TabularMdp m = make_random_frequent(2 + seed % 7, 1 + seed % 3, 0.2 + 0.014 * static_cast<double>(seed), seed);
        const auto cert = certify_assumptions(m, 0);
        const double H = static_cast<double>(*cert.prob_horizon), p = *cert.prob_lower;
        EXPECT_LE(*max_expected_hitting_time(m, 0), H / p + 1e-9);
        const auto twice = static_cast<std::size_t>(2.0 * std::ceil(*cert.expected_bound));
        EXPECT_GE(min_hitting_probability(m, 0, twice), 0.5 - 1e-9);
    }
}

TEST(Certify, ThreeStateFixture) {
    const auto cert = certify_assumptions(make_three_state_example(), 0);
    EXPECT_EQ(*cert.prob_horizon, 2u);
    EXPECT_EQ(*cert.prob_lower, 1.0);
    EXPECT_NEAR(*cert.expected_bound, 2.0, 1e-12);
}

TEST(Certify, NoFrequentStateOnAvoidableFixture) {
    EXPECT_THROW(certify_assumptions(make_three_state_literal(), 0), NoFrequentState);
    MdpTables t(2, 1);
    t.p(0, 0, 0) = 1.0;
    t.p(1, 0, 1) = 1.0;
    EXPECT_THROW(certify_assumptions(std::move(t).build()), NoFrequentState);
}

TEST(Certify, ScanPicksSmallestExpectedHittingTime) {
    const auto cert = certify_assumptions(chain3());
    EXPECT_EQ(cert.frequent_state, 0u);
    EXPECT_NEAR(*cert.expected_bound, 2.0, 1e-12);
}
