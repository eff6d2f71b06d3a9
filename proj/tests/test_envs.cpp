#include <gtest/gtest.h>

#include <cmath>

#include "freqstate/envs.hpp"
#include "freqstate/oracle.hpp"
#include "oracles.hpp"

using namespace freqstate;

namespace {

/// Raw (unnormalized) queue reward for state x and admission cap c,
/// recomputed from the model description.
double raw_queue_reward(const QueueParams& q, std::size_t x, std::size_t cap) {
    double raw = 0.0;
    for (std::size_t k = 0; k < q.arrival_probs.size(); ++k) {
        const double y = static_cast<double>(x + std::min({k, cap, q.capacity - x}));
        raw += q.arrival_probs[k] *
               (q.reward_per_service * q.service_prob * y - q.holding_cost_scale * y * y);
    }
    return raw;
}

}  // namespace

TEST(Queueing, DefaultInstanceValidatesAndCertifiesEmptyQueue) {
    const EnvInstance env = make_queueing_admission({});
    EXPECT_TRUE(validate(env.mdp).ok());
    EXPECT_EQ(env.mdp.num_states(), 6u);
    const auto cert = certify_assumptions(env.mdp, 0);
    ASSERT_TRUE(cert.expected_bound);
    EXPECT_TRUE(std::isfinite(*cert.expected_bound));
}

TEST(Queueing, ZeroCapacityIsOneAbsorbingState) {
    QueueParams q;
    q.capacity = 0;
    const TabularMdp m = make_queueing_admission(q).mdp;
    ASSERT_EQ(m.num_states(), 1u);
    EXPECT_EQ(m.prob(0, 0, 0), 1.0);
    EXPECT_NEAR(solve_average_reward(m).gain, m.reward(0, 0), 1e-12);
}

TEST(Queueing, RewardsAreAnAffineImageOfTheRawModel) {
    const QueueParams q;
    const EnvInstance env = make_queueing_admission(q);
    for (std::size_t x = 0; x <= q.capacity; ++x)
        for (std::size_t a = 0; a < q.admit_limits.size(); ++a)
            EXPECT_NEAR(env.mdp.reward(x, a) * env.scaling.scale + env.scaling.offset,
                        raw_queue_reward(q, x, q.admit_limits[a]), 1e-12);
}

TEST(Queueing, ServiceIsBinomial) {
    const QueueParams q;
    const TabularMdp m = make_queueing_admission(q).mdp;
    // From 2 jobs, admitting nothing: 2 - Binomial(2, 0.5) jobs remain.
    EXPECT_NEAR(m.prob(2, 0, 2), 0.25, 1e-15);
    EXPECT_NEAR(m.prob(2, 0, 1), 0.5, 1e-15);
    EXPECT_NEAR(m.prob(2, 0, 0), 0.25, 1e-15);
}

TEST(Queueing, NotErgodicButCertified) {
    QueueParams q;
    q.arrival_probs = {0.0, 0.0, 1.0};
    q.admit_limits = {0, 2};
    const TabularMdp m = make_queueing_admission(q).mdp;
    const std::size_t M = q.capacity;
    const auto admit_all = reachable_states(m, DeterministicPolicy{std::vector<std::size_t>(M + 1, 1)}, 0);
    EXPECT_TRUE(admit_all[M]);
    const auto admit_none = reachable_states(m, DeterministicPolicy{std::vector<std::size_t>(M + 1, 0)}, 0);
    EXPECT_FALSE(admit_none[M]);
    EXPECT_NO_THROW(certify_assumptions(m, 0));
}

TEST(Queueing, RejectsBadParameters) {
    QueueParams q;
    q.arrival_probs = {0.5, 0.4};
    EXPECT_THROW(make_queueing_admission(q), InvalidParams);
    q = {};
    q.service_prob = 0.0;
    EXPECT_THROW(make_queueing_admission(q), InvalidParams);
}

TEST(Inventory, DefaultInstanceValidatesAndCertifiesEmptyStock) {
    const EnvInstance env = make_inventory_base_stock({});
    EXPECT_TRUE(validate(env.mdp).ok());
    EXPECT_EQ(env.mdp.num_states(), 5u);
    EXPECT_NO_THROW(certify_assumptions(env.mdp, 0));
}

TEST(Inventory, ZeroDemandZeroOrderIsAbsorbing) {
    InventoryParams p;
    p.demand_probs = {1.0};
    p.order_actions = {0};
    const TabularMdp m = make_inventory_base_stock(p).mdp;
    for (std::size_t x = 0; x <= p.capacity; ++x) EXPECT_EQ(m.prob(x, 0, x), 1.0);
}

TEST(Inventory, UnitDemandWithoutOrdersHitsEmptyInMOverQ) {
    // Demand of one unit with probability q and no replenishment: the stock
    // is a pure-death chain, so the hitting time of 0 from M is M / q.
    for (double q : {0.25, 0.5, 0.8}) {
        InventoryParams p;
        p.demand_probs = {1.0 - q, q};
        p.order_actions = {0};
        const TabularMdp m = make_inventory_base_stock(p).mdp;
        const auto cert = certify_assumptions(m, 0);
        EXPECT_NEAR(*cert.expected_bound, static_cast<double>(p.capacity) / q, 1e-9);
    }
}

TEST(Inventory, StatesAboveBaseStockUnreachableButCertified) {
    const InventoryParams p;
    const TabularMdp m = make_inventory_base_stock(p).mdp;
    // Order one unit only when empty: stock never exceeds one.
    DeterministicPolicy small{std::vector<std::size_t>(p.capacity + 1, 0)};
    small.action_of[0] = 1;
    const auto reach = reachable_states(m, small, 0);
    for (std::size_t x = 2; x <= p.capacity; ++x) EXPECT_FALSE(reach[x]);
    EXPECT_NO_THROW(certify_assumptions(m, 0));
}

TEST(Inventory, LastDemandEntrySellsAtItsIndex) {
    InventoryParams p;
    p.capacity = 4;
    p.demand_probs = {0.5, 0.5};
    p.order_actions = {4};
    const TabularMdp m = make_inventory_base_stock(p).mdp;
    EXPECT_NEAR(m.prob(0, 0, 3), 0.5, 1e-15);
    EXPECT_NEAR(m.prob(0, 0, 4), 0.5, 1e-15);
}

TEST(EpisodicReduction, SingleLayerIsTheEpisodeWithAResetArc) {
    const EpisodicMdp ep = make_random_episodic(4, 2, 1, 3);
    const auto red = episodic_to_average(ep);
    ASSERT_EQ(red.mdp.num_states(), 4u);
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            EXPECT_EQ(red.mdp.reward(s, a), ep.reward(1, s, a));
            EXPECT_EQ(red.mdp.prob(s, a, ep.start_state), 1.0);
        }
}

TEST(EpisodicReduction, IndexMapRoundTrips) {
    const EpisodicIndex idx{5, 3};
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t h = 1; h <= 3; ++h) {
            const std::size_t i = idx.index(s, h);
            EXPECT_EQ(idx.state(i), s);
            EXPECT_EQ(idx.layer(i), h);
        }
    EXPECT_EQ(idx.index(1, 1), 3u);
}

TEST(EpisodicReduction, GainIsFirstStepValueOverHorizon) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t S = 1 + seed % 5, H = 1 + (seed * 3) % 5;
        const EpisodicMdp ep = make_random_episodic(S, 2, H, seed);
        const auto red = episodic_to_average(ep);
        const auto V1 = oracle_ref::backward_induction(ep);
        EXPECT_NEAR(solve_average_reward(red.mdp).gain, V1[ep.start_state] / static_cast<double>(H), 1e-8);
    }
}

TEST(EpisodicReduction, CertifiedWithProbabilityOneWithinHorizon) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t H = 1 + seed % 5;
        const EpisodicMdp ep = make_random_episodic(3, 2, H, seed);
        const auto red = episodic_to_average(ep);
        const auto cert = certify_assumptions(red.mdp, red.index.index(ep.start_state, 1));
        EXPECT_NEAR(*cert.prob_lower, 1.0, 1e-12);
        EXPECT_LE(*cert.prob_horizon, H);
    }
}

TEST(EpisodicReduction, CoupledTrajectoriesCollectTheSameReward) {
    const EpisodicMdp ep = make_random_episodic(4, 3, 5, 11);
    const auto red = episodic_to_average(ep);
    Rng rng_ep(21), rng_red(21), actions(5);
    std::size_t s = ep.start_state, h = 1, i = red.index.index(s, 1);
    double total_ep = 0.0, total_red = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t a = uniform_index(actions, 3);
        total_ep += ep.reward(h, s, a);
        const double u = uniform01(rng_ep);
        if (h == ep.horizon) {
            s = ep.start_state;
            h = 1;
        } else {
            s = sample_row(ep.row(h, s, a), u);
            ++h;
        }
        const auto tr = step(red.mdp, i, a, rng_red);
        total_red += tr.reward;
        i = tr.next_state;
        ASSERT_EQ(i, red.index.index(s, h));
    }
    EXPECT_EQ(total_ep, total_red);
}

TEST(EpisodicReduction, RejectsMalformedEpisode) {
    EpisodicMdp ep = make_random_episodic(2, 2, 3, 1);
    ep.transitions.pop_back();
    EXPECT_THROW(episodic_to_average(ep), InvalidMdp);
}

TEST(RandomFrequent, UnitMassGoesStraightToStateZero) {
    const TabularMdp m = make_random_frequent(5, 2, 1.0, 3);
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t a = 0; a < 2; ++a) EXPECT_EQ(m.prob(s, a, 0), 1.0);
}

TEST(RandomFrequent, OneStepHitProbabilityAtLeastP0) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const double p0 = 0.05 + 0.03 * static_cast<double>(seed);
        const TabularMdp m = make_random_frequent(7, 3, p0, seed);
        EXPECT_TRUE(validate(m).ok());
        EXPECT_GE(min_hitting_probability(m, 0, 1), p0 - 1e-12);
    }
}

TEST(RandomFrequent, BitIdenticalForAFixedSeed) {
    const TabularMdp a = make_random_frequent(6, 3, 0.4, 42), b = make_random_frequent(6, 3, 0.4, 42);
    EXPECT_EQ(a.transition_data(), b.transition_data());
    EXPECT_EQ(a.reward_data(), b.reward_data());
    EXPECT_NE(a.transition_data(), make_random_frequent(6, 3, 0.4, 43).transition_data());
}

TEST(RandomFrequent, RejectsBadMass) {
    EXPECT_THROW(make_random_frequent(3, 2, 0.0, 1), InvalidParams);
    EXPECT_THROW(make_random_frequent(3, 2, 1.5, 1), InvalidParams);
}

TEST(ThreeState, CertificateIsTwoStepsWithCertainty) {
    const TabularMdp m = make_three_state_example();
    EXPECT_TRUE(validate(m).ok());
    const auto cert = certify_assumptions(m, three_state::kS0);
    EXPECT_EQ(*cert.prob_horizon, 2u);
    EXPECT_EQ(*cert.prob_lower, 1.0);
}

TEST(ThreeState, PolicyBReversesTheRoles) {
    using namespace three_state;
    const TabularMdp m = make_three_state_example();
    const PolicyKernel k = policy_kernel(m, DeterministicPolicy{{kPolicyB, 0, 0, 0, 0}});
    EXPECT_EQ(k.row(kS2B)[kS0], 1.0);
    EXPECT_EQ(k.row(kS1B)[kS2B], 1.0);
    EXPECT_EQ(k.row(kS0)[kS2B], 0.5);
}

TEST(ThreeState, LiteralFixtureHasNoFrequentState) {
    const TabularMdp m = make_three_state_literal();
    EXPECT_TRUE(validate(m).ok());
    EXPECT_THROW(certify_assumptions(m, 0), NoFrequentState);
}

TEST(Trap, RiskyActionIsOptimal) {
    const TrapParams tp;
    const TabularMdp m = make_trap_instance(tp);
    const PlanSolution sol = solve_average_reward(m);
    EXPECT_EQ(sol.policy.action_of[0], 1u);
    // Stationary mass on s1 is entry / (entry + exit).
    EXPECT_NEAR(sol.gain, tp.entry_prob / (tp.entry_prob + tp.exit_prob), 1e-9);
    EXPECT_NEAR(policy_gain_bias(m, DeterministicPolicy{{0, 0}}).gain, tp.safe_reward, 1e-9);
}

TEST(Trap, CertifiedAtStateZero) {
    const TrapParams tp;
    const auto cert = certify_assumptions(make_trap_instance(tp), 0);
    EXPECT_NEAR(*cert.expected_bound, 1.0 / tp.exit_prob, 1e-9);
}
