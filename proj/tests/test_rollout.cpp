#include <gtest/gtest.h>

#include <cmath>

#include "valcert/rollout.hpp"
#include "valcert/tabular.hpp"

using namespace valcert;

TEST(TruncationLength, HandComputedExamples) {
  EXPECT_EQ(truncation_length(0.1, 1.0, 0.9, 1.0), 44u);
  EXPECT_EQ(truncation_length(0.5, 2.0, 0.5, 1.0), 1u);
  EXPECT_EQ(truncation_length(0.01, 1.0, 0.9, 1.0), 66u);
}

TEST(TruncationLength, DegenerateCases) {
  EXPECT_EQ(truncation_length(0.1, 1.0, 0.9, 0.0), 1u);
  EXPECT_EQ(truncation_length(0.1, 0.0, 0.9, 0.0), 1u);
  EXPECT_EQ(truncation_length(0.1, 1.0, 0.0, 5.0), 1u);
  EXPECT_THROW(truncation_length(0.1, 1.0, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(truncation_length(0.1, 0.0, 0.9, 1.0), std::invalid_argument);
  EXPECT_THROW(truncation_length(0.0, 1.0, 0.9, 1.0), std::invalid_argument);
}

// l is the smallest length whose tail bound Rmax*gamma^l/(1-gamma) is within
// epsilon*tau.
TEST(TruncationLength, MinimalLengthProperty) {
  RngStream rng(1, 0);
  for (int i = 0; i < 20000; ++i) {
    const double eps = rng.uniform(1e-4, 0.9);
    const double tau = rng.uniform(0.01, 5.0);
    const double gamma = rng.uniform(0.05, 0.999);
    const double r_max = rng.uniform(0.01, 100.0);
    const auto l = truncation_length(eps, tau, gamma, r_max);
    const double target = eps * tau;
    const double tail = r_max * std::pow(gamma, double(l)) / (1.0 - gamma);
    ASSERT_LE(tail, target * (1.0 + 1e-9)) << eps << " " << tau << " " << gamma << " " << r_max;
    if (l > 1) {
      const double prev = r_max * std::pow(gamma, double(l - 1)) / (1.0 - gamma);
      ASSERT_GT(prev, target * (1.0 - 1e-9));
    }
  }
}

TEST(TruncationPlan, ForEnvChoosesModeByDiscount) {
  const auto chain = make_random_walk_chain(7, 0.9);
  const auto p = TruncationPlan::for_env(chain.spec(), 0.1, 1.0);
  EXPECT_EQ(p.mode, TruncationMode::discounted);
  EXPECT_EQ(p.length, 44u);
  const auto bandit = make_bernoulli_bandit(0.5);
  EXPECT_EQ(TruncationPlan::for_env(bandit.spec(), 0.1, 1.0).mode, TruncationMode::episodic);
  EXPECT_THROW(TruncationPlan::episodic(make_reward_ring(5, 0.9).spec()), std::invalid_argument);
}

TEST(SampleReturn, DiscountedModeTakesExactlyLSteps) {
  const auto ring = make_reward_ring(11, 0.95);
  const auto policy = PolicySpec::uniform();
  RngStream rng(4, 0);
  for (double eps : {0.3, 0.1, 0.01}) {
    const auto plan = TruncationPlan::discounted(ring.spec(), eps, 1.0);
    const auto r = sample_return(ring, policy, ring.state(3), plan, rng);
    EXPECT_EQ(r.steps, plan.length) << eps;
  }
}

TEST(SampleReturn, StopsEarlyAtTermination) {
  const auto chain = make_deterministic_chain(5, 0.9);
  const auto plan = TruncationPlan::discounted(chain.spec(), 0.1, 1.0);
  RngStream rng(0, 0);
  const auto r = sample_return(chain, PolicySpec::fixed(1), chain.state(0), plan, rng);
  EXPECT_EQ(r.steps, 4u);
  EXPECT_NEAR(r.value, 0.729, 1e-12);
}

TEST(SampleReturn, DeterministicChainEveryReturnIdentical) {
  const auto chain = make_deterministic_chain(6, 0.9);
  const auto plan = TruncationPlan::episodic(chain.spec());
  RngStream rng(0, 0);
  for (int i = 0; i < 100; ++i)
    ASSERT_NEAR(sample_return(chain, PolicySpec::fixed(1), chain.state(0), plan, rng).value, 0.6561, 1e-12);
}

TEST(SampleReturn, TerminalStartIsZero) {
  const auto chain = make_deterministic_chain(5, 0.9);
  RngStream rng(0, 0);
  const auto r = sample_return(chain, PolicySpec::fixed(1), chain.state(4),
                               TruncationPlan::episodic(chain.spec()), rng);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.steps, 0u);
}

TEST(SampleReturn, EpisodicModeRejectsRunawayEpisodes) {
  const auto chain = make_deterministic_chain(6, 1.0);
  auto plan = TruncationPlan::episodic(chain.spec());
  plan.step_limit = 3;
  RngStream rng(0, 0);
  EXPECT_THROW(sample_return(chain, PolicySpec::fixed(1), chain.state(0), plan, rng), RolloutError);
}

TEST(SampleReturn, ZeroRewardAlwaysZero) {
  const auto env = make_zero_reward_chain(6);
  const auto plan = TruncationPlan::episodic(env.spec());
  RngStream rng(0, 0);
  for (int i = 0; i < 100; ++i)
    ASSERT_EQ(sample_return(env, PolicySpec::uniform(), env.state(2), plan, rng).value, 0.0);
}

TEST(SampleReturn, SameStreamSameTrajectory) {
  const auto ring = make_reward_ring(7, 0.9);
  const auto plan = TruncationPlan::discounted(ring.spec(), 0.05, 1.0);
  RngStream a(5, 2), b(5, 2);
  for (int i = 0; i < 50; ++i) {
    const auto x = sample_return(ring, PolicySpec::uniform(), ring.state(1), plan, a);
    const auto y = sample_return(ring, PolicySpec::uniform(), ring.state(1), plan, b);
    ASSERT_EQ(x.value, y.value);
  }
}
