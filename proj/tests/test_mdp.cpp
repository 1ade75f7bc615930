#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "valcert/benchmarks.hpp"
#include "valcert/mdp.hpp"
#include "valcert/rng.hpp"
#include "valcert/tabular.hpp"

using namespace valcert;

TEST(RngStream, SamePairReproducesSequence) {
  RngStream a(42, 3), b(42, 3);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.engine()(), b.engine()());
}

TEST(RngStream, DistinctPairsDiffer) {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t seed = 0; seed < 8; ++seed)
    for (std::uint64_t idx = 0; idx < 8; ++idx) firsts.insert(RngStream(seed, idx).engine()());
  firsts.insert(RngStream(0, kStateSamplerStream).engine()());
  EXPECT_EQ(firsts.size(), 65u);
}

TEST(RngStream, NeighbouringStreamsAreUncorrelated) {
  RngStream a(1, 0), b(1, 1);
  const int n = 100000;
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a.uniform(), y = b.uniform();
    sa += x, sb += y, sab += x * y, saa += x * x, sbb += y * y;
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
  EXPECT_LT(std::abs(corr), 4.0 / std::sqrt(n));
}

TEST(EnvSpec, RejectsVmaxAboveDiscountedBound) {
  EnvSpec s;
  s.id = "x";
  s.gamma = 0.5;
  s.r_max = 1.0;
  s.v_max = 2.0;
  EXPECT_NO_THROW(s.validate());
  s.v_max = 2.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(EnvStep, ChainStepIntoTerminalPaysReward) {
  const auto chain = make_deterministic_chain(5, 0.9);
  RngStream rng(0, 0);
  const auto r = chain.step(chain.state(3), 1, rng);
  EXPECT_EQ(TabularMdp::index_of(r.next), 4u);
  EXPECT_TRUE(r.next.terminal);
  EXPECT_DOUBLE_EQ(r.reward, 1.0);
}

TEST(EnvStep, SteppingTerminalStateIsContractViolation) {
  const auto chain = make_deterministic_chain(5, 0.9);
  RngStream rng(0, 0);
  EXPECT_THROW(chain.step(chain.state(4), 1, rng), ContractViolation);
  MountainCar mc;
  EXPECT_THROW(mc.step(mc.make_state(0.55, 0.0), 1, rng), ContractViolation);
}

TEST(EnvStep, ActionOutOfRangeIsContractViolation) {
  MountainCar mc;
  RngStream rng(0, 0);
  EXPECT_THROW(mc.step(mc.make_state(-0.5, 0.0), 3, rng), ContractViolation);
}

TEST(MountainCar, ReachingGoalTerminatesWithMinusOne) {
  MountainCar mc;
  RngStream rng(0, 0);
  const auto r = mc.step(mc.make_state(0.49, 0.07), 2, rng);
  EXPECT_GE(r.next.coords[0], 0.5);
  EXPECT_TRUE(r.next.terminal);
  EXPECT_DOUBLE_EQ(r.reward, -1.0);
}

TEST(MountainCar, LeftWallStopsTheCar) {
  MountainCar mc;
  RngStream rng(0, 0);
  const auto r = mc.step(mc.make_state(-1.2, -0.05), 0, rng);
  EXPECT_DOUBLE_EQ(r.next.coords[0], -1.2);
  EXPECT_DOUBLE_EQ(r.next.coords[1], 0.0);
}

TEST(MountainCar, EpisodeCapTerminates) {
  MountainCar mc;
  RngStream rng(0, 0);
  State s = mc.make_state(-0.5, 0.0);
  int steps = 0;
  while (!s.terminal) {
    s = mc.step(s, 1, rng).next;
    ++steps;
  }
  EXPECT_EQ(steps, 100);
}

TEST(PuddleWorld, DepthIsZeroFarFromPuddlesAndPositiveInside) {
  EXPECT_DOUBLE_EQ(PuddleWorld::puddle_depth(0.9, 0.1), 0.0);
  EXPECT_NEAR(PuddleWorld::puddle_depth(0.3, 0.75), 0.1, 1e-12);
  EXPECT_NEAR(PuddleWorld::puddle_depth(0.3, 0.7), 0.05, 1e-12);
  // Where the capsules overlap both depths add up.
  EXPECT_NEAR(PuddleWorld::puddle_depth(0.45, 0.75), 0.2, 1e-12);
}

TEST(PuddleWorld, GoalCornerIsTerminal) {
  PuddleWorld pw;
  EXPECT_TRUE(pw.make_state(0.96, 0.97).terminal);
  EXPECT_FALSE(pw.make_state(0.96, 0.5).terminal);
}

template <class E>
void fuzz_rewards_and_episodes(const E& env, const PolicySpec& policy, std::size_t total_steps) {
  const auto& spec = env.spec();
  RngStream rng(11, 0);
  std::size_t steps = 0;
  double max_abs_reward = 0.0;
  while (steps < total_steps) {
    State s = env.sample_state(rng);
    double ret = 0.0;
    std::uint32_t len = 0;
    while (!s.terminal) {
      ASSERT_TRUE(env.in_bounds(s));
      const auto a = policy.sample(s, spec.action_count, rng);
      const auto r = env.step(s, a, rng);
      max_abs_reward = std::max(max_abs_reward, std::abs(r.reward));
      ret += r.reward;
      s = r.next;
      ++len;
      ++steps;
    }
    ASSERT_LE(len, spec.max_episode_steps);
    ASSERT_LE(std::abs(ret), spec.v_max);
  }
  EXPECT_LE(max_abs_reward, spec.r_max);
}

TEST(RewardBound, MountainCarMillionSteps) {
  fuzz_rewards_and_episodes(MountainCar{}, PolicySpec::energy_pumping(0.6), 1'000'000);
}

TEST(RewardBound, PuddleWorldMillionSteps) {
  fuzz_rewards_and_episodes(PuddleWorld{}, PolicySpec::uniform(), 1'000'000);
}

TEST(Policy, UniformFrequenciesOnFourActions) {
  const auto p = PolicySpec::uniform();
  RngStream rng(3, 0);
  std::array<int, 4> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[p.sample(State{}, 4, rng)];
  // 5 standard deviations of a binomial(1e5, 0.25) frequency.
  for (int c : counts) EXPECT_NEAR(c / double(n), 0.25, 5 * std::sqrt(0.25 * 0.75 / n));
}

TEST(Policy, EnergyPumpingWithoutMixingFollowsVelocity) {
  const auto p = PolicySpec::energy_pumping(0.0);
  MountainCar mc;
  RngStream rng(0, 0);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(p.sample(mc.make_state(-0.5, 0.01), 3, rng), 2u);
    EXPECT_EQ(p.sample(mc.make_state(-0.5, -0.01), 3, rng), 0u);
  }
}

TEST(Policy, EnergyPumpingMixingSixtyPercent) {
  const auto p = PolicySpec::energy_pumping(0.6);
  MountainCar mc;
  RngStream rng(5, 0);
  const int n = 100000;
  int forward = 0;
  for (int i = 0; i < n; ++i) forward += p.sample(mc.make_state(-0.5, 0.02), 3, rng) == 2;
  EXPECT_NEAR(forward / double(n), 0.6, 5 * std::sqrt(0.24 / n));
  const auto probs = p.probabilities(mc.make_state(-0.5, 0.02), 3);
  EXPECT_NEAR(probs[2], 0.6, 1e-15);
}

TEST(Policy, ProbabilitiesSumToOne) {
  RngStream rng(9, 0);
  MountainCar mc;
  const std::vector<PolicySpec> policies{PolicySpec::uniform(), PolicySpec::energy_pumping(0.3),
                                         PolicySpec::fixed(1), PolicySpec::tabular({{0.2, 0.5, 0.3}})};
  for (const auto& p : policies) {
    for (int i = 0; i < 200; ++i) {
      State s = mc.sample_state(rng);
      s.coords[0] = 0.0;  // row index for the tabular policy
      const auto probs = p.probabilities(s, 3);
      double sum = 0.0;
      for (double q : probs) sum += q;
      ASSERT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Policy, ValidationRejectsBadTables) {
  EXPECT_THROW(PolicySpec::tabular({{0.5, 0.6}}).validate(2), std::invalid_argument);
  EXPECT_THROW(PolicySpec::fixed(3).validate(3), std::invalid_argument);
  EXPECT_THROW(PolicySpec::energy_pumping(0.1).validate(4), std::invalid_argument);
  auto p = PolicySpec::uniform();
  p.mixing = 1.5;
  EXPECT_THROW(p.validate(2), std::invalid_argument);
}

TEST(InitialStates, MountainCarHundredWithinBox) {
  MountainCar mc;
  RngStream rng(1, kStateSamplerStream);
  const auto states = sample_initial_states(mc, 100, rng);
  ASSERT_EQ(states.size(), 100u);
  for (const auto& s : states) {
    EXPECT_GE(s.coords[0], -1.2);
    EXPECT_LE(s.coords[0], 0.6);
    EXPECT_GE(s.coords[1], -0.07);
    EXPECT_LE(s.coords[1], 0.07);
  }
}

TEST(InitialStates, SingleStateAndZeroRejected) {
  PuddleWorld pw;
  RngStream rng(1, 0);
  const auto one = sample_initial_states(pw, 1, rng);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(pw.in_bounds(one[0]));
  EXPECT_THROW(sample_initial_states(pw, 0, rng), std::invalid_argument);
}

TEST(InitialStates, SameSeedSameStates) {
  MountainCar mc;
  RngStream a(77, kStateSamplerStream), b(77, kStateSamplerStream);
  EXPECT_EQ(sample_initial_states(mc, 50, a), sample_initial_states(mc, 50, b));
}
