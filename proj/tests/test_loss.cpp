#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "valcert/loss.hpp"
#include "valcert/rng.hpp"

using namespace valcert;

// Relative tolerance for hand-computed closed-form values.
constexpr double kRel = 1e-9;
#define EXPECT_REL(a, b) EXPECT_NEAR((a), (b), kRel * std::abs(b))

TEST(ClippedRelativeLoss, Examples) {
  EXPECT_REL(clipped_relative_loss(-990.0, -1000.0, 1.0, 2.0), 10.0 / 1001.0);
  EXPECT_EQ(clipped_relative_loss(3.5, 3.5, 0.2, 2.0), 0.0);
  EXPECT_EQ(clipped_relative_loss(5.0, 0.0, 1.0, 2.0), 2.0);
  EXPECT_THROW(clipped_relative_loss(1.0, 0.0, 0.0, 2.0), std::domain_error);
  EXPECT_NO_THROW(clipped_relative_loss(1.0, 2.0, 0.0, 2.0));
}

TEST(ClippedRelativeLoss, RangeProperty) {
  RngStream rng(1, 0);
  for (int i = 0; i < 100000; ++i) {
    const double c = rng.uniform(0.01, 5.0);
    const double l = clipped_relative_loss(rng.uniform(-1e3, 1e3), rng.uniform(-1e3, 1e3), rng.uniform(0.0, 3.0), c);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, c);
  }
}

// min(c,|x|) <= min(c,|x-y|) + min(c,|y|)
TEST(ClippedTriangle, RandomTriples) {
  RngStream rng(2, 0);
  for (int i = 0; i < 100000; ++i) {
    const double x = rng.uniform(-10, 10), y = rng.uniform(-10, 10), c = rng.uniform(1e-3, 10);
    ASSERT_LE(std::min(c, std::abs(x)), std::min(c, std::abs(x - y)) + std::min(c, std::abs(y)) + 1e-12);
  }
}

// |min(c, a b) - min(c, b)| <= c (1 - (1+eps)^-2) for a = (1+eps)^2, b >= 0.
TEST(NormalizerTerm, FuzzBound) {
  RngStream rng(3, 0);
  for (int i = 0; i < 100000; ++i) {
    const double eps = rng.uniform(0.0, 1.0), c = rng.uniform(0.01, 5.0);
    const double a = (1 + eps) * (1 + eps);
    const double b = rng.uniform(0.0, 2.0 * c);
    const double lhs = std::abs(std::min(c, a * b) - std::min(c, b));
    const double rhs = c * (1.0 - 1.0 / a);
    ASSERT_LE(lhs, rhs + 1e-12) << eps << " " << b << " " << c;
  }
}

TEST(NormalizerTerm, ExactDerivationForRelativeLoss) {
  // Swapping the normaliser |v*| + tau for (|v*| + tau)/(1+eps)^2 changes the
  // clipped loss by at most c(1 - (1+eps)^-2) when the loss reaches c.
  const double c = 2.0, eps = 0.1;
  const double a = (1 + eps) * (1 + eps);
  EXPECT_REL(std::min(c, a * c) - std::min(c, c / a), c * (1 - 1 / a));
}

TEST(EmpiricalLoss, HandAverages) {
  LossSpec cmave{LossKind::cmave, 2.0, 0.0, 0.0, 0.0};
  const std::vector<double> pred{1.4, 10.0}, ref{1.0, 0.0};
  EXPECT_REL(empirical_loss(pred, ref, cmave), 1.2);

  std::vector<double> v(50), off(50);
  RngStream rng(4, 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = rng.uniform(-5, 5);
    off[i] = v[i] + 0.1;
  }
  LossSpec mave{LossKind::mave, 0.0, 0.0, 1.0, 1.0};
  LossSpec msve{LossKind::msve, 0.0, 0.0, 1.0, 1.0};
  EXPECT_NEAR(empirical_loss(off, v, mave), 0.1, 1e-12);
  EXPECT_NEAR(empirical_loss(off, v, msve), 0.01, 1e-12);
  for (auto kind : {LossKind::cmapve, LossKind::cmave, LossKind::cmsve, LossKind::mave, LossKind::msve}) {
    LossSpec s{kind, 2.0, 1.0, 1.0, 1.0};
    EXPECT_EQ(empirical_loss(v, v, s), 0.0);
  }
}

TEST(EmpiricalLoss, ClippedKindsNeverExceedC) {
  RngStream rng(5, 0);
  std::vector<double> a(200), b(200);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-100, 100), b[i] = rng.uniform(-100, 100);
  for (auto kind : {LossKind::cmapve, LossKind::cmave, LossKind::cmsve}) {
    LossSpec s{kind, 1.5, 1.0, 0.0, 0.0};
    EXPECT_LE(empirical_loss(a, b, s), 1.5);
  }
}

TEST(EmpiricalLoss, RejectsMismatchedInputs) {
  LossSpec s;
  EXPECT_THROW(empirical_loss(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, s), std::invalid_argument);
  EXPECT_THROW(empirical_loss(std::vector<double>{}, std::vector<double>{}, s), std::invalid_argument);
}

TEST(LossSpec, Validation) {
  EXPECT_THROW((LossSpec{LossKind::cmave, 0.0}).validate(), std::invalid_argument);
  EXPECT_THROW((LossSpec{LossKind::mave, 2.0, 1.0, 0.0, 1.0}).validate(), std::invalid_argument);
  EXPECT_NO_THROW((LossSpec{LossKind::msve, 2.0, 1.0, 1.0, 1.0}).validate());
  EXPECT_EQ(loss_kind_from_string("cmsve"), LossKind::cmsve);
  EXPECT_THROW(loss_kind_from_string("rmse"), std::invalid_argument);
}

TEST(RequiredStates, Examples) {
  EXPECT_EQ(required_states(0.05, 0.1, 2.0, 1), 2952u);
  EXPECT_EQ(required_states(0.1, 0.05, 1.0, 10), 335u);
  EXPECT_EQ(required_states(0.1, 0.1, 2.0, 1), 738u);
}

TEST(RequiredStates, DoublingEpsilonQuartersM) {
  RngStream rng(6, 0);
  for (int i = 0; i < 1000; ++i) {
    const double e = rng.uniform(0.01, 0.4), d = rng.uniform(0.01, 0.5), c = rng.uniform(0.1, 4.0);
    const auto k = 1 + rng.below(50);
    const double raw = std::log(4.0 * k / d) * c * c / (2 * e * e);
    ASSERT_EQ(required_states(e, d, c, k), static_cast<std::size_t>(std::ceil(raw)));
    ASSERT_EQ(required_states(2 * e, d, c, k), static_cast<std::size_t>(std::ceil(raw / 4)));
    ASSERT_GE(required_states(e, d, c, k + 1), required_states(e, d, c, k));
  }
}

TEST(RequiredStates, CertifiesTheStateTerm) {
  for (double e : {0.02, 0.05, 0.1, 0.3}) {
    const auto m = required_states(e, 0.1, 2.0, 3);
    EXPECT_LE(hoeffding_state_term(m, 0.1, 2.0, 3), e);
    EXPECT_GT(hoeffding_state_term(m - 1, 0.1, 2.0, 3), e);
  }
}

TEST(ErrorBound, HandEvaluatedTerms) {
  const auto m = required_states(0.05, 0.1, 2.0, 1);
  const auto b = theorem1_bound(0.1, 0.1, 2.0, 1, m);
  EXPECT_REL(b.state_sampling, 0.0499924076492663);
  EXPECT_REL(b.rollout, 0.2);
  EXPECT_REL(b.normalizer, 0.347107438016529);
  EXPECT_REL(b.total(), 0.597099845665795);
}

TEST(ErrorBound, ZeroEpsilonLeavesStateTerm) {
  const auto b = theorem1_bound(0.0, 0.1, 2.0, 1, 100);
  EXPECT_EQ(b.rollout, 0.0);
  EXPECT_EQ(b.normalizer, 0.0);
  EXPECT_REL(b.total(), 0.271620303148124);
}

TEST(ErrorBound, MonotoneInEpsilonAndM) {
  double prev = 0.0;
  for (double e = 0.0; e < 1.0; e += 0.05) {
    const double t = theorem1_bound(e, 0.1, 2.0, 1, 500).total();
    ASSERT_GT(t, prev);
    prev = t;
  }
  prev = INFINITY;
  for (std::size_t m = 1; m < 5000; m += 37) {
    const double t = theorem1_bound(0.1, 0.1, 2.0, 1, m).total();
    ASSERT_LT(t, prev);
    prev = t;
  }
}

TEST(EpsilonSplit, ForwardAndSplit) {
  EXPECT_REL(corollary1_epsilon(0.05, 0.01, 2.0), 0.11);
  EXPECT_REL(corollary1_epsilon(0.05, 0.01, 0.0), 0.07);
  const auto s = split_epsilon(0.1, 2.0);
  EXPECT_REL(s.epsilon_m, 0.05);
  EXPECT_REL(s.epsilon_bar, 0.1 / 12.0);
  EXPECT_REL(corollary1_epsilon(s.epsilon_m, s.epsilon_bar, 2.0), 0.1);
}

TEST(EpsilonSplit, SplitRoundTripProperty) {
  RngStream rng(7, 0);
  for (int i = 0; i < 10000; ++i) {
    const double e = rng.uniform(1e-4, 1.0), c = rng.uniform(0.0, 10.0);
    const auto s = split_epsilon(e, c);
    ASSERT_NEAR(corollary1_epsilon(s.epsilon_m, s.epsilon_bar, c), e, 1e-15 * (1 + e));
  }
}

TEST(Zeta, CmaveHandEvaluated) {
  const auto z = cmave_zeta(1.0, 0.9, 44, 100, 10000, 0.1, 1.0);
  EXPECT_REL(z.range_term, 0.0258454474186892);
  EXPECT_REL(z.variance_term, 0.0417121439108809);
  EXPECT_REL(z.truncation_term, 0.0969773729787524);
  EXPECT_REL(z.total(), 0.164534964308322);
}

TEST(Zeta, CmsveHandEvaluated) {
  const auto z = cmsve_zeta(1.0, 0.9, 44, 100, 10000, 0.1, 1.0);
  EXPECT_REL(z.range_term, 0.255948050592767);
  EXPECT_REL(z.variance_term, 0.0417121439108809);
  EXPECT_REL(z.truncation_term, 0.00940461086986005);
  EXPECT_REL(z.total(), 0.307064805373508);
}

TEST(Zeta, LargeNLeavesTruncationBias) {
  const auto z = cmave_zeta(1.0, 0.9, 44, 100, 1'000'000'000'000ULL, 0.1, 0.0);
  EXPECT_NEAR(z.total(), std::pow(0.9, 44) / 0.1, 1e-9);
}

TEST(Zeta, EpisodicFormHasNoBias) {
  const auto z = cmave_zeta_episodic(100.0, 20, 1000, 0.1, 3.0);
  EXPECT_EQ(z.truncation_term, 0.0);
  EXPECT_REL(z.range_term, 300.0 * std::log(1200.0) / 1000.0);
  const auto sq = cmsve_zeta_episodic(100.0, 20, 1000, 0.1, 3.0);
  EXPECT_REL(sq.range_term, 30000.0 * std::log(1200.0) / 1000.0);
  EXPECT_THROW(cmave_zeta(1.0, 1.0, 10, 10, 10, 0.1, 0.0), std::invalid_argument);
}

TEST(Zeta, CmsveNonnegative) {
  RngStream rng(8, 0);
  for (int i = 0; i < 1000; ++i) {
    const auto z = cmsve_zeta(rng.uniform(0, 5), rng.uniform(0, 0.99), 1 + rng.below(100), 1 + rng.below(1000),
                              1 + rng.below(100000), rng.uniform(0.001, 0.9), rng.uniform(0, 3));
    ASSERT_GE(z.total(), 0.0);
  }
}

TEST(Subexp, DeviationExample) {
  const auto d = subexp_deviation(1.0, 1.0, 10000, 0.1, 1);
  EXPECT_REL(d.sigma1, 0.0271620303148124);
  EXPECT_REL(d.sigma2, 0.000737775890822787);
  EXPECT_EQ(d.regime, TailRegime::gaussian);
  EXPECT_EQ(d.t, d.sigma1);
}

TEST(Subexp, ExponentialRegimeForFewStates) {
  const auto d = subexp_deviation(1.0, 0.01, 100, 0.1, 1);
  EXPECT_EQ(d.regime, TailRegime::exponential);
  EXPECT_EQ(d.t, d.sigma2);
}

TEST(Subexp, BothCandidatesAgreeOnTheRegime) {
  RngStream rng(9, 0);
  for (int i = 0; i < 10000; ++i) {
    const double a = rng.uniform(0.01, 5), b = rng.uniform(0.01, 5);
    const auto d = subexp_deviation(a, b, 1 + rng.below(100000), rng.uniform(0.001, 0.9), 1 + rng.below(20));
    const double edge = a * a * b;
    if (std::abs(d.sigma1 - edge) < 1e-9 * edge) continue;
    ASSERT_EQ(d.sigma1 <= edge, d.sigma2 <= edge * (1 + 1e-12));
  }
}

TEST(Subexp, ShrinksWithM) {
  double prev = INFINITY;
  for (std::size_t m = 10; m < 10'000'000; m *= 10) {
    const double t = subexp_deviation(1.0, 1.0, m, 0.1, 1).t;
    ASSERT_LT(t, prev);
    prev = t;
  }
  EXPECT_REL(prev, std::sqrt(2.0 * std::log(40.0) / 1e6));
}

TEST(Subexp, RequiredStates) {
  EXPECT_EQ(subexp_required_states(1.0, 1.0, 1, 0.1), 8u);
  EXPECT_EQ(subexp_required_states(2.0, 1.0, 1, 0.1), 2u);
  EXPECT_LT(subexp_required_states(1.0, 1.0, 1, 0.1), subexp_required_states(1.0, 1.0, 100, 0.1));
  const auto lap = laplace_subexp_params(1.0);
  EXPECT_EQ(subexp_required_states(lap.alpha, lap.beta, 1, 0.1), 2u);
}

// Laplace(0, b) has MGF 1/(1 - b^2 l^2); it must stay below exp(alpha^2 l^2 / 2)
// for |l| <= beta.
TEST(Subexp, LaplaceParametersBoundTheMgf) {
  for (double b : {0.1, 1.0, 7.5}) {
    const auto p = laplace_subexp_params(b);
    EXPECT_REL(p.alpha, b * std::sqrt(5.12));
    EXPECT_REL(p.beta, std::sqrt(0.9) / b);
    for (int i = 0; i <= 1000; ++i) {
      const double l = p.beta * i / 1000.0;
      ASSERT_LE(1.0 / (1.0 - b * b * l * l), std::exp(p.alpha * p.alpha * l * l / 2.0)) << b << " " << l;
    }
  }
}

TEST(FixedBudgetPlan, ClippedUsesHoeffdingTerm) {
  LossSpec s{LossKind::cmave, 2.0, 0.0, 0.0, 0.0};
  const auto p = plan_fixed_budget(s, 0.3, 0.1, 1, 500, 10.0, 0.01);
  EXPECT_REL(p.state_term, hoeffding_state_term(500, 0.1, 2.0, 1));
  EXPECT_REL(p.zeta, 0.3 - p.state_term - 0.01);
  EXPECT_EQ(p.range, 10.0);
  const auto q = plan_fixed_budget(LossSpec{LossKind::cmsve, 2.0, 0.0, 0.0, 0.0}, 0.3, 0.1, 1, 500, 10.0, 0.01);
  EXPECT_EQ(q.range, 100.0);
  EXPECT_REL(q.truncation_term, 1e-4);
}

TEST(FixedBudgetPlan, SubexpFixesM) {
  const auto lap = laplace_subexp_params(1.0);
  LossSpec s{LossKind::mave, 0.0, 0.0, lap.alpha, lap.beta};
  const auto p = plan_fixed_budget(s, 10.0, 0.1, 1, 0, 1.0, 0.0);
  EXPECT_EQ(p.m, 2u);
  EXPECT_REL(p.state_term, subexp_deviation(lap.alpha, lap.beta, 2, 0.1, 1).sigma1);
}

TEST(FixedBudgetPlan, RejectsImpossibleBudgets) {
  LossSpec s{LossKind::cmave, 2.0, 0.0, 0.0, 0.0};
  EXPECT_THROW(plan_fixed_budget(s, 0.05, 0.1, 1, 100, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(plan_fixed_budget(LossSpec{LossKind::cmapve}, 0.5, 0.1, 1, 100, 1.0, 0.0), std::invalid_argument);
  // Twice the Hoeffding size always leaves room.
  const auto m = 2 * required_states(0.2, 0.1, 2.0, 1);
  EXPECT_GT(plan_fixed_budget(s, 0.2, 0.1, 1, m, 1.0, 0.0).zeta, 0.0);
}
