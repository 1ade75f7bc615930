#include <gtest/gtest.h>

#include <sstream>

#include "valcert/experiment.hpp"

using namespace valcert;

namespace {

ExperimentGrid chain_grid(std::size_t m) {
  ExperimentGrid g;
  g.env.name = "chain";
  g.m = m;
  g.seed = 21;
  return g;
}

std::string csv_of(const ExperimentGrid& g) {
  std::ostringstream os;
  write_experiment_csv(os, g, run_experiment(g));
  return os.str();
}

}  // namespace

TEST(Experiment, ChainGridShapeAndMonotoneMedians) {
  const auto g = chain_grid(100);
  const auto r = run_experiment(g);
  ASSERT_EQ(r.rows.size(), 600u);
  ASSERT_EQ(r.cells.size(), 6u);
  EXPECT_TRUE(r.skipped_epsilons.empty());
  for (const auto& c : r.cells) {
    EXPECT_EQ(c.states, 100u);
    EXPECT_EQ(c.failed, 0u);
    EXPECT_LE(c.min, c.median);
    EXPECT_LE(c.median, c.max);
  }
  auto median = [&](double eps, double delta) {
    for (const auto& c : r.cells)
      if (c.epsilon == eps && c.delta == delta) return c.median;
    ADD_FAILURE() << "missing cell";
    return 0.0;
  };
  for (double delta : g.deltas) {
    EXPECT_GT(median(0.01, delta), median(0.05, delta));
    EXPECT_GT(median(0.05, delta), median(0.1, delta));
  }
  EXPECT_GT(median(0.05, 0.01), median(0.05, 0.1));
}

TEST(Experiment, BenchmarkSkipsSmallEpsilonUnlessAllowed) {
  ExperimentGrid g;
  g.env.name = "mountain-car";
  std::vector<double> skipped;
  EXPECT_EQ(runnable_epsilons(g, &skipped), (std::vector<double>{0.05, 0.1}));
  EXPECT_EQ(skipped, (std::vector<double>{0.01}));
  g.allow_long = true;
  EXPECT_EQ(runnable_epsilons(g).size(), 3u);
  g.env.name = "chain";
  g.allow_long = false;
  EXPECT_EQ(runnable_epsilons(g).size(), 3u);
}

TEST(Experiment, OutputIsByteIdentical) {
  auto g = chain_grid(20);
  const auto a = csv_of(g);
  EXPECT_EQ(a, csv_of(g));
  g.workers = 3;
  EXPECT_EQ(a, csv_of(g));
  EXPECT_NE(a.find("env,epsilon,delta,tau,state_id,samples_used,trajectory_steps,value,termination\n"),
            std::string::npos);
  EXPECT_NE(a.find("# seed: 21\n"), std::string::npos);
}

TEST(Experiment, SummaryWritersAgree) {
  const auto g = chain_grid(10);
  const auto r = run_experiment(g);
  const auto j = summary_json(g, r);
  ASSERT_EQ(j.at("cells").size(), r.cells.size());
  EXPECT_EQ(j.at("cells")[0].at("median_samples"), r.cells[0].median);
  std::ostringstream os;
  write_summary_csv(os, g, r);
  EXPECT_NE(os.str().find("min_samples,median_samples,max_samples"), std::string::npos);
}

TEST(Experiment, BudgetFailuresAreRecorded) {
  auto g = chain_grid(5);
  g.epsilons = {0.01};
  g.deltas = {0.1};
  g.max_samples = 10;
  const auto r = run_experiment(g);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_GT(r.cells[0].failed, 0u);
  bool seen = false;
  for (const auto& row : r.rows) seen |= row.termination == "budget-exceeded";
  EXPECT_TRUE(seen);
}

TEST(Formatting, ShortestRoundTrip) {
  EXPECT_EQ(fmt(0.1), "0.1");
  EXPECT_EQ(fmt(1.0), "1");
  EXPECT_EQ(fmt(0.6561), "0.6561");
  EXPECT_EQ(fmt(std::nan("")), "nan");
}

TEST(OracleCompare, BanditRatiosAndRowCount) {
  OracleOptions o;
  o.states = 5;
  o.batch = 20'000;
  o.k = 200;
  const auto rows = oracle_compare(o);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    ASSERT_FALSE(r.terminal);
    EXPECT_GE(r.ratio, 1.0);
    EXPECT_GE(r.bootstrap_samples, 1u);
  }
}

TEST(OracleCompare, DeterministicReturnsFavourBootstrap) {
  OracleOptions o;
  o.env = EnvConfig{"deterministic-chain", 6, 0.9, 0.5};
  o.policy = PolicySpec::fixed(1, "always-right");
  o.states = 6;
  o.batch = 1000;
  o.k = 100;
  for (const auto& r : oracle_compare(o)) {
    if (r.terminal) continue;
    EXPECT_EQ(r.bootstrap_samples, 1u);
    EXPECT_GT(r.ratio, 10.0);
    EXPECT_LE(std::abs(r.ebg_value - r.bootstrap_value), o.epsilon * (r.bootstrap_value + o.tau));
  }
}

TEST(OracleCompare, RejectsSmallBatch) {
  OracleOptions o;
  o.batch = 999;
  EXPECT_THROW(oracle_compare(o), std::invalid_argument);
}

TEST(Coverage, SmallRunIsConsistent) {
  CoverageOptions o;
  o.repetitions = 3;
  o.epsilon = 0.4;
  const auto r = chain_coverage(o);
  ASSERT_EQ(r.trials.size(), 3u);
  for (const auto& t : r.trials) {
    EXPECT_EQ(t.bound, 0.4);
    EXPECT_GT(t.exact_loss, 0.0);
    EXPECT_EQ(t.violated, std::abs(t.exact_loss - t.empirical_loss) > t.bound);
  }
  EXPECT_LE(r.rate(), 1.0);
}
