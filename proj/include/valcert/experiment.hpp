#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "valcert/cache_io.hpp"
#include "valcert/estimator.hpp"
#include "valcert/registry.hpp"

namespace valcert {

inline constexpr const char* kVersion = "1.0.0";

// Shortest round-trip text for a double, so tables are reproducible.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string join(const std::vector<double>& xs, char sep = ' ') {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += sep;
    s += fmt(xs[i]);
  }
  return s;
}

inline bool is_benchmark(const std::string& env) { return env == "mountain-car" || env == "puddle-world"; }

// Per-state sample-count experiment over an (epsilon, delta) grid.
struct ExperimentGrid {
  EnvConfig env;
  PolicySpec policy;
  std::vector<double> epsilons{0.01, 0.05, 0.1};
  std::vector<double> deltas{0.01, 0.1};
  double tau = 1.0;
  std::size_t m = 100;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::uint64_t max_samples = 100'000'000;
  bool allow_long = false;
};

// Benchmark cells below epsilon = 0.05 take 10^6 or more returns per state
// and only run with allow_long.
inline std::vector<double> runnable_epsilons(const ExperimentGrid& g, std::vector<double>* skipped = nullptr) {
  std::vector<double> out;
  for (double e : g.epsilons) {
    if (is_benchmark(g.env.name) && !g.allow_long && e < 0.05) {
      if (skipped) skipped->push_back(e);
      continue;
    }
    out.push_back(e);
  }
  return out;
}

struct ExperimentRow {
  double epsilon = 0.0;
  double delta = 0.0;
  std::size_t state_id = 0;
  bool ok = true;
  std::uint64_t samples_used = 0;
  std::uint64_t trajectory_steps = 0;
  double value = 0.0;
  std::string termination;
};

struct CellSummary {
  double epsilon = 0.0;
  double delta = 0.0;
  std::size_t states = 0;
  std::size_t failed = 0;
  std::uint64_t min = 0;
  double median = 0.0;
  std::uint64_t max = 0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::vector<CellSummary> cells;
  std::vector<double> skipped_epsilons;
};

inline CellSummary summarize_cell(double eps, double delta, const std::vector<ExperimentRow>& rows) {
  CellSummary c{eps, delta, 0, 0, 0, 0.0, 0};
  std::vector<std::uint64_t> counts;
  for (const auto& r : rows) {
    if (r.epsilon != eps || r.delta != delta) continue;
    ++c.states;
    if (!r.ok) {
      ++c.failed;
      continue;
    }
    counts.push_back(r.samples_used);
  }
  if (!counts.empty()) {
    c.min = *std::min_element(counts.begin(), counts.end());
    c.max = *std::max_element(counts.begin(), counts.end());
    c.median = median_of(counts);
  }
  return c;
}

template <Environment E>
ExperimentResult run_experiment(const E& env, const ExperimentGrid& grid) {
  if (grid.m == 0) throw std::invalid_argument("experiment: m must be positive");
  if (grid.epsilons.empty() || grid.deltas.empty()) throw std::invalid_argument("experiment: empty grid");
  const EnvSpec& spec = env.spec();
  grid.policy.validate(spec.action_count);
  ExperimentResult out;
  const auto epsilons = runnable_epsilons(grid, &out.skipped_epsilons);

  // The same states and per-state streams are used in every cell.
  RngStream state_rng(grid.seed, kStateSamplerStream);
  const auto states = sample_initial_states(env, grid.m, state_rng);
  for (double eps : epsilons) {
    for (double delta : grid.deltas) {
      StoppingConfig cfg;
      cfg.epsilon = eps;
      cfg.delta = delta;
      cfg.tau = grid.tau;
      cfg.v_max = spec.v_max;
      cfg.max_samples = grid.max_samples;
      const auto plan = TruncationPlan::for_env(spec, eps, grid.tau);
      const auto results = estimate_states(env, grid.policy, states, cfg, plan, grid.seed, grid.workers);
      for (std::size_t i = 0; i < states.size(); ++i) {
        ExperimentRow row;
        row.epsilon = eps;
        row.delta = delta;
        row.state_id = i;
        if (const auto& est = results[i].estimate) {
          row.samples_used = est->samples_used;
          row.trajectory_steps = est->trajectory_steps;
          row.value = est->value;
          row.termination = to_string(est->termination);
        } else {
          row.ok = false;
          row.samples_used = grid.max_samples;
          row.termination = "budget-exceeded";
        }
        out.rows.push_back(row);
      }
      out.cells.push_back(summarize_cell(eps, delta, out.rows));
    }
  }
  return out;
}

inline ExperimentResult run_experiment(const ExperimentGrid& grid) {
  const auto env = make_environment(grid.env);
  return with_environment(env, [&](const auto& e) { return run_experiment(e, grid); });
}

inline void write_grid_metadata(std::ostream& os, const std::string& title, const ExperimentGrid& g,
                                const ExperimentResult& r) {
  os << "# valcert " << title << "\n"
     << "# version: " << kVersion << "\n"
     << "# env: " << g.env.name << " (states=" << g.env.states << ", gamma=" << fmt(g.env.gamma)
     << ", bandit_p=" << fmt(g.env.bandit_p) << ")\n"
     << "# policy: " << g.policy.id << " (mixing=" << fmt(g.policy.mixing) << ")\n"
     << "# seed: " << g.seed << "\n"
     << "# m: " << g.m << "\n"
     << "# tau: " << fmt(g.tau) << "\n"
     << "# epsilons: " << join(runnable_epsilons(g)) << "\n"
     << "# deltas: " << join(g.deltas) << "\n"
     << "# max_samples: " << g.max_samples << "\n";
  if (!r.skipped_epsilons.empty())
    os << "# skipped epsilons (need --allow-long): " << join(r.skipped_epsilons) << "\n";
}

inline void write_experiment_csv(std::ostream& os, const ExperimentGrid& g, const ExperimentResult& r) {
  write_grid_metadata(os, "experiment", g, r);
  os << "env,epsilon,delta,tau,state_id,samples_used,trajectory_steps,value,termination\n";
  for (const auto& row : r.rows) {
    os << g.env.name << ',' << fmt(row.epsilon) << ',' << fmt(row.delta) << ',' << fmt(g.tau) << ',' << row.state_id
       << ',' << row.samples_used << ',' << row.trajectory_steps << ',' << fmt(row.value) << ',' << row.termination
       << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const ExperimentGrid& g, const ExperimentResult& r) {
  write_grid_metadata(os, "experiment summary", g, r);
  os << "env,epsilon,delta,tau,states,failed,min_samples,median_samples,max_samples\n";
  for (const auto& c : r.cells) {
    os << g.env.name << ',' << fmt(c.epsilon) << ',' << fmt(c.delta) << ',' << fmt(g.tau) << ',' << c.states << ','
       << c.failed << ',' << c.min << ',' << fmt(c.median) << ',' << c.max << '\n';
  }
}

inline nlohmann::ordered_json summary_json(const ExperimentGrid& g, const ExperimentResult& r) {
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"epsilon", c.epsilon},
                     {"delta", c.delta},
                     {"states", c.states},
                     {"failed", c.failed},
                     {"min_samples", c.min},
                     {"median_samples", c.median},
                     {"max_samples", c.max}});
  }
  return {{"env", g.env.name},  {"policy", g.policy.id}, {"seed", g.seed},   {"m", g.m},
          {"tau", g.tau},       {"version", kVersion},   {"skipped_epsilons", r.skipped_epsilons},
          {"cells", cells}};
}

// EBGStop-tau against the bootstrap-interval variant on the same return
// sequence per state.
struct OracleOptions {
  EnvConfig env{"bandit"};
  PolicySpec policy;
  std::size_t states = 20;
  double epsilon = 0.1;
  double delta = 0.1;
  double tau = 1.0;
  std::size_t batch = 100'000;
  std::size_t min_batch = 1'000;
  std::size_t k = 1'000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::uint64_t max_samples = 100'000'000;
};

struct OracleRow {
  std::size_t state_id = 0;
  bool terminal = false;
  std::uint64_t ebg_samples = 0;
  std::uint64_t bootstrap_samples = 0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double ebg_value = 0.0;
  double bootstrap_value = 0.0;
};

template <Environment E>
std::vector<OracleRow> oracle_compare(const E& env, const OracleOptions& opt) {
  if (opt.batch < opt.min_batch)
    throw std::invalid_argument("oracle-compare: batch of " + std::to_string(opt.batch) + " is below the minimum of " +
                                std::to_string(opt.min_batch));
  if (opt.states == 0 || opt.k == 0) throw std::invalid_argument("oracle-compare: states and k must be positive");
  const EnvSpec& spec = env.spec();
  opt.policy.validate(spec.action_count);
  StoppingConfig cfg;
  cfg.epsilon = opt.epsilon;
  cfg.delta = opt.delta;
  cfg.tau = opt.tau;
  cfg.v_max = spec.v_max;
  cfg.max_samples = opt.max_samples;
  cfg.validate();
  const auto plan = TruncationPlan::for_env(spec, opt.epsilon, opt.tau);

  RngStream state_rng(opt.seed, kStateSamplerStream);
  const auto states = sample_initial_states(env, opt.states, state_rng);
  std::vector<OracleRow> rows(states.size());
  parallel_for(states.size(), opt.workers, [&](std::size_t i) {
    OracleRow& row = rows[i];
    row.state_id = i;
    row.terminal = states[i].terminal;
    if (row.terminal) return;
    auto draw = [&](RngStream& rng) { return sample_return(env, opt.policy, states[i], plan, rng); };

    RngStream batch_rng(opt.seed, kBootstrapStream + 2 * i);
    std::vector<double> batch(opt.batch);
    for (auto& g : batch) g = draw(batch_rng).value;

    RngStream ebg_rng(opt.seed, i);
    const auto ebg = ebgstop_tau([&] { return draw(ebg_rng); }, cfg);

    RngStream boot_returns(opt.seed, i);
    RngStream resample_rng(opt.seed, kBootstrapStream + 2 * i + 1);
    BootstrapStopState boot(batch, cfg, opt.k, resample_rng);
    std::optional<EstimateResult> done;
    while (!done) {
      const auto r = draw(boot_returns);
      done = boot.add(r.value, r.steps);
    }
    row.ebg_samples = ebg.samples_used;
    row.bootstrap_samples = done->samples_used;
    row.ebg_value = ebg.value;
    row.bootstrap_value = done->value;
    row.ratio = static_cast<double>(ebg.samples_used) / static_cast<double>(done->samples_used);
  });
  return rows;
}

inline std::vector<OracleRow> oracle_compare(const OracleOptions& opt) {
  const auto env = make_environment(opt.env);
  return with_environment(env, [&](const auto& e) { return oracle_compare(e, opt); });
}

inline void write_oracle_csv(std::ostream& os, const OracleOptions& o, const std::vector<OracleRow>& rows) {
  os << "# valcert oracle-compare\n"
     << "# version: " << kVersion << "\n"
     << "# env: " << o.env.name << " (states=" << o.env.states << ", gamma=" << fmt(o.env.gamma)
     << ", bandit_p=" << fmt(o.env.bandit_p) << ")\n"
     << "# policy: " << o.policy.id << " (mixing=" << fmt(o.policy.mixing) << ")\n"
     << "# seed: " << o.seed << "\n"
     << "# epsilon: " << fmt(o.epsilon) << ", delta: " << fmt(o.delta) << ", tau: " << fmt(o.tau) << "\n"
     << "# batch: " << o.batch << ", k: " << o.k << "\n";
  os << "state_id,terminal,ebg_samples,bootstrap_samples,ratio,ebg_value,bootstrap_value\n";
  for (const auto& r : rows) {
    os << r.state_id << ',' << (r.terminal ? 1 : 0) << ',' << r.ebg_samples << ',' << r.bootstrap_samples << ','
       << fmt(r.ratio) << ',' << fmt(r.ebg_value) << ',' << fmt(r.bootstrap_value) << '\n';
  }
}

// Repeated build-and-evaluate on a chain with known values: counts how often
// the certified deviation bound fails to cover the exact loss of a noisy
// predictor.
struct CoverageOptions {
  std::size_t chain_states = 7;
  double gamma = 0.9;
  double epsilon = 0.3;
  double delta = 0.2;
  double tau = 1.0;
  double clip = 2.0;
  std::uint64_t k_budget = 1;
  double noise = 0.5;
  std::size_t repetitions = 100;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct CoverageTrial {
  std::uint64_t seed = 0;
  double exact_loss = 0.0;
  double empirical_loss = 0.0;
  double bound = 0.0;
  bool violated = false;
};

struct CoverageResult {
  std::vector<CoverageTrial> trials;
  std::size_t violations = 0;
  double rate() const { return trials.empty() ? 0.0 : static_cast<double>(violations) / static_cast<double>(trials.size()); }
};

inline constexpr std::uint64_t kPredictionNoiseStream = kReservedStreamBase + (1ULL << 40);

inline CoverageResult chain_coverage(const CoverageOptions& opt) {
  const auto chain = make_random_walk_chain(opt.chain_states, opt.gamma);
  const auto policy = PolicySpec::uniform();
  const auto v_star = chain_true_values(chain, policy);
  const auto& d = chain.initial_distribution();
  LossSpec loss{LossKind::cmapve, opt.clip, opt.tau, 0.0, 0.0};

  CoverageResult out;
  for (std::size_t rep = 0; rep < opt.repetitions; ++rep) {
    CoverageTrial t;
    t.seed = opt.seed + rep;
    RngStream noise(t.seed, kPredictionNoiseStream);
    std::vector<double> v_hat(v_star.size());
    for (std::size_t s = 0; s < v_star.size(); ++s) v_hat[s] = v_star[s] + noise.uniform(-opt.noise, opt.noise);
    for (std::size_t s = 0; s < v_star.size(); ++s)
      t.exact_loss += d[s] * clipped_relative_loss(v_hat[s], v_star[s], opt.tau, opt.clip);

    BuildOptions b;
    b.epsilon = opt.epsilon;
    b.delta = opt.delta;
    b.tau = opt.tau;
    b.clip = opt.clip;
    b.k_budget = opt.k_budget;
    b.seed = t.seed;
    b.workers = opt.workers;
    ValueCache cache = build_cache(chain, policy, b);
    Predictions preds;
    for (const auto& e : cache.entries) preds[e.id] = v_hat[static_cast<std::size_t>(e.coords.at(0))];
    const ErrorReport report = evaluate(preds, cache, loss);
    t.empirical_loss = report.empirical_loss;
    t.bound = report.deviation_bound;
    t.violated = std::abs(t.exact_loss - t.empirical_loss) > t.bound;
    out.violations += t.violated ? 1 : 0;
    out.trials.push_back(t);
  }
  return out;
}

}  // namespace valcert
