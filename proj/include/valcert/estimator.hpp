#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "valcert/loss.hpp"
#include "valcert/mdp.hpp"
#include "valcert/rollout.hpp"
#include "valcert/rng.hpp"
#include "valcert/stopping.hpp"

namespace valcert {

inline constexpr const char* kBuilderAdaptive = "ebgstop-tau";
inline constexpr const char* kBuilderFixedBudget = "fixed-budget";

struct CacheMeta {
  std::string env_id;
  std::string policy_id;
  std::string builder = kBuilderAdaptive;
  LossKind loss = LossKind::cmapve;
  double epsilon = 0.0;
  double delta = 0.0;
  double tau = 0.0;
  double clip = 0.0;
  std::uint64_t k_budget = 1;
  double gamma = 1.0;
  double v_max = 0.0;
  double r_max = 0.0;
  std::uint64_t seed = 0;
  std::size_t m = 0;
  std::string created;
  std::uint64_t total_samples = 0;
  std::uint64_t total_steps = 0;
  // Derived accuracy split and per-state confidence.
  double epsilon_m = 0.0;
  double epsilon_bar = 0.0;
  double per_state_delta = 0.0;
  TruncationMode truncation = TruncationMode::episodic;
  std::uint64_t truncation_length = 0;
  // Fixed-budget builds only.
  double alpha_se = 0.0;
  double beta_se = 0.0;
  double state_term = 0.0;
  double truncation_term = 0.0;
  double zeta = 0.0;
  std::uint64_t rounds = 0;

  friend bool operator==(const CacheMeta&, const CacheMeta&) = default;
};

struct CacheEntry {
  std::size_t id = 0;
  std::vector<double> coords;
  bool terminal = false;
  double value = 0.0;
  std::uint64_t samples_used = 0;
  std::uint64_t trajectory_steps = 0;
  Termination termination = Termination::relative_width;

  friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
};

// Sampled states with high-confidence value estimates, built once and reused
// for many error queries. Only `k_consumed` changes after construction.
struct ValueCache {
  CacheMeta meta;
  std::vector<CacheEntry> entries;
  std::uint64_t k_consumed = 0;

  std::vector<double> values() const {
    std::vector<double> v;
    v.reserve(entries.size());
    for (const auto& e : entries) v.push_back(e.value);
    return v;
  }

  friend bool operator==(const ValueCache&, const ValueCache&) = default;
};

struct RolloutBudgetStats {
  std::vector<std::uint64_t> samples_used;
  std::uint64_t min = 0;
  double median = 0.0;
  std::uint64_t max = 0;
  std::uint64_t total_samples = 0;
  std::uint64_t total_steps = 0;
};

inline double median_of(std::vector<std::uint64_t> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? static_cast<double>(xs[n / 2])
                    : 0.5 * (static_cast<double>(xs[n / 2 - 1]) + static_cast<double>(xs[n / 2]));
}

inline RolloutBudgetStats budget_stats(const ValueCache& cache) {
  RolloutBudgetStats s;
  for (const auto& e : cache.entries) {
    s.samples_used.push_back(e.samples_used);
    s.total_samples += e.samples_used;
    s.total_steps += e.trajectory_steps;
  }
  if (!s.samples_used.empty()) {
    s.min = *std::min_element(s.samples_used.begin(), s.samples_used.end());
    s.max = *std::max_element(s.samples_used.begin(), s.samples_used.end());
    s.median = median_of(s.samples_used);
  }
  return s;
}

// Runs fn(i) for i in [0, n) on `workers` threads. If several calls throw,
// the exception from the lowest index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (i < failed_at) {
              failed_at = i;
              failure = std::current_exception();
            }
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

class CacheBuildError : public std::runtime_error {
 public:
  CacheBuildError(std::size_t state_id, const std::string& what)
      : std::runtime_error("state " + std::to_string(state_id) + ": " + what), state(state_id) {}
  std::size_t state;
};

struct StateEstimate {
  std::optional<EstimateResult> estimate;
  std::string error;  // set when the sample ceiling was hit
};

// Adaptive estimate for each state, state i drawing from stream (seed, i).
// Budget exhaustion is recorded per state rather than thrown.
template <Environment E>
std::vector<StateEstimate> estimate_states(const E& env, const PolicySpec& policy, const std::vector<State>& states,
                                           const StoppingConfig& cfg, const TruncationPlan& plan, std::uint64_t seed,
                                           std::size_t workers) {
  std::vector<StateEstimate> out(states.size());
  parallel_for(states.size(), workers, [&](std::size_t i) {
    RngStream rng(seed, i);
    try {
      out[i].estimate = ebgstop_tau(env, policy, states[i], cfg, plan, rng);
    } catch (const BudgetExceeded& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

struct BuildOptions {
  double epsilon = 0.1;
  double delta = 0.1;
  double tau = 1.0;
  double clip = 2.0;
  std::uint64_t k_budget = 1;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::uint64_t max_samples = 100'000'000;
  std::string created;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("build: epsilon must be in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("build: delta must be in (0, 1)");
    if (!(tau >= 0.0)) throw std::invalid_argument("build: tau must be nonnegative");
    if (!(clip > 0.0)) throw std::invalid_argument("build: c must be positive");
    if (k_budget == 0) throw std::invalid_argument("build: K must be at least 1");
  }
};

inline CacheEntry make_entry(std::size_t id, const State& s, std::size_t dim, const EstimateResult& r) {
  CacheEntry e;
  e.id = id;
  e.coords.assign(s.coords.begin(), s.coords.begin() + static_cast<std::ptrdiff_t>(dim));
  e.terminal = s.terminal;
  e.value = r.value;
  e.samples_used = r.samples_used;
  e.trajectory_steps = r.trajectory_steps;
  e.termination = r.termination;
  return e;
}

inline CacheMeta base_meta(const EnvSpec& spec, const PolicySpec& policy, const BuildOptions& opt) {
  CacheMeta meta;
  meta.env_id = spec.id;
  meta.policy_id = policy.id;
  meta.epsilon = opt.epsilon;
  meta.delta = opt.delta;
  meta.tau = opt.tau;
  meta.clip = opt.clip;
  meta.k_budget = opt.k_budget;
  meta.gamma = spec.gamma;
  meta.v_max = spec.v_max;
  meta.r_max = spec.r_max;
  meta.seed = opt.seed;
  meta.created = opt.created;
  return meta;
}

// Offline cache for the clipped relative loss: m = required_states(eps/2),
// then each sampled state gets an (eps_bar, delta/(2m), tau) estimate, where
// the split guarantees |l(v_hat, v*) - l_hat(v_hat, v_bar)| <= eps with
// probability 1 - delta for up to K queries.
template <Environment E>
ValueCache build_cache(const E& env, const PolicySpec& policy, const BuildOptions& opt) {
  opt.validate();
  const EnvSpec& spec = env.spec();
  policy.validate(spec.action_count);
  const EpsilonSplit split = split_epsilon(opt.epsilon, opt.clip);
  ValueCache cache;
  cache.meta = base_meta(spec, policy, opt);
  cache.meta.builder = kBuilderAdaptive;
  cache.meta.loss = LossKind::cmapve;
  cache.meta.epsilon_m = split.epsilon_m;
  cache.meta.epsilon_bar = split.epsilon_bar;
  cache.meta.m = required_states(split.epsilon_m, opt.delta, opt.clip, opt.k_budget);
  cache.meta.per_state_delta = opt.delta / (2.0 * static_cast<double>(cache.meta.m));

  const TruncationPlan plan = TruncationPlan::for_env(spec, split.epsilon_bar, opt.tau);
  cache.meta.truncation = plan.mode;
  cache.meta.truncation_length = plan.length;

  RngStream state_rng(opt.seed, kStateSamplerStream);
  const auto states = sample_initial_states(env, cache.meta.m, state_rng);

  StoppingConfig cfg;
  cfg.epsilon = split.epsilon_bar;
  cfg.delta = cache.meta.per_state_delta;
  cfg.tau = opt.tau;
  cfg.v_max = spec.v_max;
  cfg.max_samples = opt.max_samples;
  const auto results = estimate_states(env, policy, states, cfg, plan, opt.seed, opt.workers);

  cache.entries.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!results[i].estimate) throw CacheBuildError(i, results[i].error);
    cache.entries.push_back(make_entry(i, states[i], spec.state_dim, *results[i].estimate));
    cache.meta.total_samples += results[i].estimate->samples_used;
    cache.meta.total_steps += results[i].estimate->trajectory_steps;
  }
  return cache;
}

struct FixedBudgetOptions {
  BuildOptions base;
  LossSpec loss{LossKind::cmave, 2.0, 0.0, 0.0, 0.0};
  std::size_t m = 0;  // clipped losses; ignored for MAVE/MSVE
  std::uint64_t max_rounds = 100'000'000;
};

// Offline cache for CMAVE/CMSVE/MAVE/MSVE using a fixed state count and
// round-robin Bernstein sampling until the average radius fits the budget.
template <Environment E>
ValueCache build_cache_fixed_budget(const E& env, const PolicySpec& policy, const FixedBudgetOptions& opt) {
  const BuildOptions& base = opt.base;
  if (!(base.epsilon > 0.0)) throw std::invalid_argument("build: epsilon must be positive");
  if (!(base.delta > 0.0 && base.delta < 1.0)) throw std::invalid_argument("build: delta must be in (0, 1)");
  if (base.k_budget == 0) throw std::invalid_argument("build: K must be at least 1");
  const EnvSpec& spec = env.spec();
  policy.validate(spec.action_count);

  // Returns are truncated so their bias uses at most a tenth of epsilon when
  // discounting; episodic returns are unbiased.
  TruncationPlan plan;
  double return_range = spec.v_max;
  double bias = 0.0;
  if (spec.gamma < 1.0) {
    const double bias_budget = is_squared(opt.loss.kind) ? std::sqrt(0.1 * base.epsilon) : 0.1 * base.epsilon;
    plan = TruncationPlan::discounted(spec, bias_budget, 1.0);
    return_range = discounted_return_range(spec.r_max, spec.gamma, plan.length);
    bias = truncation_bias(spec.r_max, spec.gamma, plan.length);
  } else {
    plan = TruncationPlan::episodic(spec);
  }
  const FixedBudgetPlan sizing = plan_fixed_budget(opt.loss, base.epsilon, base.delta, base.k_budget, opt.m, return_range, bias);

  ValueCache cache;
  cache.meta = base_meta(spec, policy, base);
  cache.meta.builder = kBuilderFixedBudget;
  cache.meta.loss = opt.loss.kind;
  cache.meta.clip = opt.loss.clip;
  cache.meta.tau = 0.0;
  cache.meta.alpha_se = opt.loss.alpha_se;
  cache.meta.beta_se = opt.loss.beta_se;
  cache.meta.m = sizing.m;
  cache.meta.state_term = sizing.state_term;
  cache.meta.truncation_term = sizing.truncation_term;
  cache.meta.zeta = sizing.zeta;
  cache.meta.per_state_delta = base.delta / (6.0 * static_cast<double>(sizing.m));
  cache.meta.truncation = plan.mode;
  cache.meta.truncation_length = plan.length;

  RngStream state_rng(base.seed, kStateSamplerStream);
  const auto states = sample_initial_states(env, sizing.m, state_rng);
  std::vector<RngStream> streams;
  streams.reserve(sizing.m);
  for (std::size_t i = 0; i < sizing.m; ++i) streams.emplace_back(base.seed, i);

  const FixedBudgetResult result = fixed_budget_bernstein(
      [&](std::size_t i) { return sample_return(env, policy, states[i], plan, streams[i]); }, sizing.m, sizing.zeta,
      sizing.range, base.delta, opt.max_rounds);
  cache.meta.rounds = result.rounds;
  for (std::size_t i = 0; i < sizing.m; ++i) {
    cache.entries.push_back(make_entry(i, states[i], spec.state_dim, result.estimates[i]));
    cache.meta.total_samples += result.estimates[i].samples_used;
    cache.meta.total_steps += result.estimates[i].trajectory_steps;
  }
  return cache;
}

struct ErrorReport {
  LossKind kind = LossKind::cmapve;
  std::size_t m = 0;
  double empirical_loss = 0.0;
  double deviation_bound = 0.0;
  double state_sampling_term = 0.0;
  double rollout_term = 0.0;
  double normalizer_term = 0.0;
  double truncation_term = 0.0;
  double confidence = 0.0;
  std::uint64_t k_consumed = 0;
  std::uint64_t k_budget = 0;
  bool certificate_void = false;
  bool advisory = false;
};

class MissingPredictions : public std::invalid_argument {
 public:
  explicit MissingPredictions(std::vector<std::size_t> missing_ids)
      : std::invalid_argument(describe(missing_ids)), ids(std::move(missing_ids)) {}
  std::vector<std::size_t> ids;

 private:
  static std::string describe(const std::vector<std::size_t>& ids) {
    std::string s = "missing predictions for state ids:";
    for (auto id : ids) s += " " + std::to_string(id);
    return s;
  }
};

enum class UsageMode { consume, read_only };

using Predictions = std::map<std::size_t, double>;

inline void check_compatible(const CacheMeta& meta, const LossSpec& spec) {
  spec.validate();
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument(std::string("cache certifies ") + to_string(meta.loss) + ", cannot evaluate " +
                                to_string(spec.kind) + ": " + why);
  };
  if (meta.loss != spec.kind) fail("different loss kind");
  if (is_clipped(spec.kind) && spec.clip != meta.clip) fail("clip c differs from the cache's");
  if (spec.kind == LossKind::cmapve && spec.tau != meta.tau) fail("tau differs from the cache's");
  if (!is_clipped(spec.kind) && (spec.alpha_se != meta.alpha_se || spec.beta_se != meta.beta_se))
    fail("sub-exponential parameters differ from the cache's");
}

// Empirical loss of `predictions` against the cache together with its
// certified deviation bound. In consume mode the query counter advances and
// the certificate is voided once more than K queries have been made.
inline ErrorReport evaluate(const Predictions& predictions, ValueCache& cache, const LossSpec& spec,
                            UsageMode mode = UsageMode::consume) {
  check_compatible(cache.meta, spec);
  std::vector<std::size_t> missing;
  std::vector<double> v_hat;
  v_hat.reserve(cache.entries.size());
  for (const auto& e : cache.entries) {
    const auto it = predictions.find(e.id);
    if (it == predictions.end()) {
      missing.push_back(e.id);
      continue;
    }
    v_hat.push_back(it->second);
  }
  if (!missing.empty()) throw MissingPredictions(std::move(missing));
  for (const auto& [id, _] : predictions)
    if (id >= cache.entries.size()) throw std::invalid_argument("prediction for unknown state id " + std::to_string(id));

  ErrorReport r;
  r.kind = spec.kind;
  r.m = cache.entries.size();
  r.empirical_loss = empirical_loss(v_hat, cache.values(), spec);
  r.deviation_bound = cache.meta.epsilon;
  r.confidence = 1.0 - cache.meta.delta;
  if (cache.meta.builder == kBuilderAdaptive) {
    const auto b = theorem1_bound(cache.meta.epsilon_bar, cache.meta.delta, cache.meta.clip, cache.meta.k_budget, r.m);
    r.state_sampling_term = b.state_sampling;
    r.rollout_term = b.rollout;
    r.normalizer_term = b.normalizer;
  } else {
    r.state_sampling_term = cache.meta.state_term;
    r.rollout_term = cache.meta.zeta;
    r.truncation_term = cache.meta.truncation_term;
  }
  if (mode == UsageMode::consume) {
    ++cache.k_consumed;
  } else {
    r.advisory = true;
  }
  r.k_consumed = cache.k_consumed;
  r.k_budget = cache.meta.k_budget;
  r.certificate_void = cache.k_consumed > cache.meta.k_budget;
  return r;
}

}  // namespace valcert
