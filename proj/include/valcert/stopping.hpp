#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "valcert/mdp.hpp"
#include "valcert/rollout.hpp"

namespace valcert {

// Running mean and sum of squared deviations (Welford).
class WelfordAccumulator {
 public:
  void add(double g) {
    ++count_;
    const double delta = g - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (g - mean_);
  }

  std::uint64_t count() const { return count_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }
  // Biased (1/j) variance, as used by the empirical Bernstein radius.
  double variance() const { return count_ == 0 ? 0.0 : std::max(0.0, m2_) / static_cast<double>(count_); }
  double stddev() const { return std::sqrt(variance()); }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Empirical Bernstein half-width sigma*sqrt(2x/j) + 3*Vmax*x/j.
inline double bernstein_radius(double sigma, double x, std::uint64_t j, double v_max) {
  const auto n = static_cast<double>(j);
  return sigma * std::sqrt(2.0 * x / n) + 3.0 * v_max * x / n;
}

// x = -alpha * log(delta (p-1) / (union_factor * p * h^p)). The union factor is
// 3 for a single-state stopping rule and 6m for the fixed-budget loop.
inline double confidence_exponent(double alpha, double delta, double p, std::uint64_t h, double union_factor) {
  if (h == 0) throw std::invalid_argument("confidence_exponent: h must be at least 1");
  const double arg = delta * (p - 1.0) / (union_factor * p * std::pow(static_cast<double>(h), p));
  if (!(arg > 0.0 && arg < 1.0)) throw std::domain_error("confidence_exponent: log argument outside (0, 1)");
  return -alpha * std::log(arg);
}

// Geometric check-point schedule: x is recomputed when the sample count
// reaches floor(beta^h). Runs of equal thresholds (1, 1, 1, ..., 2, 2, ...)
// are skipped in one advance so each sample count recomputes x at most once.
class GeometricSchedule {
 public:
  GeometricSchedule(double delta, double union_factor, double beta = 1.1, double p = 1.1)
      : delta_(delta), union_factor_(union_factor), beta_(beta), p_(p) {
    if (!(beta > 1.0)) throw std::invalid_argument("GeometricSchedule: beta must exceed 1");
    if (!(p > 1.0)) throw std::invalid_argument("GeometricSchedule: p must exceed 1");
  }

  static std::uint64_t checkpoint(double beta, std::uint64_t h) {
    return static_cast<std::uint64_t>(std::floor(std::pow(beta, static_cast<double>(h))));
  }

  // Returns true when the sample count j triggered a recomputation of x.
  bool advance(std::uint64_t j) {
    if (j < checkpoint(beta_, h_)) return false;
    do {
      ++h_;
    } while (checkpoint(beta_, h_) <= j);
    alpha_ = static_cast<double>(checkpoint(beta_, h_)) / static_cast<double>(checkpoint(beta_, h_ - 1));
    x_ = confidence_exponent(alpha_, delta_, p_, h_, union_factor_);
    return true;
  }

  std::uint64_t h() const { return h_; }
  double alpha() const { return alpha_; }
  double x() const { return x_; }
  std::uint64_t next_checkpoint() const { return checkpoint(beta_, h_); }

 private:
  double delta_;
  double union_factor_;
  double beta_;
  double p_;
  std::uint64_t h_ = 0;
  double alpha_ = 1.0;
  double x_ = 1.0;
};

struct StoppingConfig {
  double epsilon = 0.1;
  double delta = 0.1;
  double tau = 1.0;
  double v_max = 1.0;
  double beta = 1.1;
  double p = 1.1;
  std::uint64_t max_samples = 100'000'000;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("stopping: epsilon must be in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("stopping: delta must be in (0, 1)");
    if (!(tau >= 0.0)) throw std::invalid_argument("stopping: tau must be nonnegative");
    if (!(v_max >= 0.0)) throw std::invalid_argument("stopping: Vmax must be nonnegative");
    if (max_samples == 0) throw std::invalid_argument("stopping: sample ceiling must be positive");
  }
};

enum class Termination { relative_width, absolute_tau, terminal_state, fixed_budget };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::relative_width: return "relative-width";
    case Termination::absolute_tau: return "absolute-tau";
    case Termination::terminal_state: return "terminal-state";
    case Termination::fixed_budget: return "fixed-budget";
  }
  return "unknown";
}

inline Termination termination_from_string(const std::string& s) {
  if (s == "relative-width") return Termination::relative_width;
  if (s == "absolute-tau") return Termination::absolute_tau;
  if (s == "terminal-state") return Termination::terminal_state;
  if (s == "fixed-budget") return Termination::fixed_budget;
  throw std::invalid_argument("unknown termination case '" + s + "'");
}

struct EstimateResult {
  double value = 0.0;
  std::uint64_t samples_used = 0;
  Termination termination = Termination::relative_width;
  std::uint64_t trajectory_steps = 0;
};

struct StoppingProgress {
  std::uint64_t samples = 0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double signed_lower = 0.0;
  double signed_upper = 0.0;
};

using ProgressHook = std::function<void(const StoppingProgress&)>;

class BudgetExceeded : public std::runtime_error {
 public:
  BudgetExceeded(std::uint64_t samples, const StoppingProgress& at)
      : std::runtime_error("sample ceiling of " + std::to_string(samples) +
                           " reached without meeting the stopping condition (|mean| bounds [" +
                           std::to_string(at.lower) + ", " + std::to_string(at.upper) + "])"),
        progress(at) {}
  StoppingProgress progress;
};

// Bounds shared by the Bernstein and bootstrap stopping rules: LB/UB bracket
// the absolute mean, the signed pair brackets the mean itself.
class IntervalState {
 public:
  IntervalState(double epsilon, double tau) : epsilon_(epsilon), tau_(tau) {}

  void tighten(double mean, double radius) {
    lower_ = std::max(lower_, std::abs(mean) - radius);
    upper_ = std::min(upper_, std::abs(mean) + radius);
    signed_lower_ = std::max(signed_lower_, mean - radius);
    signed_upper_ = std::min(signed_upper_, mean + radius);
  }

  // Loop guard of the relative-error rule.
  bool running() const {
    return (1.0 + epsilon_) * lower_ + 2.0 * epsilon_ * tau_ < (1.0 - epsilon_) * upper_ || lower_ == 0.0;
  }
  bool within_tau() const { return (signed_upper_ - signed_lower_) / 2.0 <= epsilon_ * tau_; }

  double relative_estimate(double mean) const {
    const double sign = mean > 0.0 ? 1.0 : (mean < 0.0 ? -1.0 : 0.0);
    return sign / 2.0 * ((1.0 + epsilon_) * lower_ + (1.0 - epsilon_) * upper_);
  }
  double tau_estimate() const { return (signed_upper_ + signed_lower_) / 2.0; }

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  double signed_lower() const { return signed_lower_; }
  double signed_upper() const { return signed_upper_; }

 private:
  double epsilon_;
  double tau_;
  double lower_ = 0.0;
  double upper_ = std::numeric_limits<double>::infinity();
  double signed_lower_ = -std::numeric_limits<double>::infinity();
  double signed_upper_ = std::numeric_limits<double>::infinity();
};

// Incremental state of the tau-generalised empirical Bernstein stopping rule.
//
// Feed returns one at a time with add(); it yields the estimate once either
// the relative-width condition or the absolute epsilon*tau condition holds.
class EbgStopState {
 public:
  explicit EbgStopState(const StoppingConfig& cfg)
      : cfg_(cfg), schedule_(cfg.delta, 3.0, cfg.beta, cfg.p), bounds_(cfg.epsilon, cfg.tau) {
    cfg_.validate();
  }

  std::optional<EstimateResult> add(double g, std::uint64_t steps = 0) {
    acc_.add(g);
    steps_ += steps;
    const std::uint64_t j = acc_.count();
    const bool checkpoint = schedule_.advance(j);
    radius_ = bernstein_radius(acc_.stddev(), schedule_.x(), j, cfg_.v_max);
    bounds_.tighten(acc_.mean(), radius_);
    if (checkpoint && hook_) hook_(progress());
    if (bounds_.within_tau()) return finish(bounds_.tau_estimate(), Termination::absolute_tau);
    if (!bounds_.running()) return finish(bounds_.relative_estimate(acc_.mean()), Termination::relative_width);
    if (j >= cfg_.max_samples) throw BudgetExceeded(j, progress());
    return std::nullopt;
  }

  void set_progress_hook(ProgressHook hook) { hook_ = std::move(hook); }

  StoppingProgress progress() const {
    return {acc_.count(), acc_.mean(), bounds_.lower(), bounds_.upper(), bounds_.signed_lower(), bounds_.signed_upper()};
  }
  const WelfordAccumulator& accumulator() const { return acc_; }
  const GeometricSchedule& schedule() const { return schedule_; }
  const IntervalState& bounds() const { return bounds_; }
  double radius() const { return radius_; }

 private:
  EstimateResult finish(double value, Termination how) const { return {value, acc_.count(), how, steps_}; }

  StoppingConfig cfg_;
  WelfordAccumulator acc_;
  GeometricSchedule schedule_;
  IntervalState bounds_;
  double radius_ = std::numeric_limits<double>::infinity();
  std::uint64_t steps_ = 0;
  ProgressHook hook_;
};

// Draws from `sample` (a callable returning ReturnSample) until the stopping
// rule fires. Throws BudgetExceeded at cfg.max_samples.
template <class Sampler>
EstimateResult ebgstop_tau(Sampler&& sample, const StoppingConfig& cfg, const ProgressHook& hook = {}) {
  EbgStopState state(cfg);
  if (hook) state.set_progress_hook(hook);
  for (;;) {
    const ReturnSample r = sample();
    if (auto done = state.add(r.value, r.steps)) return *done;
  }
}

// Terminal start states have value 0 by definition and need no rollouts.
template <Environment E>
EstimateResult ebgstop_tau(const E& env, const PolicySpec& policy, const State& s, const StoppingConfig& cfg,
                           const TruncationPlan& plan, RngStream& rng, const ProgressHook& hook = {}) {
  if (s.terminal) return {0.0, 0, Termination::terminal_state, 0};
  return ebgstop_tau([&] { return sample_return(env, policy, s, plan, rng); }, cfg, hook);
}

struct FixedBudgetResult {
  std::vector<EstimateResult> estimates;
  std::vector<double> stddevs;
  std::uint64_t rounds = 0;
  double mean_radius = 0.0;
};

// Fixed-m loop: one new return per state per round until the average
// Bernstein radius over all m states is at most zeta. `sample(i)` draws a
// return for state i; `range` is the Bernstein range substituted for Vmax.
template <class Sampler>
FixedBudgetResult fixed_budget_bernstein(Sampler&& sample, std::size_t m, double zeta, double range, double delta,
                                         std::uint64_t max_rounds = 100'000'000, double beta = 1.1, double p = 1.1) {
  if (m == 0) throw std::invalid_argument("fixed_budget_bernstein: m must be positive");
  if (!(zeta > 0.0)) throw std::invalid_argument("fixed_budget_bernstein: zeta must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("fixed_budget_bernstein: delta must be in (0, 1)");
  const double union_factor = 6.0 * static_cast<double>(m);
  std::vector<WelfordAccumulator> acc(m);
  std::vector<GeometricSchedule> schedule(m, GeometricSchedule(delta, union_factor, beta, p));
  std::vector<std::uint64_t> steps(m, 0);
  FixedBudgetResult out;
  for (;;) {
    ++out.rounds;
    double radius_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const ReturnSample r = sample(i);
      acc[i].add(r.value);
      steps[i] += r.steps;
      schedule[i].advance(acc[i].count());
      radius_sum += bernstein_radius(acc[i].stddev(), schedule[i].x(), acc[i].count(), range);
    }
    out.mean_radius = radius_sum / static_cast<double>(m);
    if (out.mean_radius <= zeta) break;
    if (out.rounds >= max_rounds)
      throw BudgetExceeded(out.rounds, StoppingProgress{out.rounds, 0.0, out.mean_radius, zeta, 0.0, 0.0});
  }
  out.estimates.reserve(m);
  out.stddevs.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.estimates.push_back({acc[i].mean(), acc[i].count(), Termination::fixed_budget, steps[i]});
    out.stddevs.push_back(acc[i].stddev());
  }
  return out;
}

// Linear-interpolated percentile (0..100) of an already sorted sequence.
inline double sorted_percentile(std::span<const double> sorted, double pct) {
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty sequence");
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Half-width of the bootstrap interval for a mean of j returns: resample k
// sets of size j from `batch`, and take the larger distance from the batch
// mean to the pct-th and (100 - pct)-th percentiles of the set means.
inline double bootstrap_half_width(std::span<const double> batch, std::uint64_t j, std::size_t k, double pct,
                                   RngStream& rng) {
  if (j == 0 || k == 0) throw std::invalid_argument("bootstrap: j and k must be positive");
  if (batch.empty()) throw std::invalid_argument("bootstrap: empty empirical distribution");
  double centre = 0.0;
  for (double g : batch) centre += g;
  centre /= static_cast<double>(batch.size());
  std::vector<double> means(k);
  for (auto& mean : means) {
    double sum = 0.0;
    for (std::uint64_t t = 0; t < j; ++t) sum += batch[rng.below(batch.size())];
    mean = sum / static_cast<double>(j);
  }
  std::sort(means.begin(), means.end());
  const double lo = sorted_percentile(means, pct);
  const double hi = sorted_percentile(means, 100.0 - pct);
  return std::max({centre - lo, hi - centre, 0.0});
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

// Bootstrap bounds on |mean| around the batch's own mean.
inline Interval bootstrap_interval(std::span<const double> batch, std::uint64_t j, std::size_t k, double pct,
                                   RngStream& rng) {
  const double c = bootstrap_half_width(batch, j, k, pct, rng);
  double centre = 0.0;
  for (double g : batch) centre += g;
  centre = std::abs(centre / static_cast<double>(batch.size()));
  return {std::max(0.0, centre - c), centre + c};
}

// Lower percentile (0..100) for a bootstrap interval at a check point with
// exponent x: the failure probability 3e^{-x} the Bernstein bound allows there.
inline double bootstrap_percentile(double x) { return std::min(50.0, 300.0 * std::exp(-x)); }

// Same stopping logic as EbgStopState with intervals from bootstrap
// resampling of a pre-drawn batch. Bounds are refreshed at geometric
// check points only, since each refresh costs k*j draws.
class BootstrapStopState {
 public:
  BootstrapStopState(std::span<const double> batch, const StoppingConfig& cfg, std::size_t k, RngStream& rng)
      : batch_(batch), cfg_(cfg), k_(k), rng_(rng), schedule_(cfg.delta, 3.0, cfg.beta, cfg.p),
        bounds_(cfg.epsilon, cfg.tau) {
    cfg_.validate();
    if (k == 0) throw std::invalid_argument("bootstrap: k must be positive");
    if (batch.empty()) throw std::invalid_argument("bootstrap: empty empirical distribution");
  }

  std::optional<EstimateResult> add(double g, std::uint64_t steps = 0) {
    acc_.add(g);
    steps_ += steps;
    const std::uint64_t j = acc_.count();
    if (schedule_.advance(j)) {
      pct_ = bootstrap_percentile(schedule_.x());
      bounds_.tighten(acc_.mean(), bootstrap_half_width(batch_, j, k_, pct_, rng_));
      if (bounds_.within_tau()) return EstimateResult{bounds_.tau_estimate(), j, Termination::absolute_tau, steps_};
      if (!bounds_.running())
        return EstimateResult{bounds_.relative_estimate(acc_.mean()), j, Termination::relative_width, steps_};
    }
    if (j >= cfg_.max_samples)
      throw BudgetExceeded(j, {j, acc_.mean(), bounds_.lower(), bounds_.upper(), bounds_.signed_lower(),
                               bounds_.signed_upper()});
    return std::nullopt;
  }

  double percentile() const { return pct_; }

 private:
  std::span<const double> batch_;
  StoppingConfig cfg_;
  std::size_t k_;
  double pct_ = 50.0;
  RngStream& rng_;
  WelfordAccumulator acc_;
  GeometricSchedule schedule_;
  IntervalState bounds_;
  std::uint64_t steps_ = 0;
};

}  // namespace valcert
