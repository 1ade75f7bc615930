#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "valcert/mdp.hpp"

namespace valcert {

enum class TruncationMode { discounted, episodic };

inline const char* to_string(TruncationMode m) {
  return m == TruncationMode::discounted ? "discounted-truncation" : "episodic-to-termination";
}

// Number of steps l after which the discounted tail Rmax*gamma^l/(1-gamma) is
// at most epsilon*tau. Returns 1 when no truncation bias can arise.
inline std::uint64_t truncation_length(double epsilon, double tau, double gamma, double r_max) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("truncation_length: needs gamma < 1; use episodic mode instead");
  if (!(epsilon > 0.0)) throw std::invalid_argument("truncation_length: epsilon must be positive");
  if (!(tau >= 0.0) || !(r_max >= 0.0)) throw std::invalid_argument("truncation_length: tau and Rmax must be nonnegative");
  const double tolerance = epsilon * tau * (1.0 - gamma);
  if (r_max == 0.0 || r_max <= tolerance) return 1;
  if (tolerance == 0.0) throw std::invalid_argument("truncation_length: tau = 0 gives unbounded length");
  if (gamma == 0.0) return 1;
  const double l = std::ceil((std::log(tolerance) - std::log(r_max)) / std::log(gamma));
  return l < 1.0 ? 1 : static_cast<std::uint64_t>(l);
}

// How sampled returns are cut off: at a fixed discount threshold (gamma < 1)
// or at episode termination.
struct TruncationPlan {
  TruncationMode mode = TruncationMode::episodic;
  std::uint64_t length = 0;  // discounted mode only
  double epsilon = 0.0;
  double tau = 0.0;
  double gamma = 1.0;
  double r_max = 0.0;
  std::uint32_t step_limit = 1;

  static TruncationPlan discounted(const EnvSpec& spec, double epsilon, double tau) {
    TruncationPlan plan;
    plan.mode = TruncationMode::discounted;
    plan.epsilon = epsilon;
    plan.tau = tau;
    plan.gamma = spec.gamma;
    plan.r_max = spec.r_max;
    plan.length = truncation_length(epsilon, tau, spec.gamma, spec.r_max);
    plan.step_limit = spec.max_episode_steps;
    return plan;
  }

  static TruncationPlan episodic(const EnvSpec& spec) {
    if (!spec.episodic) throw std::invalid_argument(spec.id + ": episodic rollouts need an episodic environment");
    TruncationPlan plan;
    plan.mode = TruncationMode::episodic;
    plan.gamma = spec.gamma;
    plan.r_max = spec.r_max;
    plan.step_limit = spec.max_episode_steps;
    return plan;
  }

  // Discounted truncation whenever it is well defined, else run to termination.
  static TruncationPlan for_env(const EnvSpec& spec, double epsilon, double tau) {
    if (spec.gamma < 1.0 && (epsilon * tau > 0.0 || spec.r_max == 0.0)) return discounted(spec, epsilon, tau);
    return episodic(spec);
  }
};

struct ReturnSample {
  double value = 0.0;
  std::uint64_t steps = 0;
};

class RolloutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One sampled (possibly truncated) return from `start`.
//
// Discounted mode steps while the running discount exceeds
// epsilon*tau*(1-gamma)/Rmax, which takes exactly truncation_length() steps
// unless the episode ends first. Episodic mode runs to termination and treats
// exceeding the step limit as a misconfigured environment.
template <Environment E>
ReturnSample sample_return(const E& env, const PolicySpec& policy, const State& start, const TruncationPlan& plan,
                           RngStream& rng) {
  ReturnSample out;
  if (start.terminal) return out;
  const EnvSpec& spec = env.spec();
  const double gamma = plan.gamma;
  double discount = 1.0;
  State s = start;
  if (plan.mode == TruncationMode::discounted) {
    const double threshold = plan.r_max > 0.0 ? plan.epsilon * plan.tau * (1.0 - gamma) / plan.r_max
                                              : std::numeric_limits<double>::infinity();
    do {
      const auto a = policy.sample(s, spec.action_count, rng);
      const auto [next, reward] = env.step(s, a, rng);
      check_reward_bound(spec, reward);
      out.value += discount * reward;
      discount *= gamma;
      ++out.steps;
      s = next;
    } while (!s.terminal && discount > threshold);
    return out;
  }
  while (!s.terminal) {
    if (out.steps >= plan.step_limit)
      throw RolloutError(spec.id + ": episode did not terminate within " + std::to_string(plan.step_limit) + " steps");
    const auto a = policy.sample(s, spec.action_count, rng);
    const auto [next, reward] = env.step(s, a, rng);
    check_reward_bound(spec, reward);
    out.value += discount * reward;
    discount *= gamma;
    ++out.steps;
    s = next;
  }
  return out;
}

}  // namespace valcert
