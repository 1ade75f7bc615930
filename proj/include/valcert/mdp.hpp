#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "valcert/rng.hpp"

namespace valcert {

inline constexpr std::size_t kMaxStateDim = 2;

// A point in an environment's state space. Tabular environments store the
// state index in coords[0]. `steps` counts transitions taken in the current
// episode so that time-limited environments can end episodes by themselves.
struct State {
  std::array<double, kMaxStateDim> coords{};
  std::uint32_t steps = 0;
  bool terminal = false;

  friend bool operator==(const State&, const State&) = default;
};

struct EnvSpec {
  std::string id;
  std::size_t state_dim = 1;
  std::size_t action_count = 1;
  double gamma = 1.0;
  double r_max = 0.0;
  double v_max = 0.0;
  bool episodic = true;
  std::uint32_t max_episode_steps = 1;

  void validate() const {
    if (state_dim == 0 || state_dim > kMaxStateDim)
      throw std::invalid_argument("EnvSpec: state dimension must be in [1, " +
                                  std::to_string(kMaxStateDim) + "]");
    if (action_count == 0) throw std::invalid_argument("EnvSpec: action count must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("EnvSpec: gamma must be in [0, 1]");
    if (!(r_max >= 0.0)) throw std::invalid_argument("EnvSpec: Rmax must be nonnegative");
    if (!(v_max >= 0.0)) throw std::invalid_argument("EnvSpec: Vmax must be nonnegative");
    if (gamma < 1.0 && v_max > r_max / (1.0 - gamma) * (1.0 + 1e-12))
      throw std::invalid_argument("EnvSpec: Vmax exceeds Rmax/(1-gamma)");
    if (max_episode_steps == 0) throw std::invalid_argument("EnvSpec: max episode steps must be positive");
  }
};

struct StepResult {
  State next;
  double reward = 0.0;
};

// Thrown when a simulator is driven outside its contract (stepping a terminal
// state, an out-of-range action, a reward above the declared Rmax).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <class E>
concept Environment = requires(const E& env, const State& s, std::size_t a, RngStream& rng) {
  { env.spec() } -> std::convertible_to<const EnvSpec&>;
  { env.step(s, a, rng) } -> std::same_as<StepResult>;
  { env.sample_state(rng) } -> std::same_as<State>;
  { env.in_bounds(s) } -> std::same_as<bool>;
};

inline void check_step_preconditions(const EnvSpec& spec, const State& s, std::size_t a) {
  if (s.terminal) throw ContractViolation(spec.id + ": step called on a terminal state");
  if (a >= spec.action_count)
    throw ContractViolation(spec.id + ": action " + std::to_string(a) + " out of range");
}

inline void check_reward_bound(const EnvSpec& spec, double r) {
  if (std::abs(r) > spec.r_max * (1.0 + 1e-12) + 1e-12)
    throw ContractViolation(spec.id + ": reward " + std::to_string(r) + " exceeds Rmax");
}

enum class PolicyKind { uniform, energy_pumping, tabular, fixed_action };

// A fixed stochastic target policy.
//
// With probability `mixing` the action is drawn uniformly; otherwise it comes
// from the base rule selected by `kind`. Energy pumping reads the velocity
// from coords[1] and accelerates along it (actions: 0 reverse, 1 coast,
// 2 forward). Tabular policies index rows by the state index in coords[0].
struct PolicySpec {
  std::string id = "uniform";
  PolicyKind kind = PolicyKind::uniform;
  double mixing = 0.0;
  std::size_t action = 0;
  std::vector<std::vector<double>> table;

  static PolicySpec uniform() { return {}; }
  static PolicySpec energy_pumping(double mixing) {
    PolicySpec p;
    p.id = "energy-pumping";
    p.kind = PolicyKind::energy_pumping;
    p.mixing = mixing;
    return p;
  }
  static PolicySpec fixed(std::size_t action, std::string id = "fixed") {
    PolicySpec p;
    p.id = std::move(id);
    p.kind = PolicyKind::fixed_action;
    p.action = action;
    return p;
  }
  static PolicySpec tabular(std::vector<std::vector<double>> rows, std::string id = "tabular") {
    PolicySpec p;
    p.id = std::move(id);
    p.kind = PolicyKind::tabular;
    p.table = std::move(rows);
    return p;
  }

  void validate(std::size_t action_count) const {
    if (!(mixing >= 0.0 && mixing <= 1.0)) throw std::invalid_argument("policy mixing must be in [0, 1]");
    if (kind == PolicyKind::fixed_action && action >= action_count)
      throw std::invalid_argument("fixed policy action out of range");
    if (kind == PolicyKind::energy_pumping && action_count != 3)
      throw std::invalid_argument("energy pumping policy needs exactly 3 actions");
    if (kind == PolicyKind::tabular) {
      for (const auto& row : table) {
        if (row.size() != action_count) throw std::invalid_argument("tabular policy row has wrong width");
        double sum = 0.0;
        for (double q : row) {
          if (q < 0.0) throw std::invalid_argument("tabular policy has a negative probability");
          sum += q;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("tabular policy row does not sum to 1");
      }
    }
  }

  std::vector<double> probabilities(const State& s, std::size_t action_count) const {
    std::vector<double> probs(action_count, 0.0);
    switch (kind) {
      case PolicyKind::uniform:
        for (auto& q : probs) q = 1.0 / static_cast<double>(action_count);
        return probs;
      case PolicyKind::energy_pumping:
        probs[energy_pumping_action(s)] = 1.0;
        break;
      case PolicyKind::fixed_action:
        probs[action] = 1.0;
        break;
      case PolicyKind::tabular:
        probs = table_row(s);
        break;
    }
    for (auto& q : probs) q = (1.0 - mixing) * q + mixing / static_cast<double>(action_count);
    return probs;
  }

  std::size_t sample(const State& s, std::size_t action_count, RngStream& rng) const {
    if (kind == PolicyKind::uniform) return rng.below(action_count);
    if (mixing > 0.0 && rng.uniform() < mixing) return rng.below(action_count);
    switch (kind) {
      case PolicyKind::energy_pumping:
        return energy_pumping_action(s);
      case PolicyKind::fixed_action:
        return action;
      case PolicyKind::tabular: {
        const auto& row = table_row(s);
        double u = rng.uniform();
        for (std::size_t a = 0; a + 1 < row.size(); ++a) {
          if (u < row[a]) return a;
          u -= row[a];
        }
        return row.size() - 1;
      }
      case PolicyKind::uniform:
        break;
    }
    return rng.below(action_count);
  }

 private:
  static std::size_t energy_pumping_action(const State& s) { return s.coords[1] < 0.0 ? 0 : 2; }

  const std::vector<double>& table_row(const State& s) const {
    const auto idx = static_cast<std::size_t>(s.coords[0]);
    if (idx >= table.size()) throw ContractViolation("tabular policy has no row for state " + std::to_string(idx));
    return table[idx];
  }
};

template <Environment E>
std::vector<State> sample_initial_states(const E& env, std::size_t m, RngStream& rng) {
  if (m == 0) throw std::invalid_argument("sample_initial_states: m must be at least 1");
  std::vector<State> states;
  states.reserve(m);
  for (std::size_t i = 0; i < m; ++i) states.push_back(env.sample_state(rng));
  return states;
}

}  // namespace valcert
