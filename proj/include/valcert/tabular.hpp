#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "valcert/mdp.hpp"

namespace valcert {

struct Outcome {
  double probability = 1.0;
  std::size_t next = 0;
  double reward = 0.0;
};

// Finite MDP with explicit outcome lists per (state, action). Used for the
// analytically solvable test problems; its exact values come from
// chain_true_values().
class TabularMdp {
 public:
  using OutcomeTable = std::vector<std::vector<std::vector<Outcome>>>;

  TabularMdp(EnvSpec spec, OutcomeTable outcomes, std::vector<bool> terminal,
             std::vector<double> initial = {})
      : spec_(std::move(spec)), outcomes_(std::move(outcomes)), terminal_(std::move(terminal)),
        initial_(std::move(initial)) {
    spec_.validate();
    const std::size_t n = outcomes_.size();
    if (n == 0 || terminal_.size() != n) throw std::invalid_argument("TabularMdp: inconsistent state count");
    for (std::size_t s = 0; s < n; ++s) {
      if (outcomes_[s].size() != spec_.action_count)
        throw std::invalid_argument("TabularMdp: wrong action count for state " + std::to_string(s));
      if (terminal_[s]) continue;
      for (const auto& list : outcomes_[s]) {
        double sum = 0.0;
        for (const auto& o : list) {
          if (o.next >= n) throw std::invalid_argument("TabularMdp: successor out of range");
          if (std::abs(o.reward) > spec_.r_max) throw std::invalid_argument("TabularMdp: reward exceeds Rmax");
          sum += o.probability;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("TabularMdp: outcome probabilities must sum to 1");
      }
    }
    if (initial_.empty()) {
      initial_.assign(n, 0.0);
      const auto live = static_cast<double>(std::count(terminal_.begin(), terminal_.end(), false));
      for (std::size_t s = 0; s < n; ++s)
        if (!terminal_[s]) initial_[s] = 1.0 / live;
    }
    if (initial_.size() != n) throw std::invalid_argument("TabularMdp: initial distribution has wrong size");
  }

  const EnvSpec& spec() const { return spec_; }
  std::size_t num_states() const { return outcomes_.size(); }
  bool is_terminal(std::size_t s) const { return terminal_[s]; }
  const std::vector<Outcome>& outcomes(std::size_t s, std::size_t a) const { return outcomes_[s][a]; }
  const std::vector<double>& initial_distribution() const { return initial_; }

  State state(std::size_t s) const {
    State st;
    st.coords[0] = static_cast<double>(s);
    st.terminal = terminal_[s];
    return st;
  }

  static std::size_t index_of(const State& s) { return static_cast<std::size_t>(s.coords[0]); }

  bool in_bounds(const State& s) const {
    const double x = s.coords[0];
    return x >= 0.0 && x < static_cast<double>(num_states()) && x == std::floor(x);
  }

  StepResult step(const State& s, std::size_t a, RngStream& rng) const {
    check_step_preconditions(spec_, s, a);
    const auto& list = outcomes_[index_of(s)][a];
    const Outcome* chosen = &list.back();
    if (list.size() > 1) {
      double u = rng.uniform();
      for (const auto& o : list) {
        if (u < o.probability) {
          chosen = &o;
          break;
        }
        u -= o.probability;
      }
    }
    StepResult out;
    out.next = state(chosen->next);
    out.next.steps = s.steps + 1;
    out.reward = chosen->reward;
    return out;
  }

  State sample_state(RngStream& rng) const {
    double u = rng.uniform();
    std::size_t pick = num_states() - 1;
    for (std::size_t s = 0; s < num_states(); ++s) {
      if (u < initial_[s]) {
        pick = s;
        break;
      }
      u -= initial_[s];
    }
    return state(pick);
  }

 private:
  EnvSpec spec_;
  OutcomeTable outcomes_;
  std::vector<bool> terminal_;
  std::vector<double> initial_;
};

// Exact values v = r_pi + gamma * P_pi v by direct linear solve. Terminal
// states are pinned to zero. Throws if the system is singular (e.g. gamma = 1
// on a chain with no reachable terminal state).
inline std::vector<double> chain_true_values(const TabularMdp& mdp, const PolicySpec& policy) {
  const std::size_t n = mdp.num_states();
  const std::size_t na = mdp.spec().action_count;
  const double gamma = mdp.spec().gamma;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t s = 0; s < n; ++s) {
    if (mdp.is_terminal(s)) continue;
    const auto probs = policy.probabilities(mdp.state(s), na);
    for (std::size_t act = 0; act < na; ++act) {
      for (const auto& o : mdp.outcomes(s, act)) {
        const double w = probs[act] * o.probability;
        b(static_cast<Eigen::Index>(s)) += w * o.reward;
        if (!mdp.is_terminal(o.next))
          a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o.next)) -= gamma * w;
      }
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw std::domain_error("chain_true_values: singular system (no discounting and no termination?)");
  const Eigen::VectorXd v = lu.solve(b);
  return {v.data(), v.data() + v.size()};
}

// Chain 0 -> 1 -> ... -> n-1 with state n-1 terminal. Action 1 moves right,
// action 0 moves left (reflecting at 0). Reward `goal_reward` on entering the
// terminal state, zero otherwise.
inline TabularMdp make_deterministic_chain(std::size_t n, double gamma, double goal_reward = 1.0) {
  if (n < 2) throw std::invalid_argument("chain needs at least 2 states");
  EnvSpec spec;
  spec.id = "deterministic-chain";
  spec.state_dim = 1;
  spec.action_count = 2;
  spec.gamma = gamma;
  spec.r_max = std::abs(goal_reward);
  spec.v_max = std::abs(goal_reward);
  spec.episodic = true;
  spec.max_episode_steps = 1'000'000;
  TabularMdp::OutcomeTable table(n, std::vector<std::vector<Outcome>>(2));
  std::vector<bool> terminal(n, false);
  terminal[n - 1] = true;
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t left = s == 0 ? 0 : s - 1;
    const std::size_t right = s + 1 < n ? s + 1 : s;
    table[s][0] = {{1.0, left, 0.0}};
    table[s][1] = {{1.0, right, right == n - 1 ? goal_reward : 0.0}};
  }
  return TabularMdp(spec, std::move(table), std::move(terminal));
}

// Same topology as the deterministic chain; intended for a stochastic policy
// (uniform left/right), which turns it into a random walk with a reflecting
// left end.
inline TabularMdp make_random_walk_chain(std::size_t n, double gamma) {
  auto mdp = make_deterministic_chain(n, gamma);
  EnvSpec spec = mdp.spec();
  spec.id = "chain";
  TabularMdp::OutcomeTable table(n, std::vector<std::vector<Outcome>>(2));
  std::vector<bool> terminal(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    terminal[s] = mdp.is_terminal(s);
    for (std::size_t a = 0; a < 2; ++a) table[s][a] = mdp.outcomes(s, a);
  }
  return TabularMdp(spec, std::move(table), std::move(terminal));
}

// Zero rewards everywhere: every value is exactly 0.
inline TabularMdp make_zero_reward_chain(std::size_t n) {
  EnvSpec spec;
  spec.id = "zero-reward";
  spec.action_count = 2;
  spec.gamma = 1.0;
  spec.r_max = 0.0;
  spec.v_max = 0.0;
  spec.max_episode_steps = 1'000'000;
  TabularMdp::OutcomeTable table(n, std::vector<std::vector<Outcome>>(2));
  std::vector<bool> terminal(n, false);
  terminal[n - 1] = true;
  for (std::size_t s = 0; s < n; ++s) {
    table[s][0] = {{1.0, s == 0 ? 0 : s - 1, 0.0}};
    table[s][1] = {{1.0, s + 1 < n ? s + 1 : s, 0.0}};
  }
  return TabularMdp(spec, std::move(table), std::move(terminal));
}

// One-step problem: the start state moves to the terminal state with reward 1
// with probability p and reward 0 otherwise. Returns are Bernoulli(p).
inline TabularMdp make_bernoulli_bandit(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("bandit probability must be in [0, 1]");
  EnvSpec spec;
  spec.id = "bandit";
  spec.action_count = 1;
  spec.gamma = 1.0;
  spec.r_max = 1.0;
  spec.v_max = 1.0;
  spec.max_episode_steps = 1;
  TabularMdp::OutcomeTable table(2, std::vector<std::vector<Outcome>>(1));
  table[0][0] = {{p, 1, 1.0}, {1.0 - p, 1, 0.0}};
  table[1][0] = {{1.0, 1, 0.0}};
  return TabularMdp(spec, std::move(table), {false, true}, {1.0, 0.0});
}

// Continuing ring of n states with a reward on every transition:
// entering state k pays sin(2*pi*k/n) + 0.5*cos(6*pi*k/n), scaled into [-1, 1].
// Actions step left/right with a 10% slip to the opposite side.
inline TabularMdp make_reward_ring(std::size_t n, double gamma) {
  if (n < 3) throw std::invalid_argument("ring needs at least 3 states");
  if (!(gamma < 1.0)) throw std::invalid_argument("ring is continuing and needs gamma < 1");
  EnvSpec spec;
  spec.id = "ring";
  spec.action_count = 2;
  spec.gamma = gamma;
  spec.r_max = 1.0;
  spec.v_max = 1.0 / (1.0 - gamma);
  spec.episodic = false;
  spec.max_episode_steps = 1'000'000;
  auto reward = [n](std::size_t k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    return (std::sin(t) + 0.5 * std::cos(3.0 * t)) / 1.5;
  };
  TabularMdp::OutcomeTable table(n, std::vector<std::vector<Outcome>>(2));
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t left = (s + n - 1) % n;
    const std::size_t right = (s + 1) % n;
    table[s][0] = {{0.9, left, reward(left)}, {0.1, right, reward(right)}};
    table[s][1] = {{0.9, right, reward(right)}, {0.1, left, reward(left)}};
  }
  return TabularMdp(spec, std::move(table), std::vector<bool>(n, false));
}

}  // namespace valcert
