#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "valcert/benchmarks.hpp"
#include "valcert/mdp.hpp"
#include "valcert/tabular.hpp"

namespace valcert {

using AnyEnvironment = std::variant<TabularMdp, MountainCar, PuddleWorld>;

struct EnvConfig {
  std::string name = "chain";
  std::size_t states = 7;  // chain-like environments
  double gamma = 0.9;      // chain-like environments; benchmarks are undiscounted
  double bandit_p = 0.5;
};

inline const std::vector<std::string>& environment_names() {
  static const std::vector<std::string> names{"chain",       "deterministic-chain", "ring",        "bandit",
                                              "zero-reward", "mountain-car",        "puddle-world"};
  return names;
}

inline AnyEnvironment make_environment(const EnvConfig& cfg) {
  if (cfg.name == "chain") return make_random_walk_chain(cfg.states, cfg.gamma);
  if (cfg.name == "deterministic-chain") return make_deterministic_chain(cfg.states, cfg.gamma);
  if (cfg.name == "ring") return make_reward_ring(cfg.states, cfg.gamma);
  if (cfg.name == "bandit") return make_bernoulli_bandit(cfg.bandit_p);
  if (cfg.name == "zero-reward") return make_zero_reward_chain(cfg.states);
  if (cfg.name == "mountain-car") return MountainCar{};
  if (cfg.name == "puddle-world") return PuddleWorld{};
  throw std::invalid_argument("unknown environment '" + cfg.name + "'");
}

// The policy each environment is evaluated under unless overridden.
inline PolicySpec default_policy(const std::string& env_name) {
  if (env_name == "mountain-car") return PolicySpec::energy_pumping(0.6);
  if (env_name == "deterministic-chain") return PolicySpec::fixed(1, "always-right");
  return PolicySpec::uniform();
}

// Names accepted for --policy: uniform, energy-pumping, always-right, or
// fixed:<action>. `mixing` blends in uniform actions.
inline PolicySpec make_policy(const std::string& name, double mixing) {
  PolicySpec p;
  if (name == "uniform") {
    p = PolicySpec::uniform();
  } else if (name == "energy-pumping") {
    p = PolicySpec::energy_pumping(mixing);
  } else if (name == "always-right") {
    p = PolicySpec::fixed(1, "always-right");
  } else if (name.rfind("fixed:", 0) == 0) {
    p = PolicySpec::fixed(std::stoul(name.substr(6)), name);
  } else {
    throw std::invalid_argument("unknown policy '" + name + "'");
  }
  if (p.kind != PolicyKind::energy_pumping) p.mixing = mixing;
  return p;
}

template <class Fn>
decltype(auto) with_environment(const AnyEnvironment& env, Fn&& fn) {
  return std::visit(std::forward<Fn>(fn), env);
}

inline const EnvSpec& spec_of(const AnyEnvironment& env) {
  return std::visit([](const auto& e) -> const EnvSpec& { return e.spec(); }, env);
}

}  // namespace valcert
