#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>

#include "valcert/mdp.hpp"

namespace valcert {

// Classic Mountain Car with a hard episode cap.
//
// Actions: 0 reverse, 1 coast, 2 forward. Reward -1 per step. The episode
// ends on reaching the goal (position >= 0.5) or after `kEpisodeCap` steps,
// so every return lies in [-100, 0].
class MountainCar {
 public:
  static constexpr double kMinPosition = -1.2;
  static constexpr double kMaxPosition = 0.6;
  static constexpr double kMaxSpeed = 0.07;
  static constexpr double kGoalPosition = 0.5;
  static constexpr std::uint32_t kEpisodeCap = 100;

  MountainCar() {
    spec_.id = "mountain-car";
    spec_.state_dim = 2;
    spec_.action_count = 3;
    spec_.gamma = 1.0;
    spec_.r_max = 1.0;
    spec_.v_max = kEpisodeCap;
    spec_.episodic = true;
    spec_.max_episode_steps = kEpisodeCap;
    spec_.validate();
  }

  const EnvSpec& spec() const { return spec_; }

  State make_state(double position, double velocity) const {
    State s;
    s.coords = {position, velocity};
    s.terminal = position >= kGoalPosition;
    return s;
  }

  StepResult step(const State& s, std::size_t a, RngStream&) const {
    check_step_preconditions(spec_, s, a);
    double position = s.coords[0];
    double velocity = s.coords[1];
    velocity += 0.001 * (static_cast<double>(a) - 1.0) - 0.0025 * std::cos(3.0 * position);
    velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
    position = std::clamp(position + velocity, kMinPosition, kMaxPosition);
    if (position == kMinPosition && velocity < 0.0) velocity = 0.0;
    StepResult out;
    out.next.coords = {position, velocity};
    out.next.steps = s.steps + 1;
    out.next.terminal = position >= kGoalPosition || out.next.steps >= kEpisodeCap;
    out.reward = -1.0;
    return out;
  }

  // Uniform over the full box; positions at or past the goal are terminal.
  State sample_state(RngStream& rng) const {
    const double p = rng.uniform(kMinPosition, kMaxPosition);
    const double v = rng.uniform(-kMaxSpeed, kMaxSpeed);
    return make_state(p, v);
  }

  bool in_bounds(const State& s) const {
    return s.coords[0] >= kMinPosition && s.coords[0] <= kMaxPosition && s.coords[1] >= -kMaxSpeed &&
           s.coords[1] <= kMaxSpeed;
  }

 private:
  EnvSpec spec_;
};

// Puddle World on the unit square.
//
// Actions: 0 up, 1 down, 2 right, 3 left, each moving 0.05 with additive
// Gaussian noise (sd 0.01) per coordinate, clipped to the square. The goal
// is the corner x >= 0.95, y >= 0.95. Reward per step is -1 minus 400 times
// the summed penetration depth into two capsule-shaped puddles of radius 0.1.
// The per-step reward is therefore bounded by 1 + 400 * 0.2 = 81, and the
// episode cap of 98 steps keeps |return| <= 98 * 81 <= 8000.
class PuddleWorld {
 public:
  static constexpr double kStep = 0.05;
  static constexpr double kNoise = 0.01;
  static constexpr double kGoal = 0.95;
  static constexpr double kPuddleRadius = 0.1;
  static constexpr double kPenalty = 400.0;
  static constexpr std::uint32_t kEpisodeCap = 98;

  struct Capsule {
    std::array<double, 2> a;
    std::array<double, 2> b;
  };
  static constexpr std::array<Capsule, 2> kPuddles{{{{0.10, 0.75}, {0.45, 0.75}}, {{0.45, 0.40}, {0.45, 0.80}}}};

  PuddleWorld() {
    spec_.id = "puddle-world";
    spec_.state_dim = 2;
    spec_.action_count = 4;
    spec_.gamma = 1.0;
    spec_.r_max = 1.0 + kPenalty * 2.0 * kPuddleRadius;
    spec_.v_max = 8000.0;
    spec_.episodic = true;
    spec_.max_episode_steps = kEpisodeCap;
    spec_.validate();
  }

  const EnvSpec& spec() const { return spec_; }

  static bool at_goal(double x, double y) { return x >= kGoal && y >= kGoal; }

  State make_state(double x, double y) const {
    State s;
    s.coords = {x, y};
    s.terminal = at_goal(x, y);
    return s;
  }

  static double puddle_depth(double x, double y) {
    double depth = 0.0;
    for (const auto& c : kPuddles) {
      const double dx = c.b[0] - c.a[0];
      const double dy = c.b[1] - c.a[1];
      const double len2 = dx * dx + dy * dy;
      const double t = std::clamp(((x - c.a[0]) * dx + (y - c.a[1]) * dy) / len2, 0.0, 1.0);
      const double px = c.a[0] + t * dx - x;
      const double py = c.a[1] + t * dy - y;
      const double dist = std::sqrt(px * px + py * py);
      if (dist < kPuddleRadius) depth += kPuddleRadius - dist;
    }
    return depth;
  }

  StepResult step(const State& s, std::size_t a, RngStream& rng) const {
    check_step_preconditions(spec_, s, a);
    static constexpr std::array<std::array<double, 2>, 4> kMoves{{{0.0, kStep}, {0.0, -kStep}, {kStep, 0.0}, {-kStep, 0.0}}};
    const double x = std::clamp(s.coords[0] + kMoves[a][0] + rng.normal(0.0, kNoise), 0.0, 1.0);
    const double y = std::clamp(s.coords[1] + kMoves[a][1] + rng.normal(0.0, kNoise), 0.0, 1.0);
    StepResult out;
    out.next.coords = {x, y};
    out.next.steps = s.steps + 1;
    out.next.terminal = at_goal(x, y) || out.next.steps >= kEpisodeCap;
    out.reward = -1.0 - kPenalty * puddle_depth(x, y);
    return out;
  }

  State sample_state(RngStream& rng) const {
    const double x = rng.uniform();
    const double y = rng.uniform();
    return make_state(x, y);
  }

  bool in_bounds(const State& s) const {
    return s.coords[0] >= 0.0 && s.coords[0] <= 1.0 && s.coords[1] >= 0.0 && s.coords[1] <= 1.0;
  }

 private:
  EnvSpec spec_;
};

}  // namespace valcert
