#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace valcert {

enum class LossKind { cmapve, cmave, cmsve, mave, msve };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::cmapve: return "CMAPVE";
    case LossKind::cmave: return "CMAVE";
    case LossKind::cmsve: return "CMSVE";
    case LossKind::mave: return "MAVE";
    case LossKind::msve: return "MSVE";
  }
  return "?";
}

inline LossKind loss_kind_from_string(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  if (s == "CMAPVE") return LossKind::cmapve;
  if (s == "CMAVE") return LossKind::cmave;
  if (s == "CMSVE") return LossKind::cmsve;
  if (s == "MAVE") return LossKind::mave;
  if (s == "MSVE") return LossKind::msve;
  throw std::invalid_argument("unknown loss kind '" + s + "'");
}

inline bool is_clipped(LossKind k) { return k == LossKind::cmapve || k == LossKind::cmave || k == LossKind::cmsve; }
inline bool is_squared(LossKind k) { return k == LossKind::cmsve || k == LossKind::msve; }

struct LossSpec {
  LossKind kind = LossKind::cmapve;
  double clip = 2.0;
  double tau = 1.0;
  double alpha_se = 0.0;
  double beta_se = 0.0;

  void validate() const {
    if (is_clipped(kind) && !(clip > 0.0)) throw std::invalid_argument("loss: clip c must be positive");
    if (kind == LossKind::cmapve && !(tau >= 0.0)) throw std::invalid_argument("loss: tau must be nonnegative");
    if (!is_clipped(kind) && !(alpha_se > 0.0 && beta_se > 0.0))
      throw std::invalid_argument("loss: sub-exponential parameters must be positive");
  }
};

// min(c, |v_hat - v| / (|v| + tau))
inline double clipped_relative_loss(double v_hat, double v, double tau, double clip) {
  const double denom = std::abs(v) + tau;
  if (denom == 0.0) throw std::domain_error("clipped_relative_loss: undefined for tau = 0 and v = 0");
  return std::min(clip, std::abs(v_hat - v) / denom);
}

// Per-state loss of prediction v_hat against reference value v.
inline double state_loss(const LossSpec& spec, double v_hat, double v) {
  const double diff = v_hat - v;
  switch (spec.kind) {
    case LossKind::cmapve: return clipped_relative_loss(v_hat, v, spec.tau, spec.clip);
    case LossKind::cmave: return std::min(spec.clip, std::abs(diff));
    case LossKind::cmsve: return std::min(spec.clip, diff * diff);
    case LossKind::mave: return std::abs(diff);
    case LossKind::msve: return diff * diff;
  }
  return 0.0;
}

inline double empirical_loss(std::span<const double> predictions, std::span<const double> values, const LossSpec& spec) {
  if (predictions.size() != values.size()) throw std::invalid_argument("empirical_loss: size mismatch");
  if (values.empty()) throw std::invalid_argument("empirical_loss: no states");
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) sum += state_loss(spec, predictions[i], values[i]);
  return sum / static_cast<double>(values.size());
}

// Hoeffding deviation for the mean of m losses in [0, c], union-bounded over
// K queries at total failure probability delta/2.
inline double hoeffding_state_term(std::size_t m, double delta, double clip, std::uint64_t k_budget) {
  return std::sqrt(std::log(4.0 * static_cast<double>(k_budget) / delta) * clip * clip / (2.0 * static_cast<double>(m)));
}

inline std::size_t required_states(double epsilon_m, double delta, double clip, std::uint64_t k_budget) {
  if (!(epsilon_m > 0.0)) throw std::invalid_argument("required_states: epsilon_m must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("required_states: delta must be in (0, 1)");
  if (!(clip > 0.0) || k_budget == 0) throw std::invalid_argument("required_states: c and K must be positive");
  const double m = std::log(4.0 * static_cast<double>(k_budget) / delta) * clip * clip / (2.0 * epsilon_m * epsilon_m);
  return static_cast<std::size_t>(std::ceil(m));
}

// Three-part deviation bound for the clipped relative loss: state sampling,
// rollout accuracy, and the |v_bar| + tau vs |v*| + tau normaliser mismatch.
struct Theorem1Bound {
  double state_sampling = 0.0;
  double rollout = 0.0;
  double normalizer = 0.0;
  double total() const { return state_sampling + rollout + normalizer; }
};

inline Theorem1Bound theorem1_bound(double epsilon, double delta, double clip, std::uint64_t k_budget, std::size_t m) {
  if (m == 0) throw std::invalid_argument("theorem1_bound: m must be positive");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("theorem1_bound: epsilon must be nonnegative");
  Theorem1Bound b;
  b.state_sampling = hoeffding_state_term(m, delta, clip, k_budget);
  b.rollout = 2.0 * epsilon;
  b.normalizer = clip * (1.0 - 1.0 / ((1.0 + epsilon) * (1.0 + epsilon)));
  return b;
}

inline double corollary1_epsilon(double epsilon_m, double epsilon_bar, double clip) {
  return epsilon_m + 2.0 * (1.0 + clip) * epsilon_bar;
}

struct EpsilonSplit {
  double epsilon_m = 0.0;
  double epsilon_bar = 0.0;
};

// Splits a total accuracy evenly between state sampling and rollout error so
// that corollary1_epsilon(split) == epsilon.
inline EpsilonSplit split_epsilon(double epsilon, double clip) {
  return {epsilon / 2.0, epsilon / (4.0 * (1.0 + clip))};
}

// Terms of zeta for fixed-n rollouts: Bernstein range term, variance term,
// truncation bias.
struct ZetaTerms {
  double range_term = 0.0;
  double variance_term = 0.0;
  double truncation_term = 0.0;
  double total() const { return range_term + variance_term + truncation_term; }
};

inline ZetaTerms bernstein_zeta(double range, double truncation_bias, std::size_t m, std::uint64_t n, double delta,
                                double mean_sigma) {
  if (n == 0 || m == 0) throw std::invalid_argument("zeta: m and n must be positive");
  const double log_term = std::log(6.0 * static_cast<double>(m) / delta);
  const auto nd = static_cast<double>(n);
  return {3.0 * range * log_term / nd, mean_sigma * std::sqrt(2.0 * log_term / nd), truncation_bias};
}

// Range and tail of a return truncated after l steps.
inline double discounted_return_range(double r_max, double gamma, std::uint64_t l) {
  return r_max * (1.0 - std::pow(gamma, static_cast<double>(l))) / (1.0 - gamma);
}
inline double truncation_bias(double r_max, double gamma, std::uint64_t l) {
  return r_max * std::pow(gamma, static_cast<double>(l)) / (1.0 - gamma);
}

inline ZetaTerms cmave_zeta(double r_max, double gamma, std::uint64_t l, std::size_t m, std::uint64_t n, double delta,
                            double mean_sigma) {
  if (!(gamma < 1.0)) throw std::invalid_argument("cmave_zeta: gamma must be < 1 (use the episodic form)");
  return bernstein_zeta(discounted_return_range(r_max, gamma, l), truncation_bias(r_max, gamma, l), m, n, delta,
                        mean_sigma);
}

inline ZetaTerms cmsve_zeta(double r_max, double gamma, std::uint64_t l, std::size_t m, std::uint64_t n, double delta,
                            double mean_sigma) {
  if (!(gamma < 1.0)) throw std::invalid_argument("cmsve_zeta: gamma must be < 1 (use the episodic form)");
  const double range = discounted_return_range(r_max, gamma, l);
  const double bias = truncation_bias(r_max, gamma, l);
  return bernstein_zeta(range * range, bias * bias, m, n, delta, mean_sigma);
}

// Episodic (run-to-termination) forms: the range is the return bound Vmax
// and there is no truncation bias.
inline ZetaTerms cmave_zeta_episodic(double v_max, std::size_t m, std::uint64_t n, double delta, double mean_sigma) {
  return bernstein_zeta(v_max, 0.0, m, n, delta, mean_sigma);
}
inline ZetaTerms cmsve_zeta_episodic(double v_max, std::size_t m, std::uint64_t n, double delta, double mean_sigma) {
  return bernstein_zeta(v_max * v_max, 0.0, m, n, delta, mean_sigma);
}

enum class TailRegime { gaussian, exponential };

struct SubexpDeviation {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double t = 0.0;
  TailRegime regime = TailRegime::gaussian;
};

// Deviation t of the mean of m sub-exponential(alpha, beta) losses at
// confidence delta/2 over K queries. With s = sqrt(2 log(4K/delta) / m),
// sigma1 = alpha*s and sigma2 = s^2/beta, so both lie on the same side of
// alpha^2*beta (the side of s against alpha*beta). The boundary counts as the
// gaussian-tail regime.
inline SubexpDeviation subexp_deviation(double alpha, double beta, std::size_t m, double delta, std::uint64_t k_budget) {
  if (!(alpha > 0.0 && beta > 0.0)) throw std::invalid_argument("subexp_deviation: alpha and beta must be positive");
  if (m == 0) throw std::invalid_argument("subexp_deviation: m must be positive");
  const double log_term = std::log(4.0 * static_cast<double>(k_budget) / delta);
  const double s = std::sqrt(2.0 * log_term / static_cast<double>(m));
  SubexpDeviation d;
  d.sigma1 = alpha * s;
  d.sigma2 = 2.0 * log_term / (beta * static_cast<double>(m));
  if (s <= alpha * beta) {
    d.t = d.sigma1;
    d.regime = TailRegime::gaussian;
  } else {
    d.t = d.sigma2;
    d.regime = TailRegime::exponential;
  }
  return d;
}

inline std::size_t subexp_required_states(double alpha, double beta, std::uint64_t k_budget, double delta) {
  if (!(alpha > 0.0 && beta > 0.0)) throw std::invalid_argument("subexp_required_states: alpha and beta must be positive");
  const double m = 2.0 * std::log(4.0 * static_cast<double>(k_budget) / delta) / (alpha * alpha * beta * beta);
  return static_cast<std::size_t>(std::ceil(m));
}

struct SubexpParams {
  double alpha = 0.0;
  double beta = 0.0;
};

// Sub-exponential parameters of a Laplace(mu, b) variable.
inline SubexpParams laplace_subexp_params(double b) {
  if (!(b > 0.0)) throw std::invalid_argument("Laplace scale must be positive");
  return {b * std::sqrt(5.12), std::sqrt(0.9) / b};
}

// Sizing of the fixed-budget (one return per state per round) estimator.
struct FixedBudgetPlan {
  LossKind kind = LossKind::cmave;
  std::size_t m = 0;
  double state_term = 0.0;       // Hoeffding or sub-exponential deviation
  double truncation_term = 0.0;  // bias of length-l returns in loss units
  double zeta = 0.0;             // what is left for the per-state sampling error
  double range = 0.0;            // Bernstein range substituted for Vmax
};

// `return_range` is the range of one sampled return (Rmax(1-gamma^l)/(1-gamma)
// or Vmax for episodes) and `bias` its truncation bias; squared losses use
// their squares. For MAVE/MSVE, m is fixed by the sub-exponential parameters
// and `m_requested` is ignored.
inline FixedBudgetPlan plan_fixed_budget(const LossSpec& loss, double epsilon, double delta, std::uint64_t k_budget,
                                         std::size_t m_requested, double return_range, double bias) {
  loss.validate();
  if (loss.kind == LossKind::cmapve)
    throw std::invalid_argument("fixed-budget estimator certifies CMAVE/CMSVE/MAVE/MSVE only");
  if (!(epsilon > 0.0)) throw std::invalid_argument("fixed budget: epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("fixed budget: delta must be in (0, 1)");
  if (k_budget == 0) throw std::invalid_argument("fixed budget: K must be positive");
  FixedBudgetPlan plan;
  plan.kind = loss.kind;
  const bool squared = is_squared(loss.kind);
  plan.range = squared ? return_range * return_range : return_range;
  plan.truncation_term = squared ? bias * bias : bias;
  if (is_clipped(loss.kind)) {
    if (m_requested == 0) throw std::invalid_argument("fixed budget: m must be positive");
    plan.m = m_requested;
    plan.state_term = hoeffding_state_term(plan.m, delta, loss.clip, k_budget);
  } else {
    plan.m = subexp_required_states(loss.alpha_se, loss.beta_se, k_budget, delta);
    plan.state_term = subexp_deviation(loss.alpha_se, loss.beta_se, plan.m, delta, k_budget).t;
  }
  plan.zeta = epsilon - plan.state_term - plan.truncation_term;
  if (!(plan.zeta > 0.0)) {
    std::string hint;
    const double room = epsilon - plan.truncation_term;
    if (is_clipped(loss.kind) && room > 0.0)
      hint = "; need m >= " + std::to_string(required_states(room, delta, loss.clip, k_budget) + 1);
    else
      hint = "; increase epsilon";
    throw std::invalid_argument("fixed budget: no slack left for rollout error (zeta = " + std::to_string(plan.zeta) +
                                ")" + hint);
  }
  return plan;
}

}  // namespace valcert
