#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "valcert/valcert.hpp"

namespace {

using namespace valcert;

int verbosity() {
  const char* v = std::getenv("VALCERT_VERBOSE");
  return v ? std::atoi(v) : 0;
}

void log(int level, const std::string& msg) {
  if (verbosity() >= level) std::cerr << "[valcert] " << msg << "\n";
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct EnvFlags {
  EnvConfig env;
  std::string policy;
  double mixing = 0.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void add_to(CLI::App* cmd, const std::string& default_env) {
    env.name = default_env;
    cmd->add_option("--env", env.name, "environment")->check(CLI::IsMember(environment_names()))->capture_default_str();
    cmd->add_option("--chain-states", env.states, "state count for chain, ring and zero-reward")->capture_default_str();
    cmd->add_option("--gamma", env.gamma, "discount for chain and ring")->capture_default_str();
    cmd->add_option("--bandit-p", env.bandit_p, "success probability of the bandit")->capture_default_str();
    cmd->add_option("--policy", policy, "uniform | energy-pumping | always-right | fixed:<action> (default per env)");
    cmd->add_option("--mixing", mixing, "probability of a uniform random action")->capture_default_str();
    cmd->add_option("--seed", seed, "master seed")->capture_default_str();
    cmd->add_option("--workers", workers, "worker threads")->capture_default_str();
  }

  PolicySpec make_policy_spec() const {
    if (policy.empty()) return default_policy(env.name);
    return make_policy(policy, mixing);
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

int run_build(const EnvFlags& f, BuildOptions opt, const std::string& out, const std::string& stamp) {
  const auto start = std::chrono::steady_clock::now();
  if (!stamp.empty()) opt.created = stamp == "now" ? utc_now() : stamp;
  opt.seed = f.seed;
  opt.workers = f.workers;
  const auto env = make_environment(f.env);
  const auto policy = f.make_policy_spec();
  log(1, "building cache for " + f.env.name + " under " + policy.id);
  const ValueCache cache = with_environment(env, [&](const auto& e) { return build_cache(e, policy, opt); });
  save_cache(cache, out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "m: " << cache.meta.m << "\n"
            << "total samples: " << cache.meta.total_samples << "\n"
            << "wall time: " << secs << " s\n"
            << "wrote " << out << "\n";
  return 0;
}

int run_build_fixed(const EnvFlags& f, FixedBudgetOptions opt, double laplace_b, const std::string& out,
                    const std::string& stamp) {
  const auto start = std::chrono::steady_clock::now();
  if (!stamp.empty()) opt.base.created = stamp == "now" ? utc_now() : stamp;
  opt.base.seed = f.seed;
  opt.base.workers = f.workers;
  if (laplace_b > 0.0) {
    const auto p = laplace_subexp_params(laplace_b);
    opt.loss.alpha_se = p.alpha;
    opt.loss.beta_se = p.beta;
  }
  const auto env = make_environment(f.env);
  const auto policy = f.make_policy_spec();
  const ValueCache cache =
      with_environment(env, [&](const auto& e) { return build_cache_fixed_budget(e, policy, opt); });
  save_cache(cache, out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "m: " << cache.meta.m << "\n"
            << "rounds: " << cache.meta.rounds << "\n"
            << "total samples: " << cache.meta.total_samples << "\n"
            << "wall time: " << secs << " s\n"
            << "wrote " << out << "\n";
  return 0;
}

int run_evaluate(const std::string& cache_path, const std::string& predictions_path, const std::string& loss_name,
                 std::optional<double> clip, std::optional<double> tau, bool read_only, const std::string& out) {
  std::ifstream in(predictions_path, std::ios::binary);
  if (!in) throw UsageError("cannot read predictions file " + predictions_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const Predictions preds = parse_predictions(ss.str());

  const ValueCache cache = load_cache(cache_path);
  LossSpec spec;
  spec.kind = loss_name.empty() ? cache.meta.loss : loss_kind_from_string(loss_name);
  spec.clip = clip.value_or(cache.meta.clip);
  spec.tau = tau.value_or(cache.meta.tau);
  spec.alpha_se = cache.meta.alpha_se;
  spec.beta_se = cache.meta.beta_se;
  const ErrorReport report =
      evaluate_file(preds, cache_path, spec, read_only ? UsageMode::read_only : UsageMode::consume);
  if (report.certificate_void)
    std::cerr << "warning: " << report.k_consumed << " queries exceed the cache's budget K = " << report.k_budget
              << "; the certificate is void\n";
  if (report.advisory) std::cerr << "note: read-only evaluation; the bound is advisory\n";
  const std::string text = report_to_json(report).dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_text(out, text);
  return 0;
}

int run_experiment_cmd(ExperimentGrid grid, const EnvFlags& f, const std::string& out, std::string summary,
                       std::string summary_json_path) {
  grid.env = f.env;
  grid.policy = f.make_policy_spec();
  grid.seed = f.seed;
  grid.workers = f.workers;
  if (summary.empty()) summary = out + ".summary.csv";
  if (summary_json_path.empty()) summary_json_path = out + ".summary.json";
  const auto result = run_experiment(grid);
  for (double e : result.skipped_epsilons)
    std::cerr << "note: skipped epsilon " << e << " on " << grid.env.name << " (pass --allow-long to run it)\n";
  std::ostringstream rows, sum;
  write_experiment_csv(rows, grid, result);
  write_summary_csv(sum, grid, result);
  write_text(out, rows.str());
  write_text(summary, sum.str());
  write_text(summary_json_path, summary_json(grid, result).dump(2) + "\n");
  for (const auto& c : result.cells) {
    std::cout << "epsilon=" << fmt(c.epsilon) << " delta=" << fmt(c.delta) << " median=" << fmt(c.median)
              << " min=" << c.min << " max=" << c.max;
    if (c.failed) std::cout << " failed=" << c.failed;
    std::cout << "\n";
  }
  return 0;
}

int run_oracle(OracleOptions opt, const EnvFlags& f, const std::string& out) {
  opt.env = f.env;
  opt.policy = f.make_policy_spec();
  opt.seed = f.seed;
  opt.workers = f.workers;
  const auto rows = oracle_compare(opt);
  std::ostringstream os;
  write_oracle_csv(os, opt, rows);
  if (out.empty())
    std::cout << os.str();
  else
    write_text(out, os.str());
  std::vector<double> ratios;
  for (const auto& r : rows)
    if (!r.terminal) ratios.push_back(r.ratio);
  if (!ratios.empty()) {
    std::sort(ratios.begin(), ratios.end());
    std::cerr << "median ratio EBG/bootstrap: " << fmt(ratios[ratios.size() / 2]) << " over " << ratios.size()
              << " states\n";
  }
  return 0;
}

int run_validate(const CoverageOptions& opt, const std::string& out) {
  const auto result = chain_coverage(opt);
  if (!out.empty()) {
    std::ostringstream os;
    os << "# valcert validate\n# version: " << kVersion << "\n# epsilon: " << fmt(opt.epsilon)
       << ", delta: " << fmt(opt.delta) << ", c: " << fmt(opt.clip) << ", K: " << opt.k_budget
       << ", noise: " << fmt(opt.noise) << ", seed: " << opt.seed << "\n";
    os << "seed,exact_loss,empirical_loss,bound,violated\n";
    for (const auto& t : result.trials)
      os << t.seed << ',' << fmt(t.exact_loss) << ',' << fmt(t.empirical_loss) << ',' << fmt(t.bound) << ','
         << (t.violated ? 1 : 0) << '\n';
    write_text(out, os.str());
  }
  const bool pass = result.rate() <= opt.delta;
  std::cout << "coverage: " << result.violations << " violations in " << result.trials.size()
            << " repetitions (rate " << fmt(result.rate()) << ", allowed " << fmt(opt.delta) << ") "
            << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified value-error estimation from rollout caches"};
  app.set_config("--config", "", "key=value config file (sections per subcommand)");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // build
  auto* build = app.add_subcommand("build", "sample states and build a CMAPVE value cache");
  EnvFlags build_env;
  build_env.add_to(build, "chain");
  BuildOptions build_opt;
  std::string build_out, build_stamp;
  build->add_option("--epsilon", build_opt.epsilon, "target accuracy of the error estimate")->required();
  build->add_option("--delta", build_opt.delta, "failure probability")->required();
  build->add_option("--tau", build_opt.tau, "relative-error offset")->capture_default_str();
  build->add_option("--c", build_opt.clip, "loss clip")->capture_default_str();
  build->add_option("--K", build_opt.k_budget, "number of evaluations the certificate covers")->capture_default_str();
  build->add_option("--max-samples", build_opt.max_samples, "per-state return ceiling")->capture_default_str();
  build->add_option("--stamp", build_stamp, "creation time to record ('now' for the current UTC time)");
  build->add_option("--out", build_out, "cache file")->required();

  // build-fixed
  auto* fixed = app.add_subcommand("build-fixed", "build a CMAVE/CMSVE/MAVE/MSVE cache with a fixed state count");
  EnvFlags fixed_env;
  fixed_env.add_to(fixed, "chain");
  FixedBudgetOptions fixed_opt;
  std::string fixed_loss = "cmave", fixed_out, fixed_stamp;
  double laplace_b = 0.0;
  fixed->add_option("--epsilon", fixed_opt.base.epsilon, "target accuracy")->required();
  fixed->add_option("--delta", fixed_opt.base.delta, "failure probability")->required();
  fixed->add_option("--loss", fixed_loss, "cmave | cmsve | mave | msve")->capture_default_str();
  fixed->add_option("--m", fixed_opt.m, "state count (clipped losses)");
  fixed->add_option("--c", fixed_opt.loss.clip, "loss clip")->capture_default_str();
  fixed->add_option("--K", fixed_opt.base.k_budget, "number of evaluations the certificate covers")->capture_default_str();
  fixed->add_option("--alpha-se", fixed_opt.loss.alpha_se, "sub-exponential alpha (mave/msve)");
  fixed->add_option("--beta-se", fixed_opt.loss.beta_se, "sub-exponential beta (mave/msve)");
  fixed->add_option("--laplace-b", laplace_b, "derive alpha/beta from a Laplace(b) loss model");
  fixed->add_option("--max-rounds", fixed_opt.max_rounds, "round ceiling")->capture_default_str();
  fixed->add_option("--stamp", fixed_stamp, "creation time to record ('now' for the current UTC time)");
  fixed->add_option("--out", fixed_out, "cache file")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "certified error of predictions against a cache");
  std::string eval_cache, eval_preds, eval_loss, eval_out;
  std::optional<double> eval_clip, eval_tau;
  bool read_only = false;
  eval->add_option("--cache", eval_cache, "cache file")->required();
  eval->add_option("--predictions", eval_preds, "CSV (id,value) or JSON predictions")->required();
  eval->add_option("--loss", eval_loss, "loss kind (default: the one the cache certifies)");
  eval->add_option("--c", eval_clip, "loss clip (default: the cache's)");
  eval->add_option("--tau", eval_tau, "relative-error offset (default: the cache's)");
  eval->add_flag("--read-only", read_only, "do not count this query; the bound is then advisory");
  eval->add_option("--out", eval_out, "report file (default stdout)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "per-state return counts over an (epsilon, delta) grid");
  EnvFlags exp_env;
  exp_env.add_to(exp, "chain");
  ExperimentGrid grid;
  std::string exp_out, exp_summary, exp_summary_json;
  exp->add_option("--epsilons", grid.epsilons, "epsilon values")->capture_default_str();
  exp->add_option("--deltas", grid.deltas, "delta values")->capture_default_str();
  exp->add_option("--tau", grid.tau, "relative-error offset")->capture_default_str();
  exp->add_option("--m", grid.m, "number of states")->capture_default_str();
  exp->add_option("--max-samples", grid.max_samples, "per-state return ceiling")->capture_default_str();
  exp->add_flag("--allow-long", grid.allow_long, "run benchmark cells with epsilon < 0.05");
  exp->add_option("--out", exp_out, "per-state CSV")->required();
  exp->add_option("--summary", exp_summary, "summary CSV (default <out>.summary.csv)");
  exp->add_option("--summary-json", exp_summary_json, "summary JSON (default <out>.summary.json)");

  // oracle-compare
  auto* oracle = app.add_subcommand("oracle-compare", "EBGStop-tau against bootstrap intervals on the same returns");
  EnvFlags oracle_env;
  oracle_env.add_to(oracle, "bandit");
  OracleOptions oracle_opt;
  std::string oracle_out;
  oracle->add_option("--m", oracle_opt.states, "number of states")->capture_default_str();
  oracle->add_option("--epsilon", oracle_opt.epsilon, "relative accuracy")->capture_default_str();
  oracle->add_option("--delta", oracle_opt.delta, "failure probability")->capture_default_str();
  oracle->add_option("--tau", oracle_opt.tau, "relative-error offset")->capture_default_str();
  oracle->add_option("--batch", oracle_opt.batch, "pre-drawn returns per state")->capture_default_str();
  oracle->add_option("--min-batch", oracle_opt.min_batch, "smallest accepted batch")->capture_default_str();
  oracle->add_option("--k", oracle_opt.k, "bootstrap resamples per check point")->capture_default_str();
  oracle->add_option("--max-samples", oracle_opt.max_samples, "per-state return ceiling")->capture_default_str();
  oracle->add_option("--out", oracle_out, "output CSV (default stdout)");

  // validate
  auto* validate = app.add_subcommand("validate", "chain-oracle coverage check of the end-to-end certificate");
  CoverageOptions cov;
  std::string validate_out;
  validate->add_option("--repetitions", cov.repetitions, "build-and-evaluate repetitions")->capture_default_str();
  validate->add_option("--epsilon", cov.epsilon, "target accuracy")->capture_default_str();
  validate->add_option("--delta", cov.delta, "failure probability")->capture_default_str();
  validate->add_option("--tau", cov.tau, "relative-error offset")->capture_default_str();
  validate->add_option("--c", cov.clip, "loss clip")->capture_default_str();
  validate->add_option("--K", cov.k_budget, "query budget")->capture_default_str();
  validate->add_option("--noise", cov.noise, "half-width of the uniform prediction noise")->capture_default_str();
  validate->add_option("--chain-states", cov.chain_states, "chain length")->capture_default_str();
  validate->add_option("--gamma", cov.gamma, "discount")->capture_default_str();
  validate->add_option("--seed", cov.seed, "first seed")->capture_default_str();
  validate->add_option("--workers", cov.workers, "worker threads")->capture_default_str();
  validate->add_option("--out", validate_out, "per-repetition CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (build->parsed()) return run_build(build_env, build_opt, build_out, build_stamp);
    if (fixed->parsed()) {
      fixed_opt.loss.kind = loss_kind_from_string(fixed_loss);
      return run_build_fixed(fixed_env, fixed_opt, laplace_b, fixed_out, fixed_stamp);
    }
    if (eval->parsed()) return run_evaluate(eval_cache, eval_preds, eval_loss, eval_clip, eval_tau, read_only, eval_out);
    if (exp->parsed()) return run_experiment_cmd(grid, exp_env, exp_out, exp_summary, exp_summary_json);
    if (oracle->parsed()) return run_oracle(oracle_opt, oracle_env, oracle_out);
    if (validate->parsed()) return run_validate(cov, validate_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
