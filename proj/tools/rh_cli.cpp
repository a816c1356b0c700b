// Command-line front end: predictor comparison, single episodes, batches and
// suboptimality series.

#include "rh/environments.hpp"
#include "rh/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct Options {
  std::string env = "obstacle";
  std::string agent = "robust";
  std::uint64_t seed = 0;
  std::size_t seeds = 100;
  std::optional<std::size_t> budget;
  std::optional<double> delta;
  std::optional<double> gamma;
  std::string config;
  std::string out;
  std::string polytope = "box";
  std::size_t warm = 0;
  std::size_t threads = 0;
  bool timing = false;
  bool single_model = false;
  std::vector<std::size_t> buckets{5, 10, 20, 40, 80};
  double dt = 0.05;
  double duration = 2.0;
};

rh::env::EnvironmentSpec load_env(const Options& o) {
  std::optional<std::filesystem::path> cfg;
  if (!o.config.empty()) cfg = o.config;
  return rh::env::make_environment(o.env, cfg);
}

rh::harness::AgentConfig agent_config(const Options& o, const rh::env::EnvironmentSpec& spec) {
  auto cfg = rh::harness::AgentConfig::for_environment(spec, rh::harness::parse_agent(o.agent));
  cfg.seed = o.seed;
  if (o.budget) cfg.budget = *o.budget;
  if (o.delta) cfg.delta = *o.delta;
  if (o.gamma) cfg.gamma = *o.gamma;
  if (o.single_model) cfg.multi_model = false;
  if (o.polytope == "tight")
    cfg.polytope = rh::harness::PolytopeMode::tight;
  else if (o.polytope != "box")
    throw rh::ConfigError("--polytope must be 'box' or 'tight'");
  cfg.validate();
  return cfg;
}

void emit(const Options& o, const std::function<void(std::ostream&)>& writer) {
  if (o.out.empty() || o.out == "-")
    writer(std::cout);
  else
    rh::harness::write_file(o.out, writer);
}

void run_predict(const Options& o) {
  using namespace rh;
  if (!(o.dt > 0.0) || !(o.duration > 0.0)) throw ConfigError("--dt and --duration must be positive");
  const auto steps = static_cast<std::size_t>(o.duration / o.dt + 0.5);
  std::vector<harness::ComparisonRow> rows;
  if (o.env == "scalar") {
    const auto ref = harness::scalar_reference();
    rows = harness::compare_predictors(ref.polytope, ref.model, ref.noise, ref.x0,
                                       AffineControld::constant(VectorXd::Zero(1), 1), o.dt, steps);
  } else {
    // Prior confidence set (no data yet) under the first action.
    const auto spec = load_env(o);
    const auto cfg = agent_config(o, spec);
    const auto state = RegressionStated::initial(spec.model.param_dim(), cfg.lambda);
    const auto polytope = ellipsoid_to_box(confidence_ellipsoid(state, cfg.delta, spec.model.S), spec.model);
    rows = harness::compare_predictors(polytope, spec.model, spec.noise, spec.x0, spec.actions.controls.front(), o.dt,
                                       steps);
  }
  emit(o, [&](std::ostream& os) { harness::write_comparison_csv(os, rows); });
}

void run_episode(const Options& o) {
  using namespace rh;
  const auto spec = load_env(o);
  const auto cfg = agent_config(o, spec);
  const auto trace = harness::run_episode(spec, cfg, o.warm);
  emit(o, [&](std::ostream& os) { os << harness::trace_to_json(trace, o.timing).dump(2) << '\n'; });
}

void run_batch(const Options& o) {
  using namespace rh;
  const auto spec = load_env(o);
  const auto cfg = agent_config(o, spec);
  harness::BatchOptions options;
  options.warm_samples = o.warm;
  options.threads = o.threads;
  options.record_timing = o.timing;
  const auto rows = harness::run_batch(spec, cfg, o.seeds, options);
  emit(o, [&](std::ostream& os) { harness::write_metrics_csv(os, rows); });
  const auto s = harness::summarize(rows);
  std::cerr << harness::to_string(cfg.kind) << ": failures " << s.failures << "/" << s.episodes << " ("
            << 100.0 * s.failure_rate << "%), min " << s.min_return << ", avg " << s.mean_return << " ± "
            << s.std_return;
  if (s.errors) std::cerr << ", " << s.errors << " aborted";
  std::cerr << '\n';
}

void run_suboptimality(const Options& o) {
  using namespace rh;
  const auto spec = load_env(o);
  const auto cfg = agent_config(o, spec);
  const auto series = harness::suboptimality_series(spec, cfg, o.buckets, o.seeds, o.threads);
  emit(o, [&](std::ostream& os) { harness::write_suboptimality_csv(os, series); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust adaptive receding-horizon control experiments"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool agent_flags) {
    sub->add_option("--env", o.env, "Environment: obstacle, scalar, two_model")->capture_default_str();
    sub->add_option("--config", o.config, "JSON scene file (obstacle environment)");
    sub->add_option("--out", o.out, "Output path ('-' or empty for stdout)");
    if (!agent_flags) return;
    sub->add_option("--agent", o.agent, "Agent: robust, nominal, oracle")->capture_default_str();
    sub->add_option("--seed", o.seed, "Seed (base seed for batches)")->capture_default_str();
    sub->add_option("--budget", o.budget, "Planning budget K");
    sub->add_option("--delta", o.delta, "Confidence level δ");
    sub->add_option("--gamma", o.gamma, "Discount factor γ");
    sub->add_option("--polytope", o.polytope, "Ellipsoid conversion: box or tight")->capture_default_str();
    sub->add_option("--warm", o.warm, "Random-action samples collected before the episode")->capture_default_str();
    sub->add_flag("--single-model", o.single_model, "Plan with the true structure only, even if candidates exist");
    sub->add_flag("--timing", o.timing, "Record wall-clock timings (makes output non-reproducible)");
  };

  auto* predict = app.add_subcommand("predict", "Compare the simple and enhanced interval predictors (CSV)");
  common(predict, false);
  predict->add_option("--dt", o.dt, "Prediction step")->capture_default_str();
  predict->add_option("--duration", o.duration, "Prediction duration in seconds")->capture_default_str();

  auto* episode = app.add_subcommand("episode", "Run one episode and write its JSON trace");
  common(episode, true);

  auto* batch = app.add_subcommand("batch", "Run seeded episodes and write the metrics CSV");
  common(batch, true);
  batch->add_option("--seeds", o.seeds, "Number of seeds")->capture_default_str();
  batch->add_option("--threads", o.threads, "Worker threads (0: all cores)")->capture_default_str();

  auto* subopt = app.add_subcommand("suboptimality", "Suboptimality against the number of samples (CSV)");
  common(subopt, true);
  subopt->add_option("--seeds", o.seeds, "Seeds per bucket")->capture_default_str();
  subopt->add_option("--buckets", o.buckets, "Sample counts N")->delimiter(',')->capture_default_str();
  subopt->add_option("--threads", o.threads, "Worker threads (0: all cores)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*predict) run_predict(o);
    if (*episode) run_episode(o);
    if (*batch) run_batch(o);
    if (*subopt) run_suboptimality(o);
  } catch (const rh::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const rh::StructuralError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
