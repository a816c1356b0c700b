#include "rh/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace rh::harness {

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::robust: return "robust";
    case AgentKind::nominal: return "nominal";
    case AgentKind::oracle: return "oracle";
  }
  return "unknown";
}

AgentKind parse_agent(const std::string& name) {
  if (name == "robust") return AgentKind::robust;
  if (name == "nominal") return AgentKind::nominal;
  if (name == "oracle") return AgentKind::oracle;
  throw ConfigError("unknown agent '" + name + "'");
}

AgentConfig AgentConfig::for_environment(const env::EnvironmentSpec& spec, AgentKind kind) {
  AgentConfig c;
  c.kind = kind;
  c.delta = spec.delta;
  c.gamma = spec.gamma;
  c.budget = spec.budget;
  c.multi_model = spec.candidates.size() > 1;
  return c;
}

void AgentConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("AgentConfig: δ must lie in (0, 1)");
  if (!(lambda > 0.0)) throw ConfigError("AgentConfig: λ must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("AgentConfig: γ must lie in (0, 1)");
  if (budget < 1) throw ConfigError("AgentConfig: budget must be at least 1");
  if (substeps < 1) throw ConfigError("AgentConfig: substeps must be at least 1");
  if (!(test_level > 0.0 && test_level < 1.0)) throw ConfigError("AgentConfig: δ' must lie in (0, 1)");
  if (oracle_budget_factor < 1) throw ConfigError("AgentConfig: oracle budget factor must be at least 1");
}

IntervalModel::IntervalModel(IntervalPredictord predictor, const env::ActionSpace& actions,
                             std::function<double(const StateIntervald&)> reward_lower,
                             std::function<bool(const StateIntervald&)> terminal)
    : predictor_(std::move(predictor)),
      actions_(&actions),
      reward_lower_(std::move(reward_lower)),
      terminal_(std::move(terminal)) {}

planning::Transition<IntervalModel::State> IntervalModel::step(const State& state, std::size_t action) const {
  if (state.terminal) return {state, 0.0, true};
  State next{predictor_.advance(state.box, actions_->controls.at(action)), false};
  const auto box = predictor_.to_original(next.box);
  const double reward = reward_lower_(box);
  next.terminal = terminal_ && terminal_(box);
  const bool terminal = next.terminal;
  return {std::move(next), reward, terminal};
}

ConfidencePolytoped point_polytope(const StructuredModeld& model, const VectorXd& theta) {
  ConfidencePolytoped p;
  p.theta_center = theta;
  p.a_center = model.state_matrix(theta);
  p.theta_deltas = {VectorXd::Zero(theta.size())};
  p.deltas = {MatrixXd::Zero(model.state_dim(), model.state_dim())};
  return p;
}

IntervalModel point_model(const env::EnvironmentSpec& spec, const StructuredModeld& model, const VectorXd& theta,
                          int substeps) {
  const VectorXd zero = VectorXd::Zero(model.disturbance_dim());
  auto noise = NoiseModeld::constant(spec.noise.sigma_p, zero, zero);
  PredictorConfigd pc{PredictorMode::simple, spec.dt, substeps};
  return IntervalModel(IntervalPredictord(point_polytope(model, theta), model, std::move(noise), pc), spec.actions,
                       spec.reward_lower, spec.may_collide);
}

namespace {

using Clock = std::chrono::steady_clock;

struct Candidate {
  std::size_t index;
  const StructuredModeld* model;
  RegressionStated regression;
};

class Agent {
 public:
  Agent(const env::EnvironmentSpec& spec, const AgentConfig& cfg) : spec_(spec), cfg_(cfg) {
    if (cfg.multi_model) {
      for (std::size_t i = 0; i < spec.candidates.size(); ++i)
        candidates_.push_back({i, &spec.candidates[i], RegressionStated::initial(spec.candidates[i].param_dim(), cfg.lambda)});
    } else {
      candidates_.push_back({spec.true_candidate, &spec.model, RegressionStated::initial(spec.model.param_dim(), cfg.lambda)});
    }
  }

  ConfidencePolytoped polytope(const Candidate& c) const {
    const auto e = confidence_ellipsoid(c.regression, cfg_.delta, c.model->S);
    return cfg_.polytope == PolytopeMode::box ? ellipsoid_to_box(e, *c.model) : ellipsoid_to_polytope_tight(e, *c.model);
  }

  std::vector<IntervalModel> planning_models() const {
    std::vector<IntervalModel> models;
    switch (cfg_.kind) {
      case AgentKind::oracle: {
        // Knows θ but not ω: intervals come from the disturbance bounds alone.
        const PredictorConfigd pc{cfg_.predictor, spec_.dt, cfg_.substeps, cfg_.error_allowance};
        models.emplace_back(IntervalPredictord(point_polytope(spec_.model, spec_.theta_true), spec_.model, spec_.noise, pc),
                            spec_.actions, spec_.reward_lower, spec_.may_collide);
        break;
      }
      case AgentKind::nominal:
        for (const auto& c : candidates_)
          models.push_back(point_model(spec_, *c.model, rls_solve(c.regression), cfg_.substeps));
        break;
      case AgentKind::robust: {
        const PredictorConfigd pc{cfg_.predictor, spec_.dt, cfg_.substeps, cfg_.error_allowance};
        for (const auto& c : candidates_)
          models.emplace_back(IntervalPredictord(polytope(c), *c.model, spec_.noise, pc), spec_.actions,
                              spec_.reward_lower, spec_.may_collide);
        break;
      }
    }
    return models;
  }

  /// Adequacy test against the current polytopes, then the regression update.
  void absorb(const VectorXd& x, const VectorXd& u, const VectorXd& y, double t, std::size_t step,
              std::vector<RejectionEvent>& rejections) {
    if (cfg_.multi_model) {
      std::vector<Candidate> kept;
      for (auto& c : candidates_) {
        const auto [eta_lo, eta_hi] = noise_bounds(*c.model, spec_.noise, t, cfg_.max_samples, cfg_.test_level);
        if (consistency_test(polytope(c), *c.model, x, u, y, eta_lo, eta_hi))
          kept.push_back(std::move(c));
        else
          rejections.push_back({step, c.index});
      }
      if (kept.empty()) throw InternalError("every candidate structure was rejected");
      candidates_ = std::move(kept);
    }
    for (auto& c : candidates_) {
      const MatrixXd features = compute_features(*c.model, x);
      c.regression = rls_update(c.regression, features, observe(*c.model, x, u, y), spec_.noise);
    }
  }

  std::vector<std::size_t> surviving() const {
    std::vector<std::size_t> out;
    for (const auto& c : candidates_) out.push_back(c.index);
    return out;
  }

 private:
  const env::EnvironmentSpec& spec_;
  const AgentConfig& cfg_;
  std::vector<Candidate> candidates_;
};

}  // namespace

EpisodeTrace run_episode(const env::EnvironmentSpec& spec, const AgentConfig& cfg, std::size_t warm_samples) {
  cfg.validate();
  spec.validate();
  EpisodeTrace trace;
  trace.environment = spec.name;
  trace.agent = cfg.kind;
  trace.seed = cfg.seed;
  trace.warm_samples = warm_samples;

  env::Rng noise_rng(cfg.seed);
  env::Rng action_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Agent agent(spec, cfg);

  std::size_t step = 0;
  try {
    VectorXd x = spec.x0;
    double t = 0.0;
    std::uniform_int_distribution<std::size_t> random_action(0, spec.actions.size() - 1);
    for (; step < warm_samples; ++step) {
      const VectorXd u = spec.actions.controls[random_action(action_rng)].evaluate(x);
      const auto out = env::true_step(spec, x, u, t, noise_rng);
      agent.absorb(x, u, out.y_meas, t, step, trace.rejections);
      x = out.x_next;
      t += spec.dt;
    }

    x = spec.x0;
    t = 0.0;
    double discount = 1.0;
    planning::PlannerConfig pc{cfg.gamma, cfg.budget, spec.actions.size(), planning::BackupRule::robust};
    for (std::size_t n = 0; n < spec.horizon; ++n, ++step) {
      const auto start = Clock::now();
      const auto models = agent.planning_models();
      std::vector<IntervalModel::State> roots;
      for (const auto& m : models) roots.push_back(m.root(x, t));
      planning::OptimisticPlanner<IntervalModel> planner(std::span<const IntervalModel>(models), roots, pc);
      const auto result = planner.run();

      StepRecord rec;
      rec.t = t;
      rec.x = x;
      rec.action = result.recommended_action;
      rec.models = models.size();
      const auto predicted = models.front().step(roots.front(), rec.action);
      const auto box = models.front().to_original(predicted.next);
      rec.predicted_lower = box.lower;
      rec.predicted_upper = box.upper;
      rec.min_planned_reward = predicted.reward;

      rec.u = spec.actions.controls[rec.action].evaluate(x);
      const auto out = env::true_step(spec, x, rec.u, t, noise_rng);
      rec.y = out.y_meas;
      agent.absorb(x, rec.u, out.y_meas, t, step, trace.rejections);

      x = out.x_next;
      t += spec.dt;
      rec.reward = spec.reward(x);
      rec.collision = spec.collision && spec.collision(x);
      rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      trace.discounted_return += discount * rec.reward;
      discount *= cfg.gamma;
      trace.steps.push_back(std::move(rec));
      if (trace.steps.back().collision) {
        trace.collided = true;
        break;
      }
    }
  } catch (const std::exception& e) {
    throw EpisodeError("episode aborted at step " + std::to_string(step) + ": " + e.what(), step);
  }
  trace.surviving = agent.surviving();
  return trace;
}

double oracle_root_value(const env::EnvironmentSpec& spec, const VectorXd& x, std::size_t budget) {
  if (budget < 1) throw ConfigError("oracle_root_value: budget must be at least 1");
  const std::vector<IntervalModel> models{point_model(spec, spec.model, spec.theta_true, 4)};
  planning::PlannerConfig pc{spec.gamma, budget, spec.actions.size(), planning::BackupRule::robust};
  planning::OptimisticPlanner<IntervalModel> planner(std::span<const IntervalModel>(models), {models.front().root(x, 0.0)}, pc);
  return planner.run().root_u_value;
}

double oracle_value(const env::EnvironmentSpec& spec, const VectorXd& x, std::size_t budget) {
  if (budget < 1) throw ConfigError("oracle_value: budget must be at least 1");
  const std::vector<IntervalModel> models{point_model(spec, spec.model, spec.theta_true, 4)};
  const planning::PlannerConfig pc{spec.gamma, budget, spec.actions.size(), planning::BackupRule::robust};
  const MatrixXd a = spec.model.state_matrix(spec.theta_true);
  const VectorXd no_disturbance = VectorXd::Zero(spec.model.disturbance_dim());
  VectorXd state = x;
  double value = 0.0, discount = 1.0, t = 0.0;
  for (std::size_t n = 0; n < spec.horizon; ++n) {
    planning::OptimisticPlanner<IntervalModel> planner(std::span<const IntervalModel>(models), {models.front().root(state, t)}, pc);
    const auto action = planner.run().recommended_action;
    state = env::integrate(spec, a, state, spec.actions.controls[action].evaluate(state), no_disturbance, spec.true_substeps);
    t += spec.dt;
    value += discount * spec.reward(state);
    discount *= spec.gamma;
    if (spec.collision && spec.collision(state)) break;
  }
  return value;
}

namespace {

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, count));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) fn(i);
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace

std::vector<MetricsRow> run_batch(const env::EnvironmentSpec& spec, const AgentConfig& cfg, std::size_t n_seeds,
                                  const BatchOptions& options) {
  if (n_seeds < 1) throw ConfigError("run_batch: need at least one seed");
  cfg.validate();
  const double value = oracle_value(spec, spec.x0, cfg.oracle_budget_factor * cfg.budget);
  std::vector<MetricsRow> rows(n_seeds);
  parallel_for(n_seeds, options.threads, [&](std::size_t i) {
    AgentConfig local = cfg;
    local.seed = cfg.seed + i;
    MetricsRow& row = rows[i];
    row.seed = local.seed;
    row.agent = cfg.kind;
    row.samples = options.warm_samples;
    row.oracle_value = value;
    const auto start = Clock::now();
    try {
      const auto trace = run_episode(spec, local, options.warm_samples);
      row.realized_return = trace.discounted_return;
      row.collision = trace.collided;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.suboptimality = row.oracle_value - row.realized_return;
    if (options.record_timing) row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  });
  std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) { return a.seed < b.seed; });
  return rows;
}

BatchSummary summarize(const std::vector<MetricsRow>& rows) {
  BatchSummary s;
  std::vector<double> returns;
  for (const auto& r : rows) {
    ++s.episodes;
    if (r.error) {
      ++s.errors;
      continue;
    }
    if (r.collision) ++s.failures;
    returns.push_back(r.realized_return);
  }
  if (s.episodes) s.failure_rate = static_cast<double>(s.failures) / static_cast<double>(s.episodes);
  if (!returns.empty()) {
    s.min_return = *std::min_element(returns.begin(), returns.end());
    s.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    double ss = 0.0;
    for (double r : returns) ss += (r - s.mean_return) * (r - s.mean_return);
    s.std_return = returns.size() > 1 ? std::sqrt(ss / static_cast<double>(returns.size() - 1)) : 0.0;
  }
  return s;
}

std::vector<SuboptimalityPoint> suboptimality_series(const env::EnvironmentSpec& spec, const AgentConfig& cfg,
                                                     const std::vector<std::size_t>& buckets, std::size_t n_seeds,
                                                     std::size_t threads) {
  std::vector<SuboptimalityPoint> out;
  for (std::size_t n : buckets) {
    BatchOptions options;
    options.warm_samples = n;
    options.threads = threads;
    const auto rows = run_batch(spec, cfg, n_seeds, options);
    SuboptimalityPoint pt;
    pt.samples = n;
    std::vector<double> values;
    for (const auto& r : rows)
      if (!r.error) values.push_back(r.suboptimality);
    pt.episodes = values.size();
    if (!values.empty()) {
      pt.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - pt.mean) * (v - pt.mean);
      const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
      const double half = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
      pt.ci_low = pt.mean - half;
      pt.ci_high = pt.mean + half;
      pt.max = *std::max_element(values.begin(), values.end());
    }
    out.push_back(pt);
  }
  return out;
}

std::vector<ComparisonRow> compare_predictors(const ConfidencePolytoped& polytope, const StructuredModeld& model,
                                              const NoiseModeld& noise, const VectorXd& x0,
                                              const AffineControld& control, double dt, std::size_t steps,
                                              int substeps) {
  const IntervalPredictord simple(polytope, model, noise, {PredictorMode::simple, dt, substeps});
  const IntervalPredictord enhanced(polytope, model, noise, {PredictorMode::automatic, dt, substeps});
  const std::vector<AffineControld> controls(steps, control);
  const auto a = predict_trajectory(simple, x0, controls);
  const auto b = predict_trajectory(enhanced, x0, controls);
  std::vector<ComparisonRow> rows;
  rows.push_back({0.0, StateIntervald::degenerate(x0), StateIntervald::degenerate(x0)});
  for (std::size_t k = 0; k < steps; ++k) rows.push_back({static_cast<double>(k + 1) * dt, a[k], b[k]});
  return rows;
}

ScalarReference scalar_reference() {
  ScalarReference r;
  r.model = env::scalar_env().model;
  r.polytope = box_polytope<double>(r.model, VectorXd::Constant(1, 1.5), VectorXd::Constant(1, 0.5));
  const VectorXd w = VectorXd::Constant(1, 0.05);
  r.noise = NoiseModeld::constant(env::noise_proxy(r.model.D, w, 0.1), -w, w);
  r.x0 = VectorXd::Ones(1);
  return r;
}

}  // namespace rh::harness
