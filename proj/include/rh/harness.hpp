#pragma once

// Closed-loop driver: estimate → predict → plan → act, plus batch runs,
// suboptimality series and CSV/JSON export.

#include "rh/environments.hpp"
#include "rh/estimation.hpp"
#include "rh/planning.hpp"
#include "rh/prediction.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rh::harness {

enum class AgentKind { robust, nominal, oracle };
enum class PolytopeMode { box, tight };

std::string to_string(AgentKind kind);
AgentKind parse_agent(const std::string& name);

struct AgentConfig {
  AgentKind kind = AgentKind::robust;
  double delta = 0.9;
  double lambda = 1.0;
  double gamma = 0.9;
  std::size_t budget = 100;
  PredictorMode predictor = PredictorMode::automatic;
  int substeps = 4;
  bool error_allowance = true;  // widen interval predictions by the Euler local error
  PolytopeMode polytope = PolytopeMode::box;
  bool multi_model = false;  // consider every candidate structure of the environment
  std::uint64_t seed = 0;
  double test_level = 0.05;        // δ' of the adequacy test
  std::size_t max_samples = 1000;  // N_max in the union bound of the adequacy test
  std::size_t oracle_budget_factor = 10;

  static AgentConfig for_environment(const env::EnvironmentSpec& spec, AgentKind kind = AgentKind::robust);
  void validate() const;
};

/// Planning model backed by an interval predictor. Its state is the
/// predictor's working-coordinate interval plus an absorbing "may have
/// collided" flag: once set, every later reward is 0.
class IntervalModel {
 public:
  struct State {
    StateIntervald box;
    bool terminal = false;
  };

  IntervalModel(IntervalPredictord predictor, const env::ActionSpace& actions,
                std::function<double(const StateIntervald&)> reward_lower,
                std::function<bool(const StateIntervald&)> terminal = {});

  planning::Transition<State> step(const State& state, std::size_t action) const;
  State root(const VectorXd& x, double t) const { return {predictor_.initial(x, t), false}; }
  StateIntervald to_original(const State& state) const { return predictor_.to_original(state.box); }
  const IntervalPredictord& predictor() const { return predictor_; }

 private:
  IntervalPredictord predictor_;
  const env::ActionSpace* actions_;
  std::function<double(const StateIntervald&)> reward_lower_;
  std::function<bool(const StateIntervald&)> terminal_;
};

/// Degenerate polytope {A(θ)}: turns the interval machinery into a point simulator.
ConfidencePolytoped point_polytope(const StructuredModeld& model, const VectorXd& theta);

/// Point model at θ, ignoring disturbances (used by the nominal and oracle agents).
IntervalModel point_model(const env::EnvironmentSpec& spec, const StructuredModeld& model, const VectorXd& theta,
                          int substeps);

struct StepRecord {
  double t = 0.0;
  VectorXd x;
  VectorXd u;
  VectorXd y;
  std::size_t action = 0;
  double reward = 0.0;
  VectorXd predicted_lower;  // one-step enclosure of the executed action (first model)
  VectorXd predicted_upper;
  double min_planned_reward = 0.0;  // pessimistic reward of that enclosure
  bool collision = false;
  double wall_ms = 0.0;
  std::size_t models = 1;
};

struct RejectionEvent {
  std::size_t step = 0;  // index of the transition that triggered it (warm-up counts first)
  std::size_t candidate = 0;
};

struct EpisodeTrace {
  std::string environment;
  AgentKind agent = AgentKind::robust;
  std::uint64_t seed = 0;
  std::size_t warm_samples = 0;
  std::vector<StepRecord> steps;
  std::vector<RejectionEvent> rejections;
  std::vector<std::size_t> surviving;
  double discounted_return = 0.0;
  bool collided = false;
  std::optional<std::string> error;
};

struct EpisodeError : std::runtime_error {
  EpisodeError(const std::string& what, std::size_t at_step) : std::runtime_error(what), step(at_step) {}
  std::size_t step;
};

/// One episode of the closed loop. With `warm_samples` > 0, the agent first
/// collects that many transitions under uniformly random actions, then the
/// state is reset to x0 and the evaluated episode starts.
EpisodeTrace run_episode(const env::EnvironmentSpec& spec, const AgentConfig& cfg, std::size_t warm_samples = 0);

/// Root U-value of a planner on the true point dynamics: the best discounted
/// return found within the tree, a lower estimate of V(x) over the tree depth
/// (non-decreasing in the budget).
double oracle_root_value(const env::EnvironmentSpec& spec, const VectorXd& x, std::size_t budget);

/// Lower estimate of V(x) over the episode horizon: the discounted return of
/// that planner run in closed loop on the noise-free true system. This is the
/// reference the suboptimality of an episode is measured against.
double oracle_value(const env::EnvironmentSpec& spec, const VectorXd& x, std::size_t budget);

struct MetricsRow {
  std::uint64_t seed = 0;
  AgentKind agent = AgentKind::robust;
  std::size_t samples = 0;
  double realized_return = 0.0;
  double oracle_value = 0.0;
  double suboptimality = 0.0;
  bool collision = false;
  double wall_ms = 0.0;
  std::optional<std::string> error;
};

struct BatchOptions {
  std::size_t warm_samples = 0;
  std::size_t threads = 0;  // 0: hardware concurrency
  bool record_timing = false;
};

/// Seeds base_seed + i for i < n_seeds; rows come back sorted by seed.
std::vector<MetricsRow> run_batch(const env::EnvironmentSpec& spec, const AgentConfig& cfg, std::size_t n_seeds,
                                  const BatchOptions& options = {});

struct BatchSummary {
  std::size_t episodes = 0;
  std::size_t failures = 0;  // collisions
  std::size_t errors = 0;
  double failure_rate = 0.0;
  double min_return = 0.0;
  double mean_return = 0.0;
  double std_return = 0.0;
};
BatchSummary summarize(const std::vector<MetricsRow>& rows);

struct SuboptimalityPoint {
  std::size_t samples = 0;
  std::size_t episodes = 0;
  double mean = 0.0;
  double ci_low = 0.0;  // normal-approximation 95% interval for the mean
  double ci_high = 0.0;
  double max = 0.0;
};
std::vector<SuboptimalityPoint> suboptimality_series(const env::EnvironmentSpec& spec, const AgentConfig& cfg,
                                                     const std::vector<std::size_t>& buckets, std::size_t n_seeds,
                                                     std::size_t threads = 0);

/// Simple and enhanced predictor run side by side from the same point.
struct ComparisonRow {
  double t = 0.0;
  StateIntervald simple;
  StateIntervald enhanced;
};
std::vector<ComparisonRow> compare_predictors(const ConfidencePolytoped& polytope, const StructuredModeld& model,
                                              const NoiseModeld& noise, const VectorXd& x0,
                                              const AffineControld& control, double dt, std::size_t steps,
                                              int substeps = 4);

/// The scalar decay system with θ ∈ [1, 2], ω ∈ [-0.05, 0.05], x(0) = 1.
struct ScalarReference {
  StructuredModeld model;
  ConfidencePolytoped polytope;
  NoiseModeld noise;
  VectorXd x0;
};
ScalarReference scalar_reference();

// ---- export ---------------------------------------------------------------

inline constexpr const char* trace_schema = "rh-trace/1";
inline constexpr const char* metrics_header = "seed,agent,samples,return,oracle_value,suboptimality,collision,wall_ms,error";

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& is);
void write_suboptimality_csv(std::ostream& os, const std::vector<SuboptimalityPoint>& series);

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows);

nlohmann::json trace_to_json(const EpisodeTrace& trace, bool include_timing = false);
EpisodeTrace trace_from_json(const nlohmann::json& j);

/// Opens `path` for writing and hands the stream to `writer`; I/O errors surface as std::ios_base::failure.
void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

}  // namespace rh::harness
