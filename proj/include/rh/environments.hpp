#pragma once

// Reference systems: the scalar decay system, the obstacle-avoidance double
// integrator with unknown anisotropic friction, and a two-structure toy for
// model rejection.

#include "rh/core.hpp"
#include "rh/estimation.hpp"
#include "rh/prediction.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace rh::env {

using Rng = std::mt19937_64;

struct Obstacle {
  enum class Kind { rectangle, disc };

  Kind kind = Kind::rectangle;
  Eigen::Vector2d min = Eigen::Vector2d::Zero();  // rectangle corners
  Eigen::Vector2d max = Eigen::Vector2d::Zero();
  Eigen::Vector2d center = Eigen::Vector2d::Zero();  // disc
  double radius = 0.0;

  static Obstacle rectangle(Eigen::Vector2d lo, Eigen::Vector2d hi);
  static Obstacle disc(Eigen::Vector2d c, double r);

  bool contains(const Eigen::Vector2d& p) const;
  /// Does the closed position box [lo, hi] touch the obstacle?
  bool intersects(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi) const;
};

struct Scene {
  std::vector<Obstacle> obstacles;
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();

  bool collides(const Eigen::Vector2d& p) const;
  bool may_collide(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi) const;
};

/// R(x) = δ(x) / (1 + ‖p - p_g‖), x = (p_x, p_y, v_x, v_y).
double obstacle_reward(const Scene& scene, const VectorXd& x);
/// min of R over the box: 0 on any possible collision, else 1 / (1 + farthest distance).
double obstacle_reward_lower(const Scene& scene, const StateIntervald& box);

struct ActionSpace {
  std::vector<std::string> names;
  std::vector<AffineControld> controls;

  std::size_t size() const { return controls.size(); }
  void validate(Eigen::Index p, Eigen::Index q) const;
  static ActionSpace constant_controls(const std::vector<VectorXd>& levels, Eigen::Index p, std::vector<std::string> names = {});
};

struct EnvironmentSpec {
  std::string name;
  StructuredModeld model;                    // the structure that generated the data
  std::vector<StructuredModeld> candidates;  // hypotheses available to a multi-model agent
  std::size_t true_candidate = 0;
  NoiseModeld noise;                         // Σ_p and the disturbance bounds
  double measurement_sigma = 0.1;
  VectorXd theta_true;
  ActionSpace actions;
  double gamma = 0.9;
  double delta = 0.9;
  std::size_t budget = 100;
  double dt = 0.1;
  std::size_t horizon = 30;
  int true_substeps = 10;
  VectorXd x0;
  std::function<double(const VectorXd&)> reward;
  std::function<double(const StateIntervald&)> reward_lower;
  std::function<bool(const VectorXd&)> collision;
  // Collisions end the episode; planners treat a box that may collide as absorbing.
  std::function<bool(const StateIntervald&)> may_collide;
  std::optional<Scene> scene;

  void validate() const;
};

struct StepOutcome {
  VectorXd x_next;
  VectorXd y_meas;  // ẋ(t) + ν at the start of the step
  VectorXd omega;   // disturbance held over the step
};

/// Integrates the true dynamics over one dt (RK4 sub-steps, ω held constant).
StepOutcome true_step(const EnvironmentSpec& spec, const VectorXd& x, const VectorXd& u, double t, Rng& rng);

/// Same, for a caller-chosen θ and ω and no measurement noise.
VectorXd integrate(const EnvironmentSpec& spec, const MatrixXd& a, const VectorXd& x, const VectorXd& u,
                   const VectorXd& omega, int substeps);

/// Σ_p = σ² I + D diag(a²) Dᵀ for uniform disturbances of half-width a.
MatrixXd noise_proxy(const MatrixXd& d, const VectorXd& omega_half_width, double measurement_sigma);

struct ObstacleConfig {
  Scene scene;
  VectorXd start;        // (p_x, p_y, v_x, v_y)
  VectorXd theta_true;   // (θ_x, θ_y)
  double omega_half_width = 0.1;
  double measurement_sigma = 0.1;
  double dt = 0.1;
  std::size_t horizon = 30;
  double S = 2.0;

  static ObstacleConfig defaults();
  /// Reads a JSON scene file; absent keys keep their defaults.
  static ObstacleConfig load(const std::filesystem::path& path);
};

EnvironmentSpec obstacle_env(const ObstacleConfig& cfg = ObstacleConfig::defaults());
EnvironmentSpec scalar_env(double theta_true = 1.5);
EnvironmentSpec two_model_env(double omega_half_width = 1e-3, double measurement_sigma = 1e-3);

/// Looks up "obstacle", "scalar" or "two_model".
EnvironmentSpec make_environment(const std::string& name, const std::optional<std::filesystem::path>& config = {});

}  // namespace rh::env
