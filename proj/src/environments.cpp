#include "rh/environments.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace rh::env {

Obstacle Obstacle::rectangle(Eigen::Vector2d lo, Eigen::Vector2d hi) {
  if (!((hi - lo).array() > 0.0).all()) throw ConfigError("rectangle obstacle must have positive extents");
  Obstacle o;
  o.kind = Kind::rectangle;
  o.min = lo;
  o.max = hi;
  return o;
}

Obstacle Obstacle::disc(Eigen::Vector2d c, double r) {
  if (!(r > 0.0)) throw ConfigError("disc obstacle must have a positive radius");
  Obstacle o;
  o.kind = Kind::disc;
  o.center = c;
  o.radius = r;
  return o;
}

bool Obstacle::contains(const Eigen::Vector2d& p) const {
  if (kind == Kind::rectangle) return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  return (p - center).norm() <= radius;
}

bool Obstacle::intersects(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi) const {
  if (kind == Kind::rectangle) return (lo.array() <= max.array()).all() && (hi.array() >= min.array()).all();
  // Closest point of the box to the centre.
  const Eigen::Vector2d closest = center.cwiseMax(lo).cwiseMin(hi);
  return (closest - center).norm() <= radius;
}

bool Scene::collides(const Eigen::Vector2d& p) const {
  return std::any_of(obstacles.begin(), obstacles.end(), [&](const Obstacle& o) { return o.contains(p); });
}

bool Scene::may_collide(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi) const {
  return std::any_of(obstacles.begin(), obstacles.end(), [&](const Obstacle& o) { return o.intersects(lo, hi); });
}

double obstacle_reward(const Scene& scene, const VectorXd& x) {
  require(x.size() >= 2, "obstacle_reward: state must carry a position");
  const Eigen::Vector2d p = x.head<2>();
  if (scene.collides(p)) return 0.0;
  return 1.0 / (1.0 + (p - scene.goal).norm());
}

double obstacle_reward_lower(const Scene& scene, const StateIntervald& box) {
  require(box.size() >= 2, "obstacle_reward_lower: state must carry a position");
  const Eigen::Vector2d lo = box.lower.head<2>();
  const Eigen::Vector2d hi = box.upper.head<2>();
  if (scene.may_collide(lo, hi)) return 0.0;
  const Eigen::Vector2d far = (lo - scene.goal).cwiseAbs().cwiseMax((hi - scene.goal).cwiseAbs());
  return 1.0 / (1.0 + far.norm());
}

void ActionSpace::validate(Eigen::Index p, Eigen::Index q) const {
  require(!controls.empty(), "ActionSpace: at least one action is required");
  for (const auto& c : controls)
    require(c.gain.rows() == q && c.gain.cols() == p && c.offset.size() == q,
            "ActionSpace: every controller must be dimensioned (q, p)");
}

ActionSpace ActionSpace::constant_controls(const std::vector<VectorXd>& levels, Eigen::Index p,
                                           std::vector<std::string> names) {
  ActionSpace out;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    out.controls.push_back(AffineControld::constant(levels[i], p));
    out.names.push_back(i < names.size() ? names[i] : "a" + std::to_string(i));
  }
  return out;
}

void EnvironmentSpec::validate() const {
  model.validate();
  noise.validate(model.state_dim(), model.disturbance_dim());
  actions.validate(model.state_dim(), model.control_dim());
  require(theta_true.size() == model.param_dim(), "EnvironmentSpec: θ_true must have length d");
  if ((theta_true.array().abs() > model.S).any()) throw ConfigError("EnvironmentSpec: θ_true outside [-S, S]^d");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("EnvironmentSpec: γ must lie in (0, 1)");
  if (!(dt > 0.0)) throw ConfigError("EnvironmentSpec: dt must be positive");
  require(x0.size() == model.state_dim(), "EnvironmentSpec: x0 must have length p");
  require(true_candidate < std::max<std::size_t>(1, candidates.size()), "EnvironmentSpec: bad true candidate index");
  require(static_cast<bool>(reward) && static_cast<bool>(reward_lower), "EnvironmentSpec: rewards are not set");
}

VectorXd integrate(const EnvironmentSpec& spec, const MatrixXd& a, const VectorXd& x, const VectorXd& u,
                   const VectorXd& omega, int substeps) {
  const VectorXd drive = spec.model.B * u + spec.model.D * omega;
  const double h = spec.dt / substeps;
  VectorXd s = x;
  for (int i = 0; i < substeps; ++i) {
    const VectorXd k1 = a * s + drive;
    const VectorXd k2 = a * (s + 0.5 * h * k1) + drive;
    const VectorXd k3 = a * (s + 0.5 * h * k2) + drive;
    const VectorXd k4 = a * (s + h * k3) + drive;
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return s;
}

StepOutcome true_step(const EnvironmentSpec& spec, const VectorXd& x, const VectorXd& u, double t, Rng& rng) {
  require(x.size() == spec.model.state_dim() && u.size() == spec.model.control_dim(), "true_step: dimension mismatch");
  const VectorXd lo = spec.noise.omega_lower(t);
  const VectorXd hi = spec.noise.omega_upper(t);
  VectorXd omega(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) omega(i) = std::uniform_real_distribution<double>(lo(i), hi(i))(rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd nu(x.size());
  for (Eigen::Index i = 0; i < nu.size(); ++i) nu(i) = spec.measurement_sigma * gauss(rng);

  const MatrixXd a = spec.model.state_matrix(spec.theta_true);
  StepOutcome out;
  out.y_meas = a * x + spec.model.B * u + spec.model.D * omega + nu;
  out.x_next = integrate(spec, a, x, u, omega, spec.true_substeps);
  out.omega = std::move(omega);
  return out;
}

MatrixXd noise_proxy(const MatrixXd& d, const VectorXd& omega_half_width, double measurement_sigma) {
  const auto p = d.rows();
  return measurement_sigma * measurement_sigma * MatrixXd::Identity(p, p) +
         d * omega_half_width.cwiseAbs2().asDiagonal() * d.transpose();
}

namespace {

NoiseModeld symmetric_noise(const MatrixXd& d, double half_width, double sigma) {
  const VectorXd w = VectorXd::Constant(d.cols(), half_width);
  return NoiseModeld::constant(noise_proxy(d, w, sigma), -w, w);
}

Eigen::Vector2d vec2(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("scene file: expected a 2-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

VectorXd vecn(const nlohmann::json& j, std::size_t n) {
  if (!j.is_array() || j.size() != n) throw ConfigError("scene file: expected a " + std::to_string(n) + "-element array");
  VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

ObstacleConfig ObstacleConfig::defaults() {
  ObstacleConfig c;
  c.scene.goal = {1.79, 1.49};
  c.scene.obstacles = {
      Obstacle::rectangle({0.41, 0.13}, {0.78, 0.60}),
      Obstacle::rectangle({1.49, 0.55}, {1.96, 1.05}),
      Obstacle::rectangle({1.20, 1.75}, {1.60, 1.95}),
  };
  c.start = VectorXd::Zero(4);
  c.theta_true = (VectorXd(2) << 0.5, 1.0).finished();
  return c;
}

ObstacleConfig ObstacleConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scene file " + path.string() + ": " + e.what());
  }
  ObstacleConfig c = defaults();
  try {
    if (j.contains("goal")) c.scene.goal = vec2(j["goal"]);
    if (j.contains("obstacles")) {
      c.scene.obstacles.clear();
      for (const auto& o : j["obstacles"]) {
        const std::string type = o.value("type", "rectangle");
        if (type == "rectangle")
          c.scene.obstacles.push_back(Obstacle::rectangle(vec2(o.at("min")), vec2(o.at("max"))));
        else if (type == "disc")
          c.scene.obstacles.push_back(Obstacle::disc(vec2(o.at("center")), o.at("radius").get<double>()));
        else
          throw ConfigError("scene file: unknown obstacle type '" + type + "'");
      }
    }
    if (j.contains("start")) c.start = vecn(j["start"], 4);
    if (j.contains("theta_true")) c.theta_true = vecn(j["theta_true"], 2);
    if (j.contains("omega_half_width")) c.omega_half_width = j["omega_half_width"].get<double>();
    if (j.contains("measurement_sigma")) c.measurement_sigma = j["measurement_sigma"].get<double>();
    if (j.contains("dt")) c.dt = j["dt"].get<double>();
    if (j.contains("horizon")) c.horizon = j["horizon"].get<std::size_t>();
    if (j.contains("S")) c.S = j["S"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scene file " + path.string() + ": " + e.what());
  }
  if (!(c.omega_half_width >= 0.0) || !(c.measurement_sigma > 0.0))
    throw ConfigError("scene file: noise levels must be non-negative (σ positive)");
  return c;
}

EnvironmentSpec obstacle_env(const ObstacleConfig& cfg) {
  EnvironmentSpec e;
  e.name = "obstacle";
  auto& m = e.model;
  m.A = MatrixXd::Zero(4, 4);
  m.A(0, 2) = 1.0;
  m.A(1, 3) = 1.0;
  m.B = MatrixXd::Zero(4, 2);
  m.B(2, 0) = 1.0;
  m.B(3, 1) = 1.0;
  m.D = m.B;
  MatrixXd phi_x = MatrixXd::Zero(4, 4), phi_y = MatrixXd::Zero(4, 4);
  phi_x(2, 2) = -1.0;
  phi_y(3, 3) = -1.0;
  m.phi = {phi_x, phi_y};
  m.S = cfg.S;
  e.candidates = {m};
  e.noise = symmetric_noise(m.D, cfg.omega_half_width, cfg.measurement_sigma);
  e.measurement_sigma = cfg.measurement_sigma;
  e.theta_true = cfg.theta_true;
  e.actions = ActionSpace::constant_controls(
      {(VectorXd(2) << -1, -1).finished(), (VectorXd(2) << -1, 1).finished(), (VectorXd(2) << 1, -1).finished(),
       (VectorXd(2) << 1, 1).finished()},
      4, {"(-1,-1)", "(-1,1)", "(1,-1)", "(1,1)"});
  e.dt = cfg.dt;
  e.horizon = cfg.horizon;
  e.x0 = cfg.start;
  e.scene = cfg.scene;
  const Scene scene = cfg.scene;
  e.reward = [scene](const VectorXd& x) { return obstacle_reward(scene, x); };
  e.reward_lower = [scene](const StateIntervald& b) { return obstacle_reward_lower(scene, b); };
  e.collision = [scene](const VectorXd& x) { return scene.collides(x.head<2>()); };
  e.may_collide = [scene](const StateIntervald& b) { return scene.may_collide(b.lower.head<2>(), b.upper.head<2>()); };
  e.validate();
  return e;
}

EnvironmentSpec scalar_env(double theta_true) {
  EnvironmentSpec e;
  e.name = "scalar";
  auto& m = e.model;
  m.A = MatrixXd::Zero(1, 1);
  m.B = MatrixXd::Ones(1, 1);
  m.D = MatrixXd::Ones(1, 1);
  m.phi = {-MatrixXd::Ones(1, 1)};
  m.S = 2.0;
  e.candidates = {m};
  e.noise = symmetric_noise(m.D, 0.05, 0.1);
  e.measurement_sigma = 0.1;
  e.theta_true = VectorXd::Constant(1, theta_true);
  e.actions = ActionSpace::constant_controls({VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 0.0),
                                              VectorXd::Constant(1, 1.0)},
                                             1, {"-1", "0", "+1"});
  e.x0 = VectorXd::Ones(1);
  e.reward = [](const VectorXd& x) { return 1.0 / (1.0 + std::abs(x(0))); };
  e.reward_lower = [](const StateIntervald& b) {
    return 1.0 / (1.0 + std::max(std::abs(b.lower(0)), std::abs(b.upper(0))));
  };
  e.collision = [](const VectorXd&) { return false; };
  e.validate();
  return e;
}

EnvironmentSpec two_model_env(double omega_half_width, double measurement_sigma) {
  EnvironmentSpec e;
  e.name = "two_model";
  StructuredModeld truth;
  truth.A = MatrixXd::Zero(2, 2);
  truth.B = MatrixXd::Identity(2, 2);
  truth.D = MatrixXd::Identity(2, 2);
  truth.phi = {-MatrixXd::Identity(2, 2)};
  truth.S = 2.0;
  // Same structure with the sign of the second feature entry flipped: both
  // explain any data with x₂ = 0 and disagree as soon as x₂ moves.
  StructuredModeld flipped = truth;
  flipped.phi[0](1, 1) = 1.0;
  e.model = truth;
  e.candidates = {truth, flipped};
  e.true_candidate = 0;
  e.noise = symmetric_noise(truth.D, omega_half_width, measurement_sigma);
  e.measurement_sigma = measurement_sigma;
  e.theta_true = VectorXd::Constant(1, 1.0);
  e.actions = ActionSpace::constant_controls(
      {(VectorXd(2) << -1, -1).finished(), (VectorXd(2) << -1, 1).finished(), (VectorXd(2) << 1, -1).finished(),
       (VectorXd(2) << 1, 1).finished()},
      2);
  e.x0 = (VectorXd(2) << 1.0, 0.0).finished();
  const Eigen::Vector2d goal(0.0, 0.5);
  e.reward = [goal](const VectorXd& x) { return 1.0 / (1.0 + (x.head<2>() - goal).norm()); };
  e.reward_lower = [goal](const StateIntervald& b) {
    const Eigen::Vector2d far = (b.lower.head<2>() - goal).cwiseAbs().cwiseMax((b.upper.head<2>() - goal).cwiseAbs());
    return 1.0 / (1.0 + far.norm());
  };
  e.collision = [](const VectorXd&) { return false; };
  e.validate();
  return e;
}

EnvironmentSpec make_environment(const std::string& name, const std::optional<std::filesystem::path>& config) {
  if (name == "obstacle") return obstacle_env(config ? ObstacleConfig::load(*config) : ObstacleConfig::defaults());
  if (config) throw ConfigError("--config is only supported for the obstacle environment");
  if (name == "scalar") return scalar_env();
  if (name == "two_model") return two_model_env();
  throw ConfigError("unknown environment '" + name + "'");
}

}  // namespace rh::env
