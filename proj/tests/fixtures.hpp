#pragma once

// Shared test systems and the Monte-Carlo inclusion check.

#include "oracles.hpp"
#include "rh/estimation.hpp"
#include "rh/prediction.hpp"

#include <random>

namespace fixture {

using namespace rh;

/// A random point of the parameter polytope (Dirichlet weights on the vertices).
inline VectorXd sample_theta(const ConfidencePolytoped& p, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  VectorXd w(static_cast<Eigen::Index>(p.vertex_count()));
  for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = e(rng);
  w /= w.sum();
  return p.theta_center + p.theta_offset_matrix() * w;
}

/// Random Metzler system in dimension 3 with two structured parameters and
/// its box polytope around a random centre.
struct RandomMetzler {
  StructuredModeld model;
  ConfidencePolytoped polytope;
  NoiseModeld noise;
};

inline RandomMetzler random_metzler(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomMetzler r;
  auto& m = r.model;
  m.A = MatrixXd::Zero(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m.A(i, j) = i == j ? -1.0 - 2.0 * u(rng) : 0.5 * u(rng);
  MatrixXd p1 = MatrixXd::Zero(3, 3), p2 = MatrixXd::Zero(3, 3);
  for (int i = 0; i < 3; ++i) p1(i, i) = -u(rng);
  p2(0, 1) = u(rng);
  p2(2, 0) = u(rng);
  m.phi = {p1, p2};
  m.B = MatrixXd::Identity(3, 3).leftCols(2);
  m.D = MatrixXd::Identity(3, 3);
  m.S = 1.0;
  r.polytope = box_polytope<double>(m, (VectorXd(2) << 0.5, 0.3).finished(), (VectorXd(2) << 0.3, 0.2).finished());
  const VectorXd w = VectorXd::Constant(3, 0.05);
  r.noise = NoiseModeld::constant(MatrixXd::Identity(3, 3) * 0.01, -w, w);
  return r;
}

struct InclusionReport {
  std::size_t checks = 0;
  std::size_t violations = 0;
  double worst_excess = 0.0;
};

/// Draws `draws` (θ, ω) pairs, integrates the true system finely with ω held
/// per dt, and checks the predicted intervals at every dt. The tolerance is
/// 1e-6 plus `allowance_factor`·dt²·‖A‖·‖x‖ per elapsed step.
inline InclusionReport check_inclusion(const IntervalPredictord& predictor, const StructuredModeld& model,
                                       const ConfidencePolytoped& polytope, const NoiseModeld& noise,
                                       const VectorXd& x0, const AffineControld& control, std::size_t steps,
                                       std::size_t draws, std::mt19937_64& rng, double allowance_factor = 10.0) {
  const double dt = predictor.config().dt;
  const std::vector<AffineControld> controls(steps, control);
  const auto intervals = predict_trajectory<double>(predictor, x0, controls);
  InclusionReport rep;
  for (std::size_t n = 0; n < draws; ++n) {
    const VectorXd theta = sample_theta(polytope, rng);
    const MatrixXd a = model.state_matrix(theta);
    VectorXd x = x0;
    double allowance = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      const VectorXd lo = noise.omega_lower(static_cast<double>(k) * dt);
      const VectorXd hi = noise.omega_upper(static_cast<double>(k) * dt);
      VectorXd omega(lo.size());
      for (Eigen::Index i = 0; i < lo.size(); ++i) omega(i) = std::uniform_real_distribution<double>(lo(i), hi(i))(rng);
      // Constant controls only: the offset is the whole input.
      const MatrixXd closed = a - model.B * control.gain;
      x = oracle::rk4(closed, model.B * control.offset + model.D * omega, x, dt, 50);
      allowance += allowance_factor * dt * dt * a.norm() * x.norm();
      const double tol = 1e-6 + allowance;
      const auto& box = intervals[k];
      const double excess = std::max((box.lower - x).maxCoeff(), (x - box.upper).maxCoeff());
      ++rep.checks;
      if (excess > tol) ++rep.violations;
      rep.worst_excess = std::max(rep.worst_excess, excess);
    }
  }
  return rep;
}

/// The scalar decay system ẋ = -θ x + ω, θ ∈ [1, 2], ω ∈ [-0.05, 0.05].
struct Scalar {
  StructuredModeld model;
  ConfidencePolytoped polytope;
  NoiseModeld noise;
};

inline Scalar scalar_system() {
  Scalar s;
  s.model.A = MatrixXd::Zero(1, 1);
  s.model.B = s.model.D = MatrixXd::Ones(1, 1);
  s.model.phi = {MatrixXd::Constant(1, 1, -1.0)};
  s.model.S = 2.0;
  s.polytope = box_polytope<double>(s.model, VectorXd::Constant(1, 1.5), VectorXd::Constant(1, 0.5));
  const VectorXd w = VectorXd::Constant(1, 0.05);
  s.noise = NoiseModeld::constant(MatrixXd::Constant(1, 1, 0.01), -w, w);
  return s;
}

}  // namespace fixture
