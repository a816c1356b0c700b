#pragma once

// Online structured least squares with high-confidence parameter sets.
//
// The dynamics are assumed affine in an unknown parameter vector,
//   A(θ) = A + Σ_j θ_j φ_j,
// and every measured derivative yields a linear regression sample
//   y = ẋ_meas - A x - B u = Φ(x) θ + η.

#include "rh/core.hpp"
#include "rh/lp.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace rh {

template <typename Scalar>
struct StructuredModel {
  Matrix<Scalar> A;                 // p×p known nominal part
  Matrix<Scalar> B;                 // p×q
  Matrix<Scalar> D;                 // p×r
  std::vector<Matrix<Scalar>> phi;  // d features, each p×p
  Scalar S = Scalar(1);             // θ ∈ [-S, S]^d

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index control_dim() const { return B.cols(); }
  Eigen::Index disturbance_dim() const { return D.cols(); }
  Eigen::Index param_dim() const { return static_cast<Eigen::Index>(phi.size()); }

  void validate() const {
    const auto p = state_dim();
    require(p >= 1 && A.cols() == p, "StructuredModel: A must be square and non-empty");
    require(B.rows() == p && B.cols() >= 1, "StructuredModel: B must be p×q with q ≥ 1");
    require(D.rows() == p && D.cols() >= 1, "StructuredModel: D must be p×r with r ≥ 1");
    require(!phi.empty(), "StructuredModel: at least one feature is required");
    for (const auto& f : phi)
      require(f.rows() == p && f.cols() == p, "StructuredModel: every feature must be p×p");
    require(S > Scalar(0), "StructuredModel: S must be positive");
  }

  /// A(θ) = A + Σ θ_j φ_j.
  Matrix<Scalar> state_matrix(const Vector<Scalar>& theta) const {
    require(theta.size() == param_dim(), "state_matrix: θ has the wrong dimension");
    Matrix<Scalar> out = A;
    for (Eigen::Index j = 0; j < param_dim(); ++j) out += theta(j) * phi[static_cast<std::size_t>(j)];
    return out;
  }

  /// Σ θ_j φ_j without the nominal part; maps parameter offsets to matrix offsets.
  Matrix<Scalar> feature_combination(const Vector<Scalar>& theta) const {
    return state_matrix(theta) - A;
  }
};

template <typename Scalar>
struct NoiseModel {
  Matrix<Scalar> sigma_p;  // sub-Gaussian covariance proxy of η
  std::function<Vector<Scalar>(Scalar)> omega_lower;
  std::function<Vector<Scalar>(Scalar)> omega_upper;

  static NoiseModel constant(Matrix<Scalar> sigma, Vector<Scalar> lower, Vector<Scalar> upper) {
    NoiseModel n;
    n.sigma_p = std::move(sigma);
    n.omega_lower = [lower](Scalar) { return lower; };
    n.omega_upper = [upper](Scalar) { return upper; };
    return n;
  }

  void validate(Eigen::Index p, Eigen::Index r, Scalar t = Scalar(0)) const {
    require(sigma_p.rows() == p && sigma_p.cols() == p, "NoiseModel: Σ_p must be p×p");
    if (!sigma_p.isApprox(sigma_p.transpose(), Scalar(1e-9)) ||
        Eigen::LLT<Matrix<Scalar>>(sigma_p).info() != Eigen::Success)
      throw ConfigError("NoiseModel: Σ_p must be symmetric positive definite");
    require(static_cast<bool>(omega_lower) && static_cast<bool>(omega_upper),
            "NoiseModel: disturbance bounds are not set");
    const Vector<Scalar> lo = omega_lower(t);
    const Vector<Scalar> hi = omega_upper(t);
    require(lo.size() == r && hi.size() == r, "NoiseModel: disturbance bounds must have length r");
    if ((lo.array() > hi.array()).any()) throw ConfigError("NoiseModel: ω lower bound exceeds upper bound");
  }
};

/// Running sufficient statistics of the regularised regression.
template <typename Scalar>
struct RegressionState {
  Matrix<Scalar> gram;    // G = Σ Φᵀ Σ_p⁻¹ Φ + λ I
  Vector<Scalar> moment;  // Σ Φᵀ Σ_p⁻¹ y
  std::size_t samples = 0;
  Scalar lambda = Scalar(1);

  static RegressionState initial(Eigen::Index d, Scalar lambda = Scalar(1)) {
    if (!(lambda > Scalar(0))) throw ConfigError("RegressionState: λ must be positive");
    RegressionState s;
    s.gram = lambda * Matrix<Scalar>::Identity(d, d);
    s.moment = Vector<Scalar>::Zero(d);
    s.lambda = lambda;
    return s;
  }

  Eigen::Index param_dim() const { return gram.rows(); }
};

template <typename Scalar>
struct ConfidenceEllipsoid {
  Vector<Scalar> center;  // θ̂
  Matrix<Scalar> gram;    // G
  Scalar radius = Scalar(0);  // β(δ)
  Scalar delta = Scalar(0);

  /// ‖θ - θ̂‖_G.
  Scalar distance(const Vector<Scalar>& theta) const {
    const Vector<Scalar> e = theta - center;
    return std::sqrt(std::max(Scalar(0), e.dot(gram * e)));
  }
  bool contains(const Vector<Scalar>& theta, Scalar tol = Scalar(1e-9)) const {
    return distance(theta) <= radius + tol;
  }
};

/// Vertex representation { A_N + Σ α_i ΔA_i : α in the simplex }, kept in
/// parameter space as well so containment can be checked on θ directly.
template <typename Scalar>
struct ConfidencePolytope {
  Matrix<Scalar> a_center;
  std::vector<Matrix<Scalar>> deltas;
  Vector<Scalar> theta_center;
  std::vector<Vector<Scalar>> theta_deltas;

  std::size_t vertex_count() const { return deltas.size(); }

  /// Parameter offsets as columns, the layout the LP helpers expect.
  Matrix<Scalar> theta_offset_matrix() const {
    Matrix<Scalar> m(theta_center.size(), static_cast<Eigen::Index>(theta_deltas.size()));
    for (std::size_t k = 0; k < theta_deltas.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = theta_deltas[k];
    return m;
  }

  /// θ ∈ θ_c + conv{Δθ_k}, decided by LP.
  bool contains_parameter(const Vector<Scalar>& theta, Scalar tol = Scalar(1e-9)) const {
    const Vector<Scalar> offset = theta - theta_center;
    const auto r = lp::convex_combination_in_box<Scalar>(theta_offset_matrix(), offset, offset, tol);
    if (r.status == lp::Status::iteration_limit) throw SolverError("polytope containment: LP did not converge");
    return r.status == lp::Status::feasible;
  }

  /// Entrywise enclosure min_i ΔA_i ≤ A - A_N ≤ max_i ΔA_i.
  std::pair<Matrix<Scalar>, Matrix<Scalar>> entrywise_bounds() const {
    Matrix<Scalar> lo = deltas.front();
    Matrix<Scalar> hi = deltas.front();
    for (const auto& d : deltas) {
      lo = lo.cwiseMin(d);
      hi = hi.cwiseMax(d);
    }
    return {a_center + lo, a_center + hi};
  }
};

/// Φ(x) = [φ_1 x, …, φ_d x].
template <typename Scalar>
Matrix<Scalar> compute_features(const StructuredModel<Scalar>& model, const Vector<Scalar>& x) {
  require(x.size() == model.state_dim(), "compute_features: x must have length p");
  Matrix<Scalar> features(model.state_dim(), model.param_dim());
  for (Eigen::Index j = 0; j < model.param_dim(); ++j) features.col(j) = model.phi[static_cast<std::size_t>(j)] * x;
  return features;
}

/// Regression target y = ẋ_meas - A x - B u.
template <typename Scalar>
Vector<Scalar> observe(const StructuredModel<Scalar>& model, const Vector<Scalar>& x, const Vector<Scalar>& u,
                       const Vector<Scalar>& x_dot_meas) {
  require(x.size() == model.state_dim() && x_dot_meas.size() == model.state_dim(),
          "observe: state and measurement must have length p");
  require(u.size() == model.control_dim(), "observe: control must have length q");
  return x_dot_meas - model.A * x - model.B * u;
}

template <typename Scalar>
RegressionState<Scalar> rls_update(const RegressionState<Scalar>& state, const Matrix<Scalar>& features,
                                   const Vector<Scalar>& y, const NoiseModel<Scalar>& noise) {
  require(features.cols() == state.param_dim(), "rls_update: Φ must have d columns");
  require(features.rows() == y.size() && noise.sigma_p.rows() == y.size(),
          "rls_update: Φ, y and Σ_p must agree on p");
  const Eigen::LLT<Matrix<Scalar>> sigma(noise.sigma_p);
  if (sigma.info() != Eigen::Success) throw ConfigError("rls_update: Σ_p is not positive definite");
  const Matrix<Scalar> weighted = sigma.solve(features);  // Σ_p⁻¹ Φ
  RegressionState<Scalar> next = state;
  next.gram += features.transpose() * weighted;
  next.gram = Scalar(0.5) * (next.gram + next.gram.transpose()).eval();
  next.moment += weighted.transpose() * y;
  next.samples += 1;
  return next;
}

/// θ̂ = G⁻¹ b via Cholesky.
template <typename Scalar>
Vector<Scalar> rls_solve(const RegressionState<Scalar>& state) {
  const Eigen::LLT<Matrix<Scalar>> llt(state.gram);
  if (llt.info() != Eigen::Success) throw InternalError("rls_solve: Gram matrix is not positive definite");
  return llt.solve(state.moment);
}

template <typename Scalar>
Scalar log_determinant_spd(const Matrix<Scalar>& m) {
  const Eigen::LLT<Matrix<Scalar>> llt(m);
  if (llt.info() != Eigen::Success) throw InternalError("log-determinant: matrix is not positive definite");
  return Scalar(2) * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// β_N(δ) = sqrt(2 ln(det(G)^½ / (δ det(λI)^½))) + sqrt(λ d) S.
template <typename Scalar>
Scalar confidence_radius(const RegressionState<Scalar>& state, Scalar delta, Scalar S) {
  if (!(delta > Scalar(0) && delta < Scalar(1))) throw ConfigError("confidence_radius: δ must lie in (0, 1)");
  if (!(S > Scalar(0))) throw ConfigError("confidence_radius: S must be positive");
  const auto d = static_cast<Scalar>(state.param_dim());
  const Scalar log_ratio = Scalar(0.5) * (log_determinant_spd(state.gram) - d * std::log(state.lambda));
  const Scalar argument = Scalar(2) * (std::max(Scalar(0), log_ratio) - std::log(delta));
  return std::sqrt(argument) + std::sqrt(state.lambda * d) * S;
}

template <typename Scalar>
ConfidenceEllipsoid<Scalar> confidence_ellipsoid(const RegressionState<Scalar>& state, Scalar delta, Scalar S) {
  return {rls_solve(state), state.gram, confidence_radius(state, delta, S), delta};
}

inline constexpr Eigen::Index default_max_vertex_dim = 8;

namespace detail {

// Sign pattern h_k ∈ {-1, 1}^d: bit j of k set means +1.
template <typename Scalar>
Vector<Scalar> sign_pattern(std::size_t k, Eigen::Index d) {
  Vector<Scalar> h(d);
  for (Eigen::Index j = 0; j < d; ++j) h(j) = ((k >> j) & 1U) ? Scalar(1) : Scalar(-1);
  return h;
}

template <typename Scalar>
ConfidencePolytope<Scalar> polytope_from_offsets(const Vector<Scalar>& center, const StructuredModel<Scalar>& model,
                                                 const Matrix<Scalar>& axes) {
  // axes: columns are the half-axes of the parameter box; vertices are Σ h_j axes_j.
  const Eigen::Index d = center.size();
  ConfidencePolytope<Scalar> out;
  out.theta_center = center;
  out.a_center = model.state_matrix(center);
  const std::size_t count = std::size_t{1} << d;
  out.theta_deltas.reserve(count);
  out.deltas.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Vector<Scalar> offset = axes * sign_pattern<Scalar>(k, d);
    out.deltas.push_back(model.feature_combination(offset));
    out.theta_deltas.push_back(std::move(offset));
  }
  return out;
}

template <typename Scalar>
void check_vertex_capacity(const ConfidenceEllipsoid<Scalar>& e, const StructuredModel<Scalar>& model,
                           Eigen::Index max_dim) {
  require(e.center.size() == model.param_dim() && e.gram.rows() == model.param_dim(),
          "polytope conversion: ellipsoid and model disagree on d");
  if (e.center.size() > max_dim)
    throw CapacityError("polytope conversion: d = " + std::to_string(e.center.size()) +
                        " exceeds the vertex-enumeration limit " + std::to_string(max_dim));
}

}  // namespace detail

/// Exact enclosing axis-aligned box: half-width β sqrt((G⁻¹)_ii) per coordinate.
template <typename Scalar>
ConfidencePolytope<Scalar> ellipsoid_to_box(const ConfidenceEllipsoid<Scalar>& e, const StructuredModel<Scalar>& model,
                                            Eigen::Index max_dim = default_max_vertex_dim) {
  detail::check_vertex_capacity(e, model, max_dim);
  const Eigen::LLT<Matrix<Scalar>> llt(e.gram);
  if (llt.info() != Eigen::Success) throw InternalError("ellipsoid_to_box: G is not positive definite");
  const Matrix<Scalar> inverse = llt.solve(Matrix<Scalar>::Identity(e.gram.rows(), e.gram.cols()));
  const Vector<Scalar> half_widths = e.radius * inverse.diagonal().cwiseMax(Scalar(0)).cwiseSqrt();
  return detail::polytope_from_offsets<Scalar>(e.center, model, half_widths.asDiagonal());
}

/// Axis-aligned parameter box θ_c ± w as a vertex polytope.
template <typename Scalar>
ConfidencePolytope<Scalar> box_polytope(const StructuredModel<Scalar>& model, const Vector<Scalar>& center,
                                        const Vector<Scalar>& half_widths, Eigen::Index max_dim = default_max_vertex_dim) {
  require(center.size() == model.param_dim() && half_widths.size() == model.param_dim(),
          "box_polytope: centre and half-widths must have length d");
  if (center.size() > max_dim) throw CapacityError("box_polytope: d exceeds the vertex-enumeration limit");
  if ((half_widths.array() < Scalar(0)).any()) throw ConfigError("box_polytope: half-widths must be non-negative");
  return detail::polytope_from_offsets<Scalar>(center, model, half_widths.asDiagonal());
}

/// Box aligned with the eigenbasis of G = Q Λ Qᵀ: vertices β Q Λ^{-1/2} h_k.
template <typename Scalar>
ConfidencePolytope<Scalar> ellipsoid_to_polytope_tight(const ConfidenceEllipsoid<Scalar>& e,
                                                       const StructuredModel<Scalar>& model,
                                                       Eigen::Index max_dim = default_max_vertex_dim) {
  detail::check_vertex_capacity(e, model, max_dim);
  const Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(e.gram);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= Scalar(0))
    throw InternalError("ellipsoid_to_polytope_tight: G is not positive definite");
  const Matrix<Scalar> axes =
      e.radius * eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal();
  return detail::polytope_from_offsets<Scalar>(e.center, model, axes);
}

/// Per-coordinate bounds on η = Cν + Dω used by the adequacy test: the
/// interval image of D[ω̲, ω̄] widened by a union-bounded sub-Gaussian tail,
/// ± sqrt(2 (Σ_p)_ii ln(2 p N_max / δ')).
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> noise_bounds(const StructuredModel<Scalar>& model,
                                                       const NoiseModel<Scalar>& noise, Scalar t,
                                                       std::size_t max_samples, Scalar test_level = Scalar(0.05)) {
  if (!(test_level > Scalar(0) && test_level < Scalar(1))) throw ConfigError("noise_bounds: δ' must lie in (0, 1)");
  const Vector<Scalar> lo = noise.omega_lower(t);
  const Vector<Scalar> hi = noise.omega_upper(t);
  const Matrix<Scalar> d_pos = positive_part(model.D);
  const Matrix<Scalar> d_neg = negative_part(model.D);
  const auto p = static_cast<Scalar>(model.state_dim());
  const Scalar log_term = std::log(Scalar(2) * p * static_cast<Scalar>(std::max<std::size_t>(1, max_samples)) / test_level);
  const Vector<Scalar> tail = (Scalar(2) * noise.sigma_p.diagonal().cwiseMax(Scalar(0)) * log_term).cwiseSqrt();
  Vector<Scalar> lower = d_pos * lo - d_neg * hi - tail;
  Vector<Scalar> upper = d_pos * hi - d_neg * lo + tail;
  return {std::move(lower), std::move(upper)};
}

/// Model adequacy: is x_dot_meas ∈ A_N x + B u + conv{ΔA_i x} ⊕ [η̲, η̄]?
/// Returns false when the structure cannot explain the transition; throws
/// SolverError when the LP itself fails.
template <typename Scalar>
bool consistency_test(const ConfidencePolytope<Scalar>& polytope, const StructuredModel<Scalar>& model,
                      const Vector<Scalar>& x, const Vector<Scalar>& u, const Vector<Scalar>& x_dot_meas,
                      const Vector<Scalar>& eta_lower, const Vector<Scalar>& eta_upper,
                      Scalar tol = Scalar(1e-9)) {
  const auto p = model.state_dim();
  require(x.size() == p && x_dot_meas.size() == p && eta_lower.size() == p && eta_upper.size() == p,
          "consistency_test: vectors must have length p");
  require(u.size() == model.control_dim(), "consistency_test: control must have length q");
  if (!eta_lower.allFinite() || !eta_upper.allFinite()) throw ConfigError("consistency_test: η bounds must be finite");
  const Vector<Scalar> residual = x_dot_meas - polytope.a_center * x - model.B * u;
  Matrix<Scalar> vertices(p, static_cast<Eigen::Index>(polytope.vertex_count()));
  for (std::size_t i = 0; i < polytope.vertex_count(); ++i)
    vertices.col(static_cast<Eigen::Index>(i)) = polytope.deltas[i] * x;
  // residual - V α ∈ [η̲, η̄]  ⇔  V α ∈ [residual - η̄, residual - η̲]
  const Vector<Scalar> lower = residual - eta_upper;
  const Vector<Scalar> upper = residual - eta_lower;
  const auto r = lp::convex_combination_in_box<Scalar>(vertices, lower, upper, tol);
  if (r.status == lp::Status::iteration_limit) throw SolverError("consistency_test: LP did not converge");
  return r.status == lp::Status::feasible;
}

using StructuredModeld = StructuredModel<double>;
using NoiseModeld = NoiseModel<double>;
using RegressionStated = RegressionState<double>;
using ConfidenceEllipsoidd = ConfidenceEllipsoid<double>;
using ConfidencePolytoped = ConfidencePolytope<double>;

}  // namespace rh
