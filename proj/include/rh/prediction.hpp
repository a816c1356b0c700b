#pragma once

// Interval predictors for ẋ = A(θ) x + B u + D ω with A(θ) in a polytope
// and ω within known bounds. Both predictors integrate a pair of coupled
// comparison ODEs whose solutions bracket every admissible trajectory.

#include "rh/core.hpp"
#include "rh/estimation.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rh {

template <typename Scalar>
struct StateInterval {
  Vector<Scalar> lower;
  Vector<Scalar> upper;
  Scalar time = Scalar(0);

  static StateInterval degenerate(const Vector<Scalar>& x, Scalar t = Scalar(0)) { return {x, x, t}; }

  Eigen::Index size() const { return lower.size(); }
  Vector<Scalar> width() const { return upper - lower; }
  Vector<Scalar> center() const { return Scalar(0.5) * (lower + upper); }
  bool is_ordered(Scalar tol = Scalar(0)) const { return ((upper - lower).array() >= -tol).all(); }
  bool contains(const Vector<Scalar>& x, Scalar tol = Scalar(0)) const {
    return ((x - lower).array() >= -tol).all() && ((upper - x).array() >= -tol).all();
  }
  bool contains(const StateInterval& other, Scalar tol = Scalar(0)) const {
    return ((other.lower - lower).array() >= -tol).all() && ((upper - other.upper).array() >= -tol).all();
  }
};

template <typename Scalar>
struct IntervalMatrix {
  Matrix<Scalar> lower;
  Matrix<Scalar> upper;

  bool is_ordered() const { return ((upper - lower).array() >= Scalar(0)).all(); }
};

/// Similarity transform x = Z x', with Z⁻¹ A_N Z Metzler.
template <typename Scalar>
struct CoordinateTransform {
  Matrix<Scalar> forward;  // Z
  Matrix<Scalar> inverse;  // Z⁻¹
};

/// Enhanced-predictor data expressed in working coordinates x' = Z⁻¹ x
/// (identical to the original coordinates when no transform is present).
template <typename Scalar>
struct PolytopicDynamics {
  Matrix<Scalar> a_center;     // Z⁻¹ A_N Z, Metzler
  Matrix<Scalar> delta_plus;   // Σ_i (Z⁻¹ ΔA_i Z)⁺
  Matrix<Scalar> delta_minus;  // Σ_i (Z⁻¹ ΔA_i Z)⁻
  Matrix<Scalar> B;            // Z⁻¹ B
  Matrix<Scalar> D;            // Z⁻¹ D
  std::optional<CoordinateTransform<Scalar>> transform;
};

/// Simple-predictor data: entrywise bounds on A(θ) plus the input matrices.
template <typename Scalar>
struct IntervalDynamics {
  IntervalMatrix<Scalar> a;
  Matrix<Scalar> B;
  Matrix<Scalar> D;
};

enum class PredictorMode { simple, enhanced, automatic };

template <typename Scalar>
struct PredictorConfig {
  PredictorMode mode = PredictorMode::automatic;
  Scalar dt = Scalar(0.1);
  int substeps = 4;
  // Widen each Euler sub-step by a bound on its local truncation error, so that
  // the discrete predictor keeps enclosing the continuous-time solution.
  bool error_allowance = false;

  void validate() const {
    if (!(dt > Scalar(0))) throw ConfigError("PredictorConfig: dt must be positive");
    if (substeps < 1) throw ConfigError("PredictorConfig: substeps must be at least 1");
  }
};

/// Affine controller u = -K x + u_a.
template <typename Scalar>
struct AffineControl {
  Matrix<Scalar> gain;  // K, q×p
  Vector<Scalar> offset;  // u_a

  static AffineControl constant(Vector<Scalar> u, Eigen::Index p) {
    const auto q = u.size();
    return {Matrix<Scalar>::Zero(q, p), std::move(u)};
  }
  bool has_feedback() const { return !gain.isZero(Scalar(0)); }
  Vector<Scalar> evaluate(const Vector<Scalar>& x) const { return offset - gain * x; }
};

template <typename Scalar>
bool is_metzler(const Matrix<Scalar>& a, Scalar tol = Scalar(1e-9)) {
  require(a.rows() == a.cols(), "is_metzler: matrix must be square");
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (i != j && a(i, j) < -tol) return false;
  return true;
}

/// Finds Z with Z⁻¹ A Z Metzler: the identity if A already is, otherwise a
/// real eigenbasis with condition number at most max_condition.
template <typename Scalar>
std::optional<CoordinateTransform<Scalar>> metzler_transform(const Matrix<Scalar>& a, Scalar tol = Scalar(1e-9),
                                                             Scalar max_condition = Scalar(1e8)) {
  require(a.rows() == a.cols(), "metzler_transform: matrix must be square");
  const auto p = a.rows();
  if (is_metzler(a, tol)) return CoordinateTransform<Scalar>{Matrix<Scalar>::Identity(p, p), Matrix<Scalar>::Identity(p, p)};

  const Eigen::EigenSolver<Matrix<Scalar>> eig(a);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const auto values = eig.eigenvalues();
  for (Eigen::Index i = 0; i < p; ++i)
    if (std::abs(values(i).imag()) > Scalar(1e-9) * (Scalar(1) + std::abs(values(i)))) return std::nullopt;

  const Matrix<Scalar> z = eig.eigenvectors().real();
  const Eigen::JacobiSVD<Matrix<Scalar>> svd(z);
  const auto& sv = svd.singularValues();
  if (sv(p - 1) <= Scalar(0) || sv(0) / sv(p - 1) > max_condition) return std::nullopt;
  const Matrix<Scalar> z_inv = z.partialPivLu().inverse();
  if (!is_metzler<Scalar>(z_inv * a * z, Scalar(1e-7) * (Scalar(1) + a.cwiseAbs().maxCoeff()))) return std::nullopt;
  return CoordinateTransform<Scalar>{z, z_inv};
}

/// A⁺ x̲ - A⁻ x̄ ≤ A x ≤ A⁺ x̄ - A⁻ x̲.
template <typename Scalar>
StateInterval<Scalar> interval_linear_map(const Matrix<Scalar>& m, const StateInterval<Scalar>& x) {
  require(m.cols() == x.size(), "interval_linear_map: dimension mismatch");
  const Matrix<Scalar> mp = positive_part(m);
  const Matrix<Scalar> mn = negative_part(m);
  return {mp * x.lower - mn * x.upper, mp * x.upper - mn * x.lower, x.time};
}

/// Enclosure of { M x : M̲ ≤ M ≤ M̄, x̲ ≤ x ≤ x̄ }.
template <typename Scalar>
StateInterval<Scalar> interval_linear_map(const IntervalMatrix<Scalar>& m, const StateInterval<Scalar>& x) {
  require(m.lower.cols() == x.size() && m.upper.cols() == x.size(), "interval_linear_map: dimension mismatch");
  const Matrix<Scalar> lp = positive_part(m.lower), ln = negative_part(m.lower);
  const Matrix<Scalar> up = positive_part(m.upper), un = negative_part(m.upper);
  const Vector<Scalar> xlp = positive_part(x.lower), xln = negative_part(x.lower);
  const Vector<Scalar> xup = positive_part(x.upper), xun = negative_part(x.upper);
  return {lp * xlp - up * xln - ln * xup + un * xun, up * xup - lp * xun - un * xlp + ln * xln, x.time};
}

template <typename Scalar>
IntervalDynamics<Scalar> make_interval_dynamics(const ConfidencePolytope<Scalar>& polytope,
                                                const StructuredModel<Scalar>& model) {
  auto [lo, hi] = polytope.entrywise_bounds();
  return {{std::move(lo), std::move(hi)}, model.B, model.D};
}

/// Expresses the polytope in working coordinates and sums the positive and
/// negative parts of the vertex offsets.
template <typename Scalar>
PolytopicDynamics<Scalar> make_polytopic_dynamics(const ConfidencePolytope<Scalar>& polytope,
                                                  const StructuredModel<Scalar>& model,
                                                  std::optional<CoordinateTransform<Scalar>> transform = std::nullopt) {
  const auto p = model.state_dim();
  const Matrix<Scalar> z = transform ? transform->forward : Matrix<Scalar>::Identity(p, p);
  const Matrix<Scalar> z_inv = transform ? transform->inverse : Matrix<Scalar>::Identity(p, p);
  PolytopicDynamics<Scalar> out;
  out.a_center = z_inv * polytope.a_center * z;
  out.delta_plus = Matrix<Scalar>::Zero(p, p);
  out.delta_minus = Matrix<Scalar>::Zero(p, p);
  for (const auto& delta : polytope.deltas) {
    const Matrix<Scalar> working = z_inv * delta * z;
    out.delta_plus += positive_part(working);
    out.delta_minus += negative_part(working);
  }
  out.B = z_inv * model.B;
  out.D = z_inv * model.D;
  const bool identity = !transform || transform->forward.isIdentity(Scalar(0));
  if (!identity) out.transform = std::move(transform);
  return out;
}

namespace detail {

template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> disturbance_bounds(const Matrix<Scalar>& d, const Vector<Scalar>& lo,
                                                             const Vector<Scalar>& hi) {
  const Matrix<Scalar> dp = positive_part(d);
  const Matrix<Scalar> dn = negative_part(d);
  return {dp * lo - dn * hi, dp * hi - dn * lo};
}

template <typename Scalar>
void check_ordering(const StateInterval<Scalar>& x, const char* who) {
  const Scalar scale = Scalar(1) + std::max(x.lower.cwiseAbs().maxCoeff(), x.upper.cwiseAbs().maxCoeff());
  if (!x.lower.allFinite() || !x.upper.allFinite())
    throw InternalError(std::string(who) + ": interval bounds became non-finite");
  if (!x.is_ordered(Scalar(1e-12) * scale))
    throw InternalError(std::string(who) + ": lower bound exceeds upper bound (integration step too large)");
}

/// Euler local error of ż = M z + c over h: (h²/2) ‖M‖ ‖ż‖ e^{‖M‖h}, in the ∞-norm.
template <typename Scalar>
Scalar euler_allowance(Scalar norm, Scalar h, const Vector<Scalar>& dl, const Vector<Scalar>& du) {
  const Scalar rate = std::max(dl.cwiseAbs().maxCoeff(), du.cwiseAbs().maxCoeff());
  return Scalar(0.5) * h * h * norm * rate * std::exp(norm * h);
}

template <typename Scalar>
void widen(StateInterval<Scalar>& x, Scalar e) {
  x.lower.array() -= e;
  x.upper.array() += e;
}

}  // namespace detail

/// Right-hand side of the simple predictor at (x̲, x̄). `bu` is B u already evaluated.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> simple_derivative(const StateInterval<Scalar>& x,
                                                            const IntervalDynamics<Scalar>& dyn,
                                                            const Vector<Scalar>& bu, const Vector<Scalar>& omega_lo,
                                                            const Vector<Scalar>& omega_hi) {
  const auto ax = interval_linear_map(dyn.a, x);
  const auto [dlo, dhi] = detail::disturbance_bounds(dyn.D, omega_lo, omega_hi);
  return {ax.lower + bu + dlo, ax.upper + bu + dhi};
}

/// Right-hand side of the enhanced predictor in working coordinates.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> enhanced_derivative(const StateInterval<Scalar>& x,
                                                              const PolytopicDynamics<Scalar>& dyn,
                                                              const Matrix<Scalar>& a_center,
                                                              const Vector<Scalar>& bu,
                                                              const Vector<Scalar>& omega_lo,
                                                              const Vector<Scalar>& omega_hi) {
  const auto [dlo, dhi] = detail::disturbance_bounds(dyn.D, omega_lo, omega_hi);
  Vector<Scalar> lower = a_center * x.lower - dyn.delta_plus * negative_part(x.lower) -
                         dyn.delta_minus * positive_part(x.upper) + bu + dlo;
  Vector<Scalar> upper = a_center * x.upper + dyn.delta_plus * positive_part(x.upper) +
                         dyn.delta_minus * negative_part(x.lower) + bu + dhi;
  return {std::move(lower), std::move(upper)};
}

template <typename Scalar>
StateInterval<Scalar> step_simple(const StateInterval<Scalar>& x, const IntervalDynamics<Scalar>& dyn,
                                  const Vector<Scalar>& u, const NoiseModel<Scalar>& noise,
                                  const PredictorConfig<Scalar>& cfg) {
  cfg.validate();
  require(x.size() == dyn.a.lower.rows() && u.size() == dyn.B.cols(), "step_simple: dimension mismatch");
  const Scalar h = cfg.dt / static_cast<Scalar>(cfg.substeps);
  const Vector<Scalar> bu = dyn.B * u;
  const Scalar norm = cfg.error_allowance
                          ? dyn.a.lower.cwiseAbs().cwiseMax(dyn.a.upper.cwiseAbs()).rowwise().sum().maxCoeff()
                          : Scalar(0);
  StateInterval<Scalar> cur = x;
  for (int s = 0; s < cfg.substeps; ++s) {
    const auto [dl, du] = simple_derivative(cur, dyn, bu, noise.omega_lower(cur.time), noise.omega_upper(cur.time));
    cur.lower += h * dl;
    cur.upper += h * du;
    if (cfg.error_allowance) detail::widen(cur, detail::euler_allowance(norm, h, dl, du));
    cur.time += h;
    detail::check_ordering(cur, "step_simple");
  }
  return cur;
}

/// One dt of the enhanced predictor, x in working coordinates.
template <typename Scalar>
StateInterval<Scalar> step_enhanced_working(const StateInterval<Scalar>& x, const PolytopicDynamics<Scalar>& dyn,
                                            const Matrix<Scalar>& a_center, const Vector<Scalar>& bu,
                                            const NoiseModel<Scalar>& noise, const PredictorConfig<Scalar>& cfg) {
  const Scalar h = cfg.dt / static_cast<Scalar>(cfg.substeps);
  const Scalar norm =
      cfg.error_allowance
          ? (a_center.cwiseAbs() + dyn.delta_plus + dyn.delta_minus).rowwise().sum().maxCoeff()
          : Scalar(0);
  StateInterval<Scalar> cur = x;
  for (int s = 0; s < cfg.substeps; ++s) {
    const auto [dl, du] =
        enhanced_derivative(cur, dyn, a_center, bu, noise.omega_lower(cur.time), noise.omega_upper(cur.time));
    cur.lower += h * dl;
    cur.upper += h * du;
    if (cfg.error_allowance) detail::widen(cur, detail::euler_allowance(norm, h, dl, du));
    cur.time += h;
    detail::check_ordering(cur, "step_enhanced");
  }
  return cur;
}

/// One dt of the enhanced predictor in original coordinates; with a
/// transform present, x is mapped through Z⁻¹, stepped, and mapped back.
template <typename Scalar>
StateInterval<Scalar> step_enhanced(const StateInterval<Scalar>& x, const PolytopicDynamics<Scalar>& dyn,
                                    const Vector<Scalar>& u, const NoiseModel<Scalar>& noise,
                                    const PredictorConfig<Scalar>& cfg) {
  cfg.validate();
  require(x.size() == dyn.a_center.rows() && u.size() == dyn.B.cols(), "step_enhanced: dimension mismatch");
  if (!dyn.transform && !is_metzler(dyn.a_center))
    throw ContractViolation("step_enhanced: A_N is not Metzler and no transform was supplied");
  const Vector<Scalar> bu = dyn.B * u;
  if (!dyn.transform) return step_enhanced_working(x, dyn, dyn.a_center, bu, noise, cfg);
  const auto working = interval_linear_map(dyn.transform->inverse, x);
  const auto next = step_enhanced_working(working, dyn, dyn.a_center, bu, noise, cfg);
  return interval_linear_map(dyn.transform->forward, next);
}

/// Interval predictor over a fixed confidence polytope. Its state lives in
/// working coordinates so that repeated steps never pay the cost of mapping
/// back and forth; `to_original` recovers the enclosure of x itself.
///
/// Feedback controllers are handled exactly: u = -K x + u_a turns the
/// dynamics into A(θ) - B K, which adds a known term to the polytope centre.
template <typename Scalar>
class IntervalPredictor {
 public:
  IntervalPredictor(const ConfidencePolytope<Scalar>& polytope, const StructuredModel<Scalar>& model,
                    NoiseModel<Scalar> noise, PredictorConfig<Scalar> cfg)
      : noise_(std::move(noise)), cfg_(cfg), state_dim_(model.state_dim()) {
    cfg_.validate();
    model.validate();
    if (cfg_.mode != PredictorMode::simple) {
      auto transform = metzler_transform<Scalar>(polytope.a_center);
      if (transform) {
        enhanced_ = make_polytopic_dynamics(polytope, model, std::move(transform));
        mode_ = PredictorMode::enhanced;
      } else if (cfg_.mode == PredictorMode::enhanced) {
        throw ContractViolation("IntervalPredictor: no Metzler coordinate change exists for A_N");
      }
    }
    if (mode_ == PredictorMode::simple) simple_ = make_interval_dynamics(polytope, model);
  }

  PredictorMode mode() const { return mode_; }
  const PredictorConfig<Scalar>& config() const { return cfg_; }
  const std::optional<PolytopicDynamics<Scalar>>& enhanced_dynamics() const { return enhanced_; }

  StateInterval<Scalar> initial(const Vector<Scalar>& x0, Scalar t0 = Scalar(0)) const {
    require(x0.size() == state_dim_, "IntervalPredictor: initial state has the wrong dimension");
    const auto x = StateInterval<Scalar>::degenerate(x0, t0);
    if (enhanced_ && enhanced_->transform) return interval_linear_map(enhanced_->transform->inverse, x);
    return x;
  }

  StateInterval<Scalar> to_original(const StateInterval<Scalar>& working) const {
    if (enhanced_ && enhanced_->transform) return interval_linear_map(enhanced_->transform->forward, working);
    return working;
  }

  StateInterval<Scalar> advance(const StateInterval<Scalar>& working, const AffineControl<Scalar>& control) const {
    if (mode_ == PredictorMode::enhanced) {
      const auto& dyn = *enhanced_;
      Matrix<Scalar> a_center = dyn.a_center;
      if (control.has_feedback()) {
        const Matrix<Scalar> z = dyn.transform ? dyn.transform->forward : Matrix<Scalar>::Identity(state_dim_, state_dim_);
        a_center -= dyn.B * control.gain * z;
        if (!is_metzler(a_center))
          throw ContractViolation("IntervalPredictor: closed-loop centre is not Metzler in working coordinates");
      }
      const Vector<Scalar> bu = dyn.B * control.offset;
      return step_enhanced_working(working, dyn, a_center, bu, noise_, cfg_);
    }
    IntervalDynamics<Scalar> dyn = *simple_;
    if (control.has_feedback()) {
      const Matrix<Scalar> bk = dyn.B * control.gain;
      dyn.a.lower -= bk;
      dyn.a.upper -= bk;
    }
    return step_simple(working, dyn, control.offset, noise_, cfg_);
  }

 private:
  NoiseModel<Scalar> noise_;
  PredictorConfig<Scalar> cfg_;
  Eigen::Index state_dim_;
  PredictorMode mode_ = PredictorMode::simple;
  std::optional<PolytopicDynamics<Scalar>> enhanced_;
  std::optional<IntervalDynamics<Scalar>> simple_;
};

/// Intervals at t_0 + dt, …, t_0 + H dt starting from the degenerate interval [x0, x0].
template <typename Scalar>
std::vector<StateInterval<Scalar>> predict_trajectory(const IntervalPredictor<Scalar>& predictor,
                                                      const Vector<Scalar>& x0,
                                                      const std::vector<AffineControl<Scalar>>& controls,
                                                      Scalar t0 = Scalar(0)) {
  require(!controls.empty(), "predict_trajectory: horizon must be at least 1");
  std::vector<StateInterval<Scalar>> out;
  out.reserve(controls.size());
  auto working = predictor.initial(x0, t0);
  for (const auto& control : controls) {
    working = predictor.advance(working, control);
    out.push_back(predictor.to_original(working));
  }
  return out;
}

using StateIntervald = StateInterval<double>;
using IntervalMatrixd = IntervalMatrix<double>;
using PolytopicDynamicsd = PolytopicDynamics<double>;
using IntervalDynamicsd = IntervalDynamics<double>;
using PredictorConfigd = PredictorConfig<double>;
using AffineControld = AffineControl<double>;
using IntervalPredictord = IntervalPredictor<double>;

}  // namespace rh
