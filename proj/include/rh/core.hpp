#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rh {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

// Error taxonomy shared by every module. Each maps to a distinct failure
// class so callers can tell a bad configuration from a numerical fault.
struct StructuralError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct CapacityError : std::length_error {
  using std::length_error::length_error;
};
struct InternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// z⁺ = max(z, 0), applied coefficient-wise.
template <typename Derived>
auto positive_part(const Eigen::MatrixBase<Derived>& z) {
  return z.cwiseMax(typename Derived::Scalar(0));
}

/// z⁻ = max(-z, 0), so that z = z⁺ - z⁻.
template <typename Derived>
auto negative_part(const Eigen::MatrixBase<Derived>& z) {
  return (-z).cwiseMax(typename Derived::Scalar(0));
}

inline void require(bool condition, const std::string& what) {
  if (!condition) throw StructuralError(what);
}

}  // namespace rh
