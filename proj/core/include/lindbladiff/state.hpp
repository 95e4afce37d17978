#pragma once

#include <cstddef>
#include <span>

#include "lindbladiff/linalg.hpp"

namespace lindbladiff {

/// Hermitian, unit-trace, positive-semidefinite matrix. Validated on construction.
class DensityOperator {
 public:
  static constexpr double kDefaultTolerance = 1e-9;

  /// Throws InvalidState if any invariant fails at `tolerance`:
  /// ||rho - rho^dagger||_F <= tol * ||rho||_F, |Tr rho - 1| <= tol, min eigenvalue >= -tol.
  explicit DensityOperator(CMatrix matrix, double tolerance = kDefaultTolerance);

  /// |psi><psi| / <psi|psi>.
  static DensityOperator pure(std::span<const Complex> psi);
  static DensityOperator maximally_mixed(std::size_t dimension);
  /// |0...0><0...0| on n qubits.
  static DensityOperator all_zero(std::size_t qubits);

  const CMatrix& matrix() const noexcept { return matrix_; }
  std::size_t dimension() const noexcept { return matrix_.rows(); }
  /// log2(dimension) when the dimension is a power of two, otherwise 0.
  std::size_t qubits() const noexcept;
  double purity() const;
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  CMatrix matrix_;
  double min_eigenvalue_ = 0.0;
};

}  // namespace lindbladiff
