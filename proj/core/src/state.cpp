#include "lindbladiff/state.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "lindbladiff/eigen.hpp"
#include "lindbladiff/errors.hpp"

namespace lindbladiff {

DensityOperator::DensityOperator(CMatrix matrix, double tolerance) : matrix_(std::move(matrix)) {
  if (!matrix_.is_square() || matrix_.rows() == 0) {
    throw InvalidState("density operator must be a non-empty square matrix, got " + matrix_.shape_string());
  }
  if (!matrix_.is_finite()) throw InvalidState("density operator has non-finite entries");
  const double herm = hermiticity_residual(matrix_);
  if (herm > tolerance * frobenius_norm(matrix_)) {
    throw InvalidState("density operator is not Hermitian (residual " + std::to_string(herm) + ")");
  }
  const double tr = trace(matrix_).real();
  if (std::abs(tr - 1.0) > tolerance) throw InvalidState("density operator trace is " + std::to_string(tr));
  EigOptions options;
  options.hermiticity_tolerance = std::max(options.hermiticity_tolerance, tolerance);
  const auto decomp = eigh(matrix_, options);
  min_eigenvalue_ = decomp.eigenvalues.front();
  if (min_eigenvalue_ < -tolerance) {
    throw InvalidState("density operator is not positive semidefinite (min eigenvalue " +
                       std::to_string(min_eigenvalue_) + ")");
  }
}

DensityOperator DensityOperator::pure(std::span<const Complex> psi) {
  double norm2 = 0.0;
  for (const auto& z : psi) norm2 += std::norm(z);
  if (norm2 == 0.0) throw InvalidState("pure state vector is zero");
  CMatrix m(psi.size(), psi.size());
  for (std::size_t i = 0; i < psi.size(); ++i)
    for (std::size_t j = 0; j < psi.size(); ++j) m(i, j) = psi[i] * std::conj(psi[j]) / norm2;
  return DensityOperator(std::move(m));
}

DensityOperator DensityOperator::maximally_mixed(std::size_t dimension) {
  CMatrix m = CMatrix::identity(dimension);
  m *= 1.0 / static_cast<double>(dimension);
  return DensityOperator(std::move(m));
}

DensityOperator DensityOperator::all_zero(std::size_t qubits) {
  if (qubits == 0 || qubits > 20) throw InvalidArgument("all_zero: qubit count out of range");
  CMatrix m(std::size_t{1} << qubits, std::size_t{1} << qubits);
  m(0, 0) = 1.0;
  return DensityOperator(std::move(m));
}

std::size_t DensityOperator::qubits() const noexcept {
  const std::size_t d = dimension();
  return std::has_single_bit(d) ? static_cast<std::size_t>(std::countr_zero(d)) : 0;
}

double DensityOperator::purity() const { return hs_inner(matrix_, matrix_).real(); }

}  // namespace lindbladiff
