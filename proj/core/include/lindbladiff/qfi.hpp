#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lindbladiff/eigen.hpp"
#include "lindbladiff/ivp.hpp"
#include "lindbladiff/linalg.hpp"
#include "lindbladiff/model.hpp"
#include "lindbladiff/sensitivity.hpp"
#include "lindbladiff/state.hpp"

namespace lindbladiff {

/// Hermitian sensing generator G (the parameter is imprinted by exp(-i theta G)).
class Generator {
 public:
  /// Throws InvalidArgument unless ||G - G^dagger||_F <= 1e-12.
  explicit Generator(Operator g);

  /// Collective Sz = 1/2 sum_i sigma_z^(i) on n qubits.
  static Generator collective_sz(std::size_t n);

  const Operator& op() const noexcept { return op_; }
  const CMatrix& dense() const noexcept { return dense_; }
  std::size_t dimension() const noexcept { return dense_.rows(); }

 private:
  Operator op_;
  CMatrix dense_;
};

enum class QfiConvention {
  /// sum_{j<i} (l_i - l_j)^2 / (l_i + l_j) |<psi_i|G|psi_j>|^2, equal to Var(G) on pure states.
  pairwise,
  /// Four times the pairwise sum.
  standard,
};

const char* to_string(QfiConvention c) noexcept;
QfiConvention convention_from_string(const std::string& name);

struct QfiOptions {
  QfiConvention convention = QfiConvention::pairwise;
  /// Pairs with l_i + l_j at or below this are left out.
  double skip_tolerance = 1e-12;
  /// Eigenvalues in (-clip_tolerance, 0) are set to zero; anything lower is an invalid state.
  double clip_tolerance = 1e-9;
  EigOptions eig;

  double multiplier() const noexcept { return convention == QfiConvention::standard ? 4.0 : 1.0; }
};

struct QfiReport {
  /// Already scaled by the convention multiplier.
  double value = 0.0;
  std::optional<std::vector<double>> gradient;
  std::size_t skipped_pairs = 0;
  std::size_t clusters = 0;
  std::size_t largest_cluster = 0;
  QfiConvention convention = QfiConvention::pairwise;

  std::optional<SolverStats> solver;
  std::optional<EigDiagnostics> eigen;
  std::optional<AdjointDiagnostics> adjoint;
};

QfiReport qfi(const EigDecomposition& decomp, const Generator& g, const QfiOptions& options = {});

/// Hermitian D with dF = Re Tr(D drho). Within-cluster and skipped pairs contribute nothing.
CMatrix qfi_rho_cotangent(const EigDecomposition& decomp, const Generator& g, const QfiOptions& options = {});

/// F(rho) as a terminal cost for adjoint_gradient. Its verifier probes unitary-orbit directions i[K, rho]
/// and, when rho is well inside the full-rank region, generic Hermitian directions as well.
CostCofunction qfi_cost(const Generator& g, const QfiOptions& options = {});

/// F(x) = qfi(eigh(integrate(model, x, rho0, span)), G). With `want_gradient`, grad F comes from one reverse
/// pass on the same solve. Numerical failures are rethrown as StageError tagged "integrate", "eigh", "qfi"
/// or "adjoint".
QfiReport qfi_of_params(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                        TimeSpan span, const Generator& g, const SolveConfig& config, bool want_gradient,
                        const QfiOptions& options = {});

}  // namespace lindbladiff
