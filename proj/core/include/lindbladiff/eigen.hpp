#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lindbladiff/linalg.hpp"

namespace lindbladiff {

struct EigOptions {
  /// Eigenvalues closer than scale * max(1, ||rho||_2) are clustered (transitively).
  double degeneracy_scale = 1e-8;
  /// Relative Hermiticity tolerance on the input, ||rho - rho^dagger||_F <= tol * max(1, ||rho||_F).
  double hermiticity_tolerance = 1e-9;
};

/// Spectral decomposition of a Hermitian matrix.
///
/// Eigenvalues ascend; eigenvector columns are gauge fixed so that the largest-magnitude entry of each
/// column (lowest row on ties) is real and positive. `clusters` partitions the indices into maximal runs
/// of adjacent eigenvalues closer than `tolerance`.
struct EigDecomposition {
  std::vector<double> eigenvalues;
  CMatrix eigenvectors;
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::size_t> cluster_of;
  double tolerance = 0.0;

  std::size_t dimension() const noexcept { return eigenvalues.size(); }
  bool is_singleton(std::size_t i) const { return clusters[cluster_of[i]].size() == 1; }
  double cluster_mean(std::size_t cluster) const;
};

/// Cyclic complex Jacobi on (rho + rho^dagger)/2. Deterministic: identical input gives bit-identical output.
EigDecomposition eigh(const CMatrix& rho, const EigOptions& options = {});

/// Builds a decomposition (clusters included) from given eigenpairs; used to exercise gauge freedom.
EigDecomposition make_decomposition(std::vector<double> eigenvalues, CMatrix eigenvectors,
                                    const EigOptions& options = {});

/// Constraint paired with the eigenvector equation in the bordered system.
enum class NormConstraint {
  /// Re<psi, dpsi> = 0, minimum-norm member (Im<psi, dpsi> also zero).
  real_part,
  /// <psi, dpsi> = 0 exactly as the complex bordered row states.
  full,
};

struct SimpleEigDerivative {
  double dlambda = 0.0;
  CMatrix dpsi;  // d x 1
  /// Rayleigh-quotient vs bordered-system discrepancy; above 1e-8 sets `conditioning_warning`.
  double route_discrepancy = 0.0;
  bool conditioning_warning = false;
};

/// First-order derivative of a non-degenerate eigenpair along `drho`.
///
/// dlambda_i = <psi_i, drho psi_i> and dpsi_i = sum_{j != i} psi_j <psi_j, drho psi_i> / (lambda_i - lambda_j);
/// independently solves the bordered system [[rho - lambda I, -psi], [psi^dagger, 0]] [dpsi; dlambda] =
/// [-drho psi; 0] and cross-checks. Throws InvalidArgument when `index` belongs to a degenerate cluster.
SimpleEigDerivative eig_derivative_simple(const EigDecomposition& decomp, std::size_t index, const CMatrix& drho,
                                          NormConstraint constraint = NormConstraint::real_part);

/// Bordered-system route on its own (needs the matrix itself).
SimpleEigDerivative eig_derivative_bordered(const CMatrix& rho, const EigDecomposition& decomp, std::size_t index,
                                            const CMatrix& drho,
                                            NormConstraint constraint = NormConstraint::real_part);

struct ClusterEigDerivative {
  double mean_dlambda = 0.0;
  /// d x m tangent of the cluster basis, projected onto the orthogonal complement.
  CMatrix subspace_tangent;
};

/// Derivative of the mean eigenvalue of a degenerate cluster and of its invariant subspace.
/// The within-cluster rotation component is zero. Throws InvalidArgument if the set is not maximal.
ClusterEigDerivative eig_derivative_clustered(const EigDecomposition& decomp, std::span<const std::size_t> cluster,
                                              const CMatrix& drho);

/// Derivatives for every index: singleton clusters use the simple path, others the cluster path
/// (each member reports the cluster mean and `averaged[i]` is set).
struct EigDerivative {
  std::vector<double> dlambda;
  CMatrix dpsi;
  std::vector<bool> averaged;
};

EigDerivative eig_derivative(const EigDecomposition& decomp, const CMatrix& drho);

/// Reverse mode: cotangent on rho from cotangents on eigenvalues and eigenvectors.
///
/// Pairing convention: dc = sum_i c_lambda[i] dlambda_i + Re Tr(c_psi^dagger dPsi), and the result D is the
/// Hermitian matrix with dc = Re Tr(D drho). Eigenvalue cotangents are averaged over each cluster. Throws
/// GaugeError if c_psi has a within-cluster gauge component above 1e-8 * max(1, ||c_psi||_F).
CMatrix eig_vjp(const EigDecomposition& decomp, std::span<const double> c_lambda, const CMatrix& c_psi);

struct EigDiagnostics {
  std::size_t cluster_count = 0;
  std::size_t largest_cluster = 0;
  /// Smallest gap between adjacent clusters (infinity for a single cluster).
  double min_gap = 0.0;
  /// ||rho Psi - Psi diag(lambda)||_F
  double residual = 0.0;
  /// ||Psi^dagger Psi - I||_F
  double orthogonality = 0.0;
};

EigDiagnostics eigen_diagnostics(const CMatrix& rho, const EigDecomposition& decomp);

}  // namespace lindbladiff
