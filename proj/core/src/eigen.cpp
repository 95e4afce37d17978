#include "lindbladiff/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lindbladiff/errors.hpp"

namespace lindbladiff {
namespace {

constexpr std::size_t kMaxSweeps = 100;

// Cyclic Jacobi: zeroes a(p,q) with the unitary V = [[c, s e^{i phi}], [-s e^{-i phi}, c]] acting on (p, q),
// where e^{i phi} = a(p,q) / |a(p,q)|. Works in place on a Hermitian matrix and accumulates V into q_acc.
void jacobi(CMatrix& a, CMatrix& q_acc) {
  const std::size_t n = a.rows();
  const double scale = frobenius_norm(a);
  if (scale == 0.0) return;
  const double negligible = 1e-18 * scale;

  for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const Complex apq = a(p, q);
        const double g = std::abs(apq);
        if (g <= negligible) continue;
        rotated = true;
        const Complex phase = apq / g;
        const double app = a(p, p).real();
        const double aqq = a(q, q).real();
        const double theta = (aqq - app) / (2.0 * g);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const Complex s_fwd = s * phase;             // s e^{i phi}
        const Complex s_bwd = s * std::conj(phase);  // s e^{-i phi}

        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const Complex akp = a(k, p);
          const Complex akq = a(k, q);
          const Complex new_kp = c * akp - s_bwd * akq;
          const Complex new_kq = s_fwd * akp + c * akq;
          a(k, p) = new_kp;
          a(k, q) = new_kq;
          a(p, k) = std::conj(new_kp);
          a(q, k) = std::conj(new_kq);
        }
        a(p, p) = app - t * g;
        a(q, q) = aqq + t * g;
        a(p, q) = 0.0;
        a(q, p) = 0.0;

        for (std::size_t k = 0; k < n; ++k) {
          const Complex qkp = q_acc(k, p);
          const Complex qkq = q_acc(k, q);
          q_acc(k, p) = c * qkp - s_bwd * qkq;
          q_acc(k, q) = s_fwd * qkp + c * qkq;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericalError("eigh: Jacobi iteration did not converge");
}

void fix_gauge(CMatrix& vectors) {
  for (std::size_t j = 0; j < vectors.cols(); ++j) {
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t i = 0; i < vectors.rows(); ++i) {
      const double mag = std::abs(vectors(i, j));
      if (mag > best_mag) {
        best_mag = mag;
        best = i;
      }
    }
    if (best_mag <= 0.0) continue;
    const Complex rotate = std::conj(vectors(best, j)) / best_mag;
    for (std::size_t i = 0; i < vectors.rows(); ++i) vectors(i, j) *= rotate;
    vectors(best, j) = Complex{vectors(best, j).real(), 0.0};
  }
}

void assign_clusters(EigDecomposition& d, double scale) {
  double spectral = 0.0;
  for (double l : d.eigenvalues) spectral = std::max(spectral, std::abs(l));
  d.tolerance = scale * std::max(1.0, spectral);
  d.clusters.clear();
  d.cluster_of.assign(d.eigenvalues.size(), 0);
  for (std::size_t i = 0; i < d.eigenvalues.size(); ++i) {
    if (i == 0 || d.eigenvalues[i] - d.eigenvalues[i - 1] >= d.tolerance) d.clusters.emplace_back();
    d.clusters.back().push_back(i);
    d.cluster_of[i] = d.clusters.size() - 1;
  }
}

CMatrix reconstruct(const EigDecomposition& d) {
  const CMatrix& psi = d.eigenvectors;
  CMatrix scaled = psi;
  for (std::size_t i = 0; i < scaled.rows(); ++i)
    for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(i, j) *= d.eigenvalues[j];
  return matmul(scaled, psi.adjoint());
}

void check_drho(const EigDecomposition& d, const CMatrix& drho) {
  if (drho.rows() != d.dimension() || drho.cols() != d.dimension()) {
    throw DimensionError("eigen derivative: perturbation " + drho.shape_string() + " for dimension " +
                         std::to_string(d.dimension()));
  }
}

// Per-index cluster mean eigenvalue.
std::vector<double> cluster_means(const EigDecomposition& d) {
  std::vector<double> out(d.dimension());
  for (std::size_t c = 0; c < d.clusters.size(); ++c) {
    const double mean = d.cluster_mean(c);
    for (std::size_t i : d.clusters[c]) out[i] = mean;
  }
  return out;
}

}  // namespace

double EigDecomposition::cluster_mean(std::size_t cluster) const {
  const auto& members = clusters.at(cluster);
  double sum = 0.0;
  for (std::size_t i : members) sum += eigenvalues[i];
  return sum / static_cast<double>(members.size());
}

EigDecomposition eigh(const CMatrix& rho, const EigOptions& options) {
  if (!rho.is_square()) throw DimensionError("eigh: non-square matrix " + rho.shape_string());
  if (!rho.is_finite()) throw InvalidArgument("eigh: non-finite entry");
  const double herm = hermiticity_residual(rho);
  if (herm > options.hermiticity_tolerance * std::max(1.0, frobenius_norm(rho))) {
    throw InvalidArgument("eigh: matrix is not Hermitian (residual " + std::to_string(herm) + ")");
  }
  const std::size_t n = rho.rows();
  CMatrix a = hermitian_part(rho);
  CMatrix q = CMatrix::identity(n);
  jacobi(a, q);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x).real() < a(y, y).real(); });

  EigDecomposition d;
  d.eigenvalues.resize(n);
  d.eigenvectors = CMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    d.eigenvalues[j] = a(order[j], order[j]).real();
    for (std::size_t i = 0; i < n; ++i) d.eigenvectors(i, j) = q(i, order[j]);
  }
  fix_gauge(d.eigenvectors);
  assign_clusters(d, options.degeneracy_scale);
  return d;
}

EigDecomposition make_decomposition(std::vector<double> eigenvalues, CMatrix eigenvectors,
                                    const EigOptions& options) {
  if (eigenvectors.rows() != eigenvalues.size() || eigenvectors.cols() != eigenvalues.size()) {
    throw DimensionError("make_decomposition: eigenvector matrix " + eigenvectors.shape_string() + " for " +
                         std::to_string(eigenvalues.size()) + " eigenvalues");
  }
  if (!std::is_sorted(eigenvalues.begin(), eigenvalues.end())) {
    throw InvalidArgument("make_decomposition: eigenvalues must ascend");
  }
  EigDecomposition d;
  d.eigenvalues = std::move(eigenvalues);
  d.eigenvectors = std::move(eigenvectors);
  assign_clusters(d, options.degeneracy_scale);
  return d;
}

SimpleEigDerivative eig_derivative_bordered(const CMatrix& rho, const EigDecomposition& decomp, std::size_t index,
                                            const CMatrix& drho, NormConstraint constraint) {
  check_drho(decomp, drho);
  if (index >= decomp.dimension()) throw InvalidArgument("eig_derivative: index out of range");
  const std::size_t n = decomp.dimension();
  const CMatrix psi = decomp.eigenvectors.column(index);
  const double lambda = decomp.eigenvalues[index];

  CMatrix system(n + 1, n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) system(i, j) = rho(i, j);
    system(i, i) -= lambda;
    system(i, n) = -psi(i, 0);
    system(n, i) = std::conj(psi(i, 0));
  }
  const CMatrix drho_psi = matmul(drho, psi);
  CMatrix rhs(n + 1, 1);
  for (std::size_t i = 0; i < n; ++i) rhs(i, 0) = -drho_psi(i, 0);
  const CMatrix sol = solve(std::move(system), std::move(rhs));

  SimpleEigDerivative out;
  out.dlambda = sol(n, 0).real();
  out.dpsi = CMatrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) out.dpsi(i, 0) = sol(i, 0);
  if (constraint == NormConstraint::real_part) {
    // Remove any residual Im<psi, dpsi> so the returned member is the minimum-norm one.
    const double im = hs_inner(psi, out.dpsi).imag();
    out.dpsi.add_scaled(Complex{0.0, -im}, psi);
  }
  return out;
}

SimpleEigDerivative eig_derivative_simple(const EigDecomposition& decomp, std::size_t index, const CMatrix& drho,
                                          NormConstraint constraint) {
  check_drho(decomp, drho);
  if (index >= decomp.dimension()) throw InvalidArgument("eig_derivative_simple: index out of range");
  if (!decomp.is_singleton(index)) {
    throw InvalidArgument("eig_derivative_simple: eigenvalue " + std::to_string(index) +
                          " is degenerate; use eig_derivative_clustered");
  }
  const std::size_t n = decomp.dimension();
  const CMatrix& vecs = decomp.eigenvectors;
  const CMatrix projected = matmul(vecs.adjoint(), matmul(drho, vecs.column(index)));  // Psi^dagger drho psi_i

  SimpleEigDerivative out;
  out.dlambda = projected(index, 0).real();
  out.dpsi = CMatrix(n, 1);
  const double li = decomp.eigenvalues[index];
  for (std::size_t j = 0; j < n; ++j) {
    if (j == index) continue;
    const Complex coeff = projected(j, 0) / (li - decomp.eigenvalues[j]);
    for (std::size_t r = 0; r < n; ++r) out.dpsi(r, 0) += coeff * vecs(r, j);
  }

  const SimpleEigDerivative bordered = eig_derivative_bordered(reconstruct(decomp), decomp, index, drho, constraint);
  const double scale = std::max(1.0, frobenius_norm(drho));
  out.route_discrepancy =
      std::max(std::abs(out.dlambda - bordered.dlambda), frobenius_distance(out.dpsi, bordered.dpsi)) / scale;
  out.conditioning_warning = out.route_discrepancy > 1e-8;
  if (constraint == NormConstraint::full) out.dpsi = bordered.dpsi;
  return out;
}

ClusterEigDerivative eig_derivative_clustered(const EigDecomposition& decomp, std::span<const std::size_t> cluster,
                                              const CMatrix& drho) {
  check_drho(decomp, drho);
  const std::size_t n = decomp.dimension();
  const std::size_t m = cluster.size();
  if (m < 2) throw InvalidArgument("eig_derivative_clustered: cluster needs at least two indices");
  std::vector<bool> inside(n, false);
  for (std::size_t i : cluster) {
    if (i >= n) throw InvalidArgument("eig_derivative_clustered: index out of range");
    inside[i] = true;
  }
  for (std::size_t i : cluster) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!inside[j] && std::abs(decomp.eigenvalues[i] - decomp.eigenvalues[j]) < decomp.tolerance) {
        throw InvalidArgument("eig_derivative_clustered: cluster is not maximal (eigenvalue " + std::to_string(j) +
                              " lies within tolerance)");
      }
    }
  }

  const CMatrix& vecs = decomp.eigenvectors;
  CMatrix basis(n, m);
  double mean = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    basis.set_column(k, vecs.column(cluster[k]));
    mean += decomp.eigenvalues[cluster[k]];
  }
  mean /= static_cast<double>(m);

  const CMatrix projected = matmul(vecs.adjoint(), matmul(drho, basis));  // n x m
  ClusterEigDerivative out;
  for (std::size_t k = 0; k < m; ++k) out.mean_dlambda += projected(cluster[k], k).real();
  out.mean_dlambda /= static_cast<double>(m);

  out.subspace_tangent = CMatrix(n, m);
  for (std::size_t j = 0; j < n; ++j) {
    if (inside[j]) continue;
    const double denom = mean - decomp.eigenvalues[j];
    for (std::size_t k = 0; k < m; ++k) {
      const Complex coeff = projected(j, k) / denom;
      for (std::size_t r = 0; r < n; ++r) out.subspace_tangent(r, k) += coeff * vecs(r, j);
    }
  }
  return out;
}

EigDerivative eig_derivative(const EigDecomposition& decomp, const CMatrix& drho) {
  check_drho(decomp, drho);
  const std::size_t n = decomp.dimension();
  const CMatrix& vecs = decomp.eigenvectors;
  const CMatrix projected = matmul(vecs.adjoint(), matmul(drho, vecs));
  const std::vector<double> means = cluster_means(decomp);

  EigDerivative out;
  out.dlambda.assign(n, 0.0);
  out.averaged.assign(n, false);
  for (const auto& members : decomp.clusters) {
    double sum = 0.0;
    for (std::size_t i : members) sum += projected(i, i).real();
    for (std::size_t i : members) {
      out.dlambda[i] = sum / static_cast<double>(members.size());
      out.averaged[i] = members.size() > 1;
    }
  }
  // dPsi = Psi C with C_ji = M_ji / (mean_i - mean_j) across clusters, zero within.
  CMatrix coeff(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i)
      if (decomp.cluster_of[i] != decomp.cluster_of[j]) coeff(j, i) = projected(j, i) / (means[i] - means[j]);
  out.dpsi = matmul(vecs, coeff);
  return out;
}

CMatrix eig_vjp(const EigDecomposition& decomp, std::span<const double> c_lambda, const CMatrix& c_psi) {
  const std::size_t n = decomp.dimension();
  if (c_lambda.size() != n) throw DimensionError("eig_vjp: eigenvalue cotangent length mismatch");
  if (c_psi.rows() != n || c_psi.cols() != n) {
    throw DimensionError("eig_vjp: eigenvector cotangent " + c_psi.shape_string() + " for dimension " +
                         std::to_string(n));
  }
  const CMatrix& vecs = decomp.eigenvectors;
  const CMatrix b = matmul(vecs.adjoint(), c_psi);
  const double gauge_tol = 1e-8 * std::max(1.0, frobenius_norm(c_psi));
  for (const auto& members : decomp.clusters) {
    double sum = 0.0;
    for (std::size_t i : members)
      for (std::size_t k : members) sum += std::norm(b(i, k) - std::conj(b(k, i)));
    const double gauge = 0.5 * std::sqrt(sum);
    if (gauge > gauge_tol) {
      throw GaugeError("eig_vjp: eigenvector cotangent depends on the eigenvector gauge (component " +
                       std::to_string(gauge) + ")");
    }
  }

  const std::vector<double> means = cluster_means(decomp);
  CMatrix x(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (decomp.cluster_of[i] != decomp.cluster_of[j]) x(i, j) = b(i, j) / (means[j] - means[i]);
  CMatrix sym = hermitian_part(x);
  for (const auto& members : decomp.clusters) {
    double sum = 0.0;
    for (std::size_t i : members) sum += c_lambda[i];
    const double mean = sum / static_cast<double>(members.size());
    for (std::size_t i : members) sym(i, i) += mean;
  }
  return hermitian_part(matmul(vecs, matmul(sym, vecs.adjoint())));
}

EigDiagnostics eigen_diagnostics(const CMatrix& rho, const EigDecomposition& decomp) {
  EigDiagnostics out;
  out.cluster_count = decomp.clusters.size();
  for (const auto& c : decomp.clusters) out.largest_cluster = std::max(out.largest_cluster, c.size());
  out.min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t c = 1; c < decomp.clusters.size(); ++c) {
    const double gap = decomp.eigenvalues[decomp.clusters[c].front()] - decomp.eigenvalues[decomp.clusters[c - 1].back()];
    out.min_gap = std::min(out.min_gap, gap);
  }
  const CMatrix& vecs = decomp.eigenvectors;
  CMatrix scaled = vecs;
  for (std::size_t i = 0; i < scaled.rows(); ++i)
    for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(i, j) *= decomp.eigenvalues[j];
  out.residual = frobenius_distance(matmul(rho, vecs), scaled);
  out.orthogonality = frobenius_distance(matmul(vecs.adjoint(), vecs), CMatrix::identity(vecs.cols()));
  return out;
}

}  // namespace lindbladiff
