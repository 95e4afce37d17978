#pragma once

// Reference implementations for tests. They use Eigen for every matrix kernel so that nothing is
// shared with the library beyond the CMatrix container used at the interface.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lindbladiff/linalg.hpp"

namespace oracles {

using lindbladiff::CMatrix;

/// exp(-iHT) rho0 exp(iHT) by Taylor scaling and squaring.
CMatrix expm_propagate(const CMatrix& h, const CMatrix& rho0, double t);

/// exp(-iHT) on its own.
CMatrix expm_unitary(const CMatrix& h, double t);

struct Channel {
  double rate;
  CMatrix op;
};

/// Classical fixed-step RK4 on the Lindblad equation with a time-independent Hamiltonian.
CMatrix rk4_propagate(const CMatrix& h, const std::vector<Channel>& channels, const CMatrix& rho0, double t,
                      double dt);

/// Same with H(t) supplied per evaluation.
CMatrix rk4_propagate(const std::function<CMatrix(double)>& h, const std::vector<Channel>& channels,
                      const CMatrix& rho0, double t0, double t1, double dt);

/// (F(x + h e_k) - F(x - h e_k)) / 2h for each k. Throws std::runtime_error on a non-finite F.
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                                double h);

struct EigFd {
  std::vector<double> per_eigenvalue;
  /// One entry per cluster of rho's spectrum, in ascending order.
  std::vector<double> cluster_means;
  std::vector<std::vector<std::size_t>> clusters;
  /// The clustering of rho +/- h drho differs from that of rho.
  bool structure_changed = false;
};

/// Central differences of the sorted eigenvalues of rho + s drho, h in [1e-7, 1e-4].
EigFd dense_eig_fd(const CMatrix& rho, const CMatrix& drho, double h, double cluster_tolerance = 1e-8);

/// Sorted eigenvalues via Eigen.
std::vector<double> eigenvalues(const CMatrix& rho);

}  // namespace oracles
