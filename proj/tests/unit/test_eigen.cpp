#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "lindbladiff/eigen.hpp"
#include "lindbladiff/errors.hpp"

using namespace lindbladiff;
using fixtures::Rng;

namespace {

CMatrix diag(std::initializer_list<double> values) {
  const std::vector<double> v(values);
  return CMatrix::diagonal(std::span<const double>(v));
}

// U diag(values) U^dagger
CMatrix conjugated(const CMatrix& u, std::initializer_list<double> values) {
  return matmul(u, matmul(diag(values), u.adjoint()));
}

// (rho - l I) dpsi + (drho - dl I) psi
double eq3_residual(const CMatrix& rho, const EigDecomposition& d, std::size_t i, const CMatrix& drho,
                    const SimpleEigDerivative& der) {
  const CMatrix psi = d.eigenvectors.column(i);
  CMatrix shifted = rho;
  for (std::size_t k = 0; k < rho.rows(); ++k) shifted(k, k) -= d.eigenvalues[i];
  CMatrix r = matmul(shifted, der.dpsi);
  r += matmul(drho, psi);
  r.add_scaled(-der.dlambda, psi);
  return frobenius_norm(r);
}

}  // namespace

TEST_CASE("eigh examples") {
  const auto mixed = eigh(CMatrix::identity(2) * Complex(0.5));
  CHECK(mixed.eigenvalues == std::vector<double>{0.5, 0.5});
  CHECK(mixed.clusters.size() == 1);
  CHECK(mixed.clusters.front().size() == 2);

  const auto d = eigh(diag({0.3, 0.7}));
  CHECK(d.eigenvalues[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(d.eigenvalues[1] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(d.eigenvectors == CMatrix::identity(2));

  const auto p = eigh(fixtures::plus_state());
  CHECK(std::abs(p.eigenvalues[0]) < 1e-15);
  CHECK(p.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(p.eigenvectors(0, 1) - M_SQRT1_2) < 1e-15);
  CHECK(std::abs(p.eigenvectors(1, 1) - M_SQRT1_2) < 1e-15);
}

TEST_CASE("eigh invariants, gauge and determinism") {
  Rng rng(40);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 7);
    const CMatrix rho = fixtures::random_hermitian(rng, d);
    const auto e = eigh(rho);
    const auto diag = eigen_diagnostics(rho, e);
    CHECK(diag.residual < 1e-10 * frobenius_norm(rho));
    CHECK(diag.orthogonality < 1e-10);
    for (std::size_t i = 1; i < d; ++i) CHECK(e.eigenvalues[i - 1] <= e.eigenvalues[i]);
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < d; ++i)
        if (std::abs(e.eigenvectors(i, j)) > std::abs(e.eigenvectors(best, j))) best = i;
      CHECK(e.eigenvectors(best, j).imag() == 0.0);
      CHECK(e.eigenvectors(best, j).real() > 0.0);
    }
    const auto again = eigh(rho);
    CHECK(again.eigenvectors == e.eigenvectors);
    CHECK(again.eigenvalues == e.eigenvalues);

    const auto ref = oracles::eigenvalues(rho);
    for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(ref[i] - e.eigenvalues[i]) < 1e-12);
  }
}

TEST_CASE("eigh input checks") {
  CHECK_THROWS_AS(eigh(CMatrix{{1.0, 1.0}, {0.0, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(eigh(CMatrix(2, 3)), DimensionError);
}

TEST_CASE("clusters") {
  Rng rng(41);
  const CMatrix u = fixtures::random_unitary(rng, 4);
  const auto e = eigh(conjugated(u, {0.5, 0.5, 0.1, 0.9}));
  CHECK(e.clusters.size() == 3);
  CHECK(e.clusters[1].size() == 2);
  CHECK(e.cluster_of[1] == e.cluster_of[2]);
  CHECK(e.is_singleton(0));
  CHECK_FALSE(e.is_singleton(1));
  const auto near = eigh(diag({0.5, 0.5 + 1e-10, 0.5 + 2e-10, 0.7}));
  CHECK(near.clusters.size() == 2);
  CHECK(near.clusters[0].size() == 3);
}

TEST_CASE("simple eigen-derivative examples") {
  SUBCASE("linear spectrum") {
    const CMatrix rho = diag({1.0, 2.0});
    const auto e = eigh(rho);
    const CMatrix drho = diag({1.0, 2.0});
    for (std::size_t i = 0; i < 2; ++i) {
      const auto der = eig_derivative_simple(e, i, drho);
      CHECK(der.dlambda == doctest::Approx(static_cast<double>(i + 1)));
      CHECK(frobenius_norm(der.dpsi) < 1e-14);
    }
  }
  SUBCASE("off-diagonal perturbation") {
    const auto e = eigh(diag({0.3, 0.7}));
    const CMatrix sx = ops::pauli_x().to_dense();
    const auto d0 = eig_derivative_simple(e, 0, sx);
    CHECK(std::abs(d0.dlambda) < 1e-15);
    CHECK(std::abs(d0.dpsi(0, 0)) < 1e-14);
    CHECK(std::abs(d0.dpsi(1, 0) - Complex(-2.5)) < 1e-12);
    const auto d1 = eig_derivative_simple(e, 1, sx);
    CHECK(std::abs(d1.dpsi(0, 0) - Complex(2.5)) < 1e-12);
    // differences of the gauge-fixed eigenvectors
    const double h = 1e-6;
    CMatrix plus = diag({0.3, 0.7});
    plus.add_scaled(h, sx);
    CMatrix minus = diag({0.3, 0.7});
    minus.add_scaled(-h, sx);
    CMatrix fd = eigh(plus).eigenvectors.column(0);
    fd -= eigh(minus).eigenvectors.column(0);
    fd *= 1.0 / (2.0 * h);
    CHECK(frobenius_distance(fd, d0.dpsi) < 1e-6);
  }
  SUBCASE("degenerate index is refused") {
    const auto e = eigh(CMatrix::identity(2) * Complex(0.5));
    CHECK_THROWS_AS(eig_derivative_simple(e, 0, diag({1.0, 0.0})), InvalidArgument);
  }
}

TEST_CASE("random nondegenerate matrices: residual, constraint and differences") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const CMatrix rho = fixtures::random_hermitian(rng, 4);
    const CMatrix drho = fixtures::random_hermitian(rng, 4);
    const auto e = eigh(rho);
    const auto fd = oracles::dense_eig_fd(rho, drho, 1e-5);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto der = eig_derivative_simple(e, i, drho);
      CHECK(eq3_residual(rho, e, i, drho, der) < 1e-8 * frobenius_norm(drho));
      CHECK(std::abs(hs_inner(e.eigenvectors.column(i), der.dpsi).real()) < 1e-10);
      CHECK(std::abs(der.dlambda - fd.per_eigenvalue[i]) < 1e-6);
      CHECK(der.route_discrepancy < 1e-8);
      CHECK_FALSE(der.conditioning_warning);

      const auto bordered = eig_derivative_bordered(rho, e, i, drho);
      CHECK(std::abs(bordered.dlambda - der.dlambda) < 1e-9);
      CHECK(frobenius_distance(bordered.dpsi, der.dpsi) < 1e-8);
      const auto full = eig_derivative_bordered(rho, e, i, drho, NormConstraint::full);
      CHECK(std::abs(hs_inner(e.eigenvectors.column(i), full.dpsi)) < 1e-10);
      CHECK(frobenius_distance(full.dpsi, der.dpsi) < 1e-8);
    }
  }
}

TEST_CASE("clustered derivative") {
  const auto e = eigh(CMatrix::identity(2) * Complex(0.5));
  const std::vector<std::size_t> both = {0, 1};
  CMatrix half_x = ops::pauli_x().to_dense();
  half_x *= 0.5;
  CHECK(std::abs(eig_derivative_clustered(e, both, half_x).mean_dlambda) < 1e-15);

  const double a = 0.3;
  const double b = -1.1;
  const auto c = eig_derivative_clustered(e, both, diag({a, b}));
  CHECK(c.mean_dlambda == doctest::Approx((a + b) / 2).epsilon(1e-14));
  const auto fd = oracles::dense_eig_fd(CMatrix::identity(2) * Complex(0.5), diag({a, b}), 1e-5);
  CHECK(std::abs(fd.cluster_means.front() - (a + b) / 2) < 1e-9);

  const std::vector<std::size_t> partial = {0};
  CHECK_THROWS_AS(eig_derivative_clustered(e, partial, diag({a, b})), InvalidArgument);
}

TEST_CASE("clustered derivative on random degenerate constructions") {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const CMatrix u = fixtures::random_unitary(rng, 4);
    const double x = rng.uniform(0.0, 0.3);
    const double y = rng.uniform(0.6, 0.9);
    const CMatrix rho = conjugated(u, {0.5, 0.5, x, y});
    const CMatrix drho = fixtures::random_hermitian(rng, 4);
    const auto e = eigh(rho);
    const auto fd = oracles::dense_eig_fd(rho, drho, 1e-5);
    REQUIRE(e.clusters.size() == fd.clusters.size());
    for (std::size_t c = 0; c < e.clusters.size(); ++c) {
      if (e.clusters[c].size() < 2) continue;
      const auto der = eig_derivative_clustered(e, e.clusters[c], drho);
      CHECK(std::abs(der.mean_dlambda - fd.cluster_means[c]) < 1e-6);
      // subspace tangent lives in the orthogonal complement
      CMatrix basis(4, e.clusters[c].size());
      for (std::size_t m = 0; m < e.clusters[c].size(); ++m) basis.set_column(m, e.eigenvectors.column(e.clusters[c][m]));
      CHECK(frobenius_norm(matmul(basis.adjoint(), der.subspace_tangent)) < 1e-12);
    }
    const auto all = eig_derivative(e, drho);
    CHECK(all.averaged[1]);
    CHECK(all.averaged[2]);
  }
}

TEST_CASE("eigenvalues coinciding on a neighborhood") {
  // rho(s) = U diag(0.4 + s, 0.4 + s, 0.2 - 2s) U^dagger: the double eigenvalue moves as one
  Rng rng(44);
  const CMatrix u = fixtures::random_unitary(rng, 3);
  const CMatrix rho = conjugated(u, {0.4, 0.4, 0.2});
  const CMatrix drho = conjugated(u, {1.0, 1.0, -2.0});
  const auto e = eigh(rho);
  const auto fd = oracles::dense_eig_fd(rho, drho, 1e-5);
  const std::size_t c = e.cluster_of[2];
  const auto der = eig_derivative_clustered(e, e.clusters[c], drho);
  for (std::size_t i : e.clusters[c]) CHECK(std::abs(der.mean_dlambda - fd.per_eigenvalue[i]) < 1e-6);
}

TEST_CASE("near-degeneracy stays bounded") {
  Rng rng(45);
  const CMatrix u = fixtures::random_unitary(rng, 4);
  const CMatrix drho = fixtures::random_hermitian(rng, 4);
  for (double gap : {1e-4, 1e-6, 1e-8, 1e-9, 1e-11, 1e-13, 0.0}) {
    const CMatrix rho = conjugated(u, {0.1, 0.4, 0.4 + gap, 0.8});
    const auto e = eigh(rho);
    const auto der = eig_derivative(e, drho);
    const double bound = frobenius_norm(drho) / e.tolerance;
    double worst = 0.0;
    for (const auto& z : der.dpsi.data()) worst = std::max(worst, std::abs(z));
    for (double l : der.dlambda) worst = std::max(worst, std::abs(l));
    CHECK(worst <= bound);
    if (gap < e.tolerance) CHECK(der.averaged[1]);
  }
}

TEST_CASE("eig_vjp") {
  SUBCASE("eigenvalue-only cotangent") {
    Rng rng(46);
    const CMatrix rho = fixtures::random_hermitian(rng, 3);
    const auto e = eigh(rho);
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> cl(3, 0.0);
      cl[i] = 1.0;
      const CMatrix psi = e.eigenvectors.column(i);
      CHECK(frobenius_distance(eig_vjp(e, cl, CMatrix(3, 3)), matmul(psi, psi.adjoint())) < 1e-12);
    }
  }
  SUBCASE("pairing with the forward derivative") {
    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
      const CMatrix rho = fixtures::random_hermitian(rng, 3);
      const CMatrix drho = fixtures::random_hermitian(rng, 3);
      const auto e = eigh(rho);
      const std::vector<double> cl = {rng.uniform(), rng.uniform(), rng.uniform()};
      // gauge-free cotangent: Psi B with real diagonal B
      CMatrix bmat = fixtures::random_matrix(rng, 3);
      for (std::size_t i = 0; i < 3; ++i) bmat(i, i) = bmat(i, i).real();
      const CMatrix cpsi = matmul(e.eigenvectors, bmat);
      const CMatrix d = eig_vjp(e, cl, cpsi);
      CHECK(hermiticity_residual(d) < 1e-12);
      const auto fwd = eig_derivative(e, drho);
      double expected = 0.0;
      for (std::size_t i = 0; i < 3; ++i) expected += cl[i] * fwd.dlambda[i];
      expected += hs_inner(cpsi, fwd.dpsi).real();
      CHECK(std::abs(hs_inner(d, drho).real() - expected) < 1e-9);
    }
    const auto e = eigh(fixtures::random_hermitian(rng, 3));
    const std::vector<double> zero(3, 0.0);
    CMatrix phase(3, 3);
    phase(0, 0) = kI;
    CHECK_THROWS_AS(eig_vjp(e, zero, matmul(e.eigenvectors, phase)), GaugeError);
  }
  SUBCASE("degenerate input with eigenvalue cotangents") {
    const auto e = eigh(CMatrix::identity(2) * Complex(0.5));
    const std::vector<double> cl = {0.2, 1.0};
    const CMatrix d = eig_vjp(e, cl, CMatrix(2, 2));
    CHECK(frobenius_distance(d, CMatrix::identity(2) * Complex(0.6)) < 1e-14);
    // FD of the cluster-mean chain: c = 0.6 * (l0 + l1) along drho = diag(a, b)
    const auto fd = oracles::dense_eig_fd(CMatrix::identity(2) * Complex(0.5), diag({0.3, 0.8}), 1e-5);
    CHECK(std::abs(hs_inner(d, diag({0.3, 0.8})).real() - 1.2 * fd.cluster_means.front()) < 1e-9);
  }
  SUBCASE("gauge-dependent cotangent is rejected") {
    const auto e = eigh(CMatrix::identity(2) * Complex(0.5));
    CMatrix cpsi(2, 2);
    cpsi(1, 0) = 1.0;
    const std::vector<double> cl = {0.0, 0.0};
    CHECK_THROWS_AS(eig_vjp(e, cl, cpsi), GaugeError);
  }
}
