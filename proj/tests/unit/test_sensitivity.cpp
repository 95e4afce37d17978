#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "lindbladiff/errors.hpp"
#include "lindbladiff/instrumentation.hpp"
#include "lindbladiff/optimizer.hpp"
#include "lindbladiff/sensitivity.hpp"

using namespace lindbladiff;
using fixtures::Rng;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

std::vector<double> fd_of_cost(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                               TimeSpan span, const SolveConfig& cfg, const CostCofunction& cost, double h = 1e-6) {
  return oracles::fd_gradient(
      [&](std::span<const double> p) { return cost.value(integrate(model, p, rho0, span, cfg).final_state.matrix()); },
      x, h);
}

}  // namespace

TEST_CASE("realify layout and round trip") {
  const RealifiedState eye = realify(CMatrix::identity(2));
  CHECK(eye == RealifiedState{1, 0, 0, 1, 0, 0, 0, 0});
  CMatrix isx = ops::pauli_x().to_dense();
  isx *= kI;
  CHECK(realify(isx) == RealifiedState{0, 0, 0, 0, 0, 1, 1, 0});

  Rng rng(30);
  const CMatrix m = fixtures::random_matrix(rng, 4);
  CHECK(complexify(realify(m), 4) == m);
  CHECK_THROWS_AS(complexify(RealifiedState(7), 2), DimensionError);
}

TEST_CASE("cost cofunctions pass the built-in verifier") {
  Rng rng(31);
  const CMatrix rho = fixtures::random_density(rng, 4);
  CHECK(verify_cost_gradient(element_real_part(0, 1), rho).passed);
  CHECK(verify_cost_gradient(expectation_cost(Operator(fixtures::random_matrix(rng, 4))), rho).passed);
  CHECK(verify_cost_gradient(cotangent_cost(fixtures::random_matrix(rng, 4)), rho).passed);

  CostCofunction wrong = element_real_part(0, 1);
  wrong.gradient = [](const CMatrix& r) {
    CMatrix c(r.rows(), r.cols());
    c(1, 0) = 1.0;
    return realify(c);
  };
  CHECK_FALSE(verify_cost_gradient(wrong, rho).passed);
  CHECK_THROWS_AS(adjoint_gradient(fixtures::zero_model(4), std::vector<double>{0.0}, DensityOperator(rho), {0.0, 1.0},
                                   {}, wrong),
                  InvalidArgument);
}

TEST_CASE("adjoint Liouvillian") {
  const std::vector<double> x = {0.8};
  Rng rng(32);
  const CMatrix lambda = fixtures::random_matrix(rng, 2);
  // no channels: i[H, lambda] is the negated coherent part of L
  CMatrix coherent = lindblad_rhs(0.0, lambda, preset_phase(), x);
  coherent *= -1.0;
  CHECK(frobenius_distance(adjoint_liouvillian_apply(preset_phase(), x, 0.0, lambda), coherent) < 1e-15);

  const LindbladModel decay(HamiltonianSchedule::constant(Operator(CSparse(2, 2, {}))),
                            {JumpChannel{1.0, Operator(ops::sigma_minus())}});
  CHECK(frobenius_norm(adjoint_liouvillian_apply(decay, {}, 0.0, CMatrix::identity(2))) < 1e-15);

  for (int trial = 0; trial < 10; ++trial) {
    const auto m = fixtures::random_model(rng, 4, 2, 2, trial % 2 == 1);
    const std::vector<double> p = {rng.uniform(), rng.uniform()};
    const CMatrix l = fixtures::random_matrix(rng, 4);
    const CMatrix rho = fixtures::random_matrix(rng, 4);
    const Complex lhs = hs_inner(l, lindblad_rhs(0.0, rho, m.model, p));
    const Complex rhs = hs_inner(adjoint_liouvillian_apply(m.model, p, 0.0, l), rho);
    CHECK(std::abs(lhs - rhs) < 1e-12 * std::max(1.0, std::abs(lhs)));
  }
  CHECK_THROWS_AS(adjoint_liouvillian_apply(decay, {}, 0.0, CMatrix::identity(3)), DimensionError);
}

TEST_CASE("forward sensitivity") {
  const DensityOperator plus(fixtures::plus_state());
  SUBCASE("x-independent model has zero tangent") {
    const std::vector<double> x = {0.3};
    const auto fs = forward_sensitivity(fixtures::zero_model(2), x, plus, {0.0, 1.0}, {}, 0);
    CHECK(frobenius_norm(fs.tangent) == 0.0);
  }
  SUBCASE("phase model closed form") {
    const std::vector<double> x = {1.0};
    const auto fs = forward_sensitivity(preset_phase(), x, plus, {0.0, 1.0}, {}, 0);
    const Complex expected = Complex(0.0, -0.5) * std::exp(Complex(0.0, -1.0));
    CHECK(std::abs(fs.tangent(0, 1) - expected) < 1e-8);
    CHECK(fs.tangent(0, 1).real() == doctest::Approx(-0.4207).epsilon(1e-3));
    CHECK(fs.tangent(0, 1).imag() == doctest::Approx(-0.2702).epsilon(1e-3));
    // same steps as integrate
    CHECK(fs.state == integrate(preset_phase(), x, plus, {0.0, 1.0}).final_state.matrix());
  }
  SUBCASE("random two-qubit model against differences") {
    Rng rng(33);
    const auto m = fixtures::random_model(rng, 4, 2, 2);
    const std::vector<double> x = {0.6, -0.2};
    const DensityOperator rho0(fixtures::random_density(rng, 4));
    SolveConfig cfg;
    cfg.rtol = 1e-11;
    cfg.atol = 1e-13;
    for (std::size_t k = 0; k < 2; ++k) {
      const auto fs = forward_sensitivity(m.model, x, rho0, {0.0, 1.0}, cfg, k);
      std::vector<double> xp = x;
      std::vector<double> xm = x;
      xp[k] += 1e-6;
      xm[k] -= 1e-6;
      CMatrix fd = integrate(m.model, xp, rho0, {0.0, 1.0}, cfg).final_state.matrix();
      fd -= integrate(m.model, xm, rho0, {0.0, 1.0}, cfg).final_state.matrix();
      fd *= 1.0 / 2e-6;
      CHECK(frobenius_distance(fs.tangent, fd) < 1e-5 * frobenius_norm(fd));
    }
  }
}

TEST_CASE("adjoint gradient") {
  const DensityOperator plus(fixtures::plus_state());
  SUBCASE("zero dynamics") {
    Rng rng(34);
    const std::vector<double> x = {0.0};
    const auto g = adjoint_gradient(fixtures::zero_model(2), x, plus, {0.0, 1.0}, {},
                                    expectation_cost(Operator(fixtures::random_hermitian(rng, 2))));
    CHECK(g.dx == std::vector<double>{0.0});
    CHECK(g.dT == 0.0);
  }
  SUBCASE("phase model closed form") {
    for (double x0 : {1.0, 0.3, -2.0}) {
      const std::vector<double> x = {x0};
      const auto g = adjoint_gradient(preset_phase(), x, plus, {0.0, 1.0}, {}, element_real_part(0, 1));
      CHECK(std::abs(g.dx[0] + 0.5 * std::sin(x0)) < 1e-8);
      CHECK(g.cost == doctest::Approx(0.5 * std::cos(x0)).epsilon(1e-8));
      // c(T) = 1/2 cos(x0 T)
      CHECK(std::abs(g.dT + 0.5 * x0 * std::sin(x0)) < 1e-8);
      CHECK_FALSE(g.diagnostics.fd_assisted);
    }
    const std::vector<double> x = {1.0};
    const auto g = adjoint_gradient(preset_phase(), x, plus, {0.0, 1.0}, {}, element_real_part(0, 1));
    CHECK(g.dx[0] == doctest::Approx(-0.42074).epsilon(1e-4));
  }
  SUBCASE("random model: adjoint, forward and differences") {
    Rng rng(35);
    const auto m = fixtures::random_model(rng, 4, 3, 2);
    const std::vector<double> x = {0.2, -0.4, 0.9};
    const DensityOperator rho0(fixtures::random_density(rng, 4));
    const CostCofunction cost = expectation_cost(Operator(fixtures::random_hermitian(rng, 4)));
    SolveConfig cfg;
    const auto adj = adjoint_gradient(m.model, x, rho0, {0.0, 1.5}, cfg, cost);
    const auto fwd = forward_gradient(m.model, x, rho0, {0.0, 1.5}, cfg, cost);
    const auto fd = fd_of_cost(m.model, x, rho0, {0.0, 1.5}, cfg, cost);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(rel(adj.dx[k], fwd[k]) < 1e-6);
      CHECK(rel(adj.dx[k], fd[k]) < 1e-4);
    }
  }
}

TEST_CASE("gradient with respect to the initial state and the final time") {
  Rng rng(36);
  const auto m = fixtures::random_model(rng, 2, 1, 1);
  const std::vector<double> x = {0.7};
  const CMatrix rho0 = fixtures::random_density(rng, 2);
  const CostCofunction cost = expectation_cost(Operator(fixtures::random_hermitian(rng, 2)));
  SolveConfig cfg;
  cfg.rtol = 1e-11;
  cfg.atol = 1e-13;
  const auto g = adjoint_gradient(m.model, x, DensityOperator(rho0), {0.0, 1.2}, cfg, cost);
  const CMatrix lambda0 = complexify(g.drho0, 2);

  // trace-preserving Hermitian perturbation so the perturbed start stays a state
  const CMatrix dir = CMatrix{{0.1, Complex(0.05, 0.02)}, {Complex(0.05, -0.02), -0.1}};
  auto cost_from = [&](double s) {
    CMatrix r = rho0;
    r.add_scaled(s, dir);
    return cost.value(integrate(m.model, x, DensityOperator(r), {0.0, 1.2}, cfg).final_state.matrix());
  };
  const double fd = (cost_from(1e-6) - cost_from(-1e-6)) / 2e-6;
  CHECK(rel(hs_inner(lambda0, dir).real(), fd) < 1e-6);

  auto cost_at = [&](double t) {
    return cost.value(integrate(m.model, x, DensityOperator(rho0), {0.0, t}, cfg).final_state.matrix());
  };
  CHECK(rel(g.dT, (cost_at(1.2 + 1e-6) - cost_at(1.2 - 1e-6)) / 2e-6) < 1e-5);
}

TEST_CASE("checkpoint count does not change the adjoint gradient") {
  Rng rng(37);
  const auto m = fixtures::random_model(rng, 4, 2, 2);
  const std::vector<double> x = {0.5, -1.0};
  const DensityOperator rho0(fixtures::random_density(rng, 4));
  const CostCofunction cost = expectation_cost(Operator(fixtures::random_hermitian(rng, 4)));
  std::vector<double> reference;
  for (std::size_t k : {2u, 10u, 50u}) {
    SolveConfig cfg;
    cfg.checkpoints = k;
    const auto g = adjoint_gradient(m.model, x, rho0, {0.0, 3.0}, cfg, cost);
    CHECK(g.diagnostics.peak_retained_states <= k + g.diagnostics.longest_segment);
    if (reference.empty()) {
      reference = g.dx;
    } else {
      for (std::size_t p = 0; p < 2; ++p) CHECK(std::abs(g.dx[p] - reference[p]) < 1e-10);
    }
  }
}

TEST_CASE("adjoint gradient is linear in the terminal cotangent") {
  Rng rng(38);
  const auto m = fixtures::random_model(rng, 4, 2, 1);
  const std::vector<double> x = {0.1, 0.6};
  const DensityOperator rho0(fixtures::random_density(rng, 4));
  const SolveConfig cfg;
  const SolveResult solved = integrate(m.model, x, rho0, {0.0, 1.0}, cfg);
  const CMatrix v1 = fixtures::random_matrix(rng, 4);
  const CMatrix v2 = fixtures::random_matrix(rng, 4);
  const double a = 0.7;
  const double b = -2.1;
  CMatrix mix = v1 * Complex(a);
  mix.add_scaled(b, v2);
  const auto g1 = adjoint_from_cotangent(m.model, x, solved, cfg, v1);
  const auto g2 = adjoint_from_cotangent(m.model, x, solved, cfg, v2);
  const auto gm = adjoint_from_cotangent(m.model, x, solved, cfg, mix);
  for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(gm.dx[k] - (a * g1.dx[k] + b * g2.dx[k])) < 1e-10);
}

TEST_CASE("gradient consistency on presets") {
  Rng rng(39);
  for (std::size_t n = 1; n <= 3; ++n) {
    for (double gamma : {0.0, 0.2}) {
      const LindbladModel model = preset_oat(n, gamma);
      const std::vector<double> x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
      const DensityOperator rho0 = DensityOperator::all_zero(n);
      const std::size_t d = std::size_t{1} << n;
      const CostCofunction cost = expectation_cost(Operator(fixtures::random_hermitian(rng, d)));
      const GradientCheckReport report = gradient_check(model, x, rho0, {0.0, 1.0}, cost, SolveConfig{});
      INFO("n = " << n << ", gamma = " << gamma << ", max rel " << report.max_relative_error);
      CHECK(report.passed);
      CHECK(report.adjoint_forward_error < 1e-6);
    }
  }
}

TEST_CASE("finite-difference Hamiltonian derivative is flagged") {
  const CSparse sz = ops::pauli_z();
  HamiltonianSchedule::Rule rule = [sz](double, std::span<const double> x) -> Operator {
    const double coeffs[] = {0.5 * x[0]};
    const Operator terms[] = {Operator(sz)};
    return linear_combination(coeffs, terms);
  };
  const LindbladModel model(HamiltonianSchedule(2, 1, rule), {});
  const std::vector<double> x = {1.0};
  const auto g = adjoint_gradient(model, x, DensityOperator(fixtures::plus_state()), {0.0, 1.0}, {},
                                  element_real_part(0, 1));
  CHECK(g.diagnostics.fd_assisted);
  CHECK(std::abs(g.dx[0] + 0.5 * std::sin(1.0)) < 1e-7);
}

TEST_CASE("one forward integration and one reverse pass per adjoint gradient") {
  const std::vector<double> x = {1.0};
  const CallCounts before = call_counts();
  (void)adjoint_gradient(preset_phase(), x, DensityOperator(fixtures::plus_state()), {0.0, 1.0}, {},
                         element_real_part(0, 1));
  const CallCounts after = call_counts();
  CHECK(after.forward_integrations - before.forward_integrations == 1);
  CHECK(after.adjoint_passes - before.adjoint_passes == 1);
  CHECK(after.tangent_integrations == before.tangent_integrations);
}
