#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "lindbladiff/errors.hpp"
#include "lindbladiff/instrumentation.hpp"
#include "lindbladiff/optimizer.hpp"

using namespace lindbladiff;

namespace {

// -|x - a|^2
Objective quadratic(std::vector<double> a) {
  return [a](std::span<const double> x) {
    ValueGradient vg;
    vg.gradient.resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      vg.value -= (x[k] - a[k]) * (x[k] - a[k]);
      vg.gradient[k] = -2.0 * (x[k] - a[k]);
    }
    return vg;
  };
}

bool same_trace(const OptTrace& a, const OptTrace& b) {
  if (a.iterates.size() != b.iterates.size() || a.status != b.status || a.evaluations != b.evaluations) return false;
  for (std::size_t i = 0; i < a.iterates.size(); ++i) {
    if (a.iterates[i].x != b.iterates[i].x || a.iterates[i].value != b.iterates[i].value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("quadratic surrogate converges") {
  fixtures::Rng rng(60);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<double> a = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    std::vector<double> x0 = a;
    for (double& v : x0) v += rng.uniform(-0.55, 0.55);
    OptConfig cfg;
    cfg.max_iterations = 100;
    const OptResult r = maximize(quadratic(a), x0, cfg);
    CHECK(r.trace.status == OptStatus::converged);
    CHECK(r.trace.iterates.size() <= 101);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(r.x[k] - a[k]) < 1e-4);
    for (std::size_t i = 1; i < r.trace.iterates.size(); ++i) {
      CHECK(r.trace.iterates[i].value > r.trace.iterates[i - 1].value);
      CHECK(r.trace.iterates[i].evaluations > r.trace.iterates[i - 1].evaluations);
    }
    CHECK(r.trace.evaluations == r.trace.iterates.back().evaluations);
  }
}

TEST_CASE("critical point start returns immediately") {
  const std::vector<double> x0 = {0.3};
  const DensityOperator rho0(fixtures::plus_state());
  const Generator g(Operator(CMatrix{{0.5, 0.0}, {0.0, -0.5}}));
  const OptResult r = maximize_qfi(fixtures::zero_model(2), x0, rho0, {0.0, 1.0}, g, SolveConfig{}, OptConfig{});
  CHECK(r.trace.status == OptStatus::converged);
  CHECK(r.x == x0);
  CHECK(r.trace.iterates.size() == 1);
  CHECK(r.trace.evaluations == 1);
}

TEST_CASE("line-search failure keeps the best iterate") {
  // the reported gradient points downhill, so no trial step can be accepted
  const Objective wrong = [](std::span<const double> x) {
    return ValueGradient{-x[0] * x[0], {2.0 * x[0]}};
  };
  const std::vector<double> x0 = {1.0};
  const OptResult r = maximize(wrong, x0);
  CHECK(r.trace.status == OptStatus::line_search_failure);
  CHECK(r.x == x0);
  CHECK(r.value == -1.0);
  CHECK(r.trace.evaluations == 1 + 31);
  CHECK(std::string(to_string(r.trace.status)) == "line-search-failure");
}

TEST_CASE("iteration budget") {
  const std::vector<double> a = {2.0};
  const std::vector<double> x0 = {0.0};
  OptConfig cfg;
  cfg.max_iterations = 2;
  cfg.initial_step = 1e-3;
  const OptResult r = maximize(quadratic(a), x0, cfg);
  CHECK(r.trace.status == OptStatus::max_iterations);
  CHECK(r.trace.iterates.size() == 3);
  CHECK(std::string(to_string(OptStatus::max_iterations)) == "max-iters");
  OptConfig bad;
  bad.backtracking = 1.0;
  CHECK_THROWS_AS(maximize(quadratic(a), x0, bad), InvalidArgument);
}

TEST_CASE("random_start") {
  const auto a = random_start(6, 17);
  CHECK(a == random_start(6, 17));
  CHECK(a != random_start(6, 18));
  for (double v : a) {
    CHECK(v >= -std::numbers::pi);
    CHECK(v <= std::numbers::pi);
  }
}

TEST_CASE("relative_error floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == 0.5);
  CHECK(relative_error(0.0, 1e-9) == doctest::Approx(1e-3));
}

TEST_CASE("twisting preset: random starts reach the pure-state bound") {
  const LindbladModel model = preset_oat(2, 0.0);
  const DensityOperator rho0 = DensityOperator::all_zero(2);
  const Generator g = Generator::collective_sz(2);
  const TimeSpan span{0.0, 1.0};
  OptConfig opt;
  opt.max_iterations = 100;
  double best = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    opt.seed = seed;
    const auto x0 = random_start(2, seed);
    const CallCounts before = call_counts();
    const OptResult r = maximize_qfi(model, x0, rho0, span, g, SolveConfig{}, opt);
    const CallCounts after = call_counts();
    CHECK(after.forward_integrations - before.forward_integrations == r.trace.evaluations);
    CHECK(after.adjoint_passes - before.adjoint_passes == r.trace.evaluations);
    for (std::size_t i = 1; i < r.trace.iterates.size(); ++i)
      CHECK(r.trace.iterates[i].value >= r.trace.iterates[i - 1].value);
    CHECK(r.value <= 1.0 + 1e-6);
    best = std::max(best, r.value);
    MESSAGE("seed " << seed << ": F = " << r.value << " after " << r.trace.iterates.size() - 1 << " iterations ("
                    << std::string(to_string(r.trace.status)) << ")");
  }
  CHECK(best >= 0.9);
}

TEST_CASE("fixed seed gives a bit-identical trace") {
  const LindbladModel model = preset_oat(2, 0.1);
  const DensityOperator rho0 = DensityOperator::all_zero(2);
  const Generator g = Generator::collective_sz(2);
  OptConfig opt;
  opt.max_iterations = 8;
  const auto x0 = random_start(2, 3);
  const OptResult a = maximize_qfi(model, x0, rho0, {0.0, 1.0}, g, SolveConfig{}, opt);
  const OptResult b = maximize_qfi(model, x0, rho0, {0.0, 1.0}, g, SolveConfig{}, opt);
  CHECK(same_trace(a.trace, b.trace));
}

TEST_CASE("scaling F by four with a quarter step leaves the path unchanged") {
  const LindbladModel model = preset_oat(2, 0.1);
  const DensityOperator rho0 = DensityOperator::all_zero(2);
  const Generator g = Generator::collective_sz(2);
  const auto x0 = random_start(2, 4);
  OptConfig opt;
  opt.max_iterations = 10;
  QfiOptions standard;
  standard.convention = QfiConvention::standard;
  OptConfig quarter = opt;
  quarter.initial_step = opt.initial_step / 4.0;
  const OptResult a = maximize_qfi(model, x0, rho0, {0.0, 1.0}, g, SolveConfig{}, opt);
  const OptResult b = maximize_qfi(model, x0, rho0, {0.0, 1.0}, g, SolveConfig{}, quarter, standard);
  REQUIRE(a.trace.iterates.size() == b.trace.iterates.size());
  for (std::size_t i = 0; i < a.trace.iterates.size(); ++i) {
    CHECK(a.trace.iterates[i].x == b.trace.iterates[i].x);
    CHECK(4.0 * a.trace.iterates[i].value == b.trace.iterates[i].value);
  }
}

TEST_CASE("gradient_check on the phase model") {
  const DensityOperator rho0(fixtures::plus_state());
  for (double x0 : {0.3, 1.2, 2.5}) {
    const std::vector<double> x = {x0};
    SolveConfig cfg;
    cfg.rtol = 1e-10;
    cfg.atol = 1e-12;
    const auto report = gradient_check(preset_phase(), x, rho0, {0.0, 1.0}, element_real_part(0, 1), cfg);
    CHECK(report.passed);
    REQUIRE(report.rows.size() == 1);
    // Re rho01(T) = cos(x0 T) / 2
    CHECK(relative_error(report.rows[0].adjoint, -0.5 * std::sin(x0)) < 1e-6);
    CHECK(report.value == doctest::Approx(0.5 * std::cos(x0)).epsilon(1e-8));
  }
}

TEST_CASE("gradient_check on an x-independent model") {
  const DensityOperator rho0(fixtures::plus_state());
  const std::vector<double> x = {0.5};
  const Generator g(Operator(CMatrix{{0.5, 0.0}, {0.0, -0.5}}));
  const auto report = gradient_check(fixtures::zero_model(2), x, rho0, {0.0, 1.0}, g, SolveConfig{});
  CHECK(report.passed);
  CHECK(report.rows[0].adjoint == 0.0);
  CHECK(report.rows[0].forward == 0.0);
  CHECK(report.rows[0].finite_difference == 0.0);
}

TEST_CASE("gradient_check on the three-qubit twisting preset with decay") {
  const DensityOperator rho0 = DensityOperator::all_zero(3);
  const std::vector<double> x = {0.7, -1.3};
  SolveConfig cfg;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-12;
  const auto report = gradient_check(preset_oat(3, 0.1), x, rho0, {0.0, 1.0}, Generator::collective_sz(3), cfg);
  INFO("max relative error " << report.max_relative_error);
  CHECK(report.passed);
  CHECK(report.adjoint_forward_error < 1e-6);
  CHECK_THROWS_AS(gradient_check(preset_oat(3, 0.1), x, rho0, {0.0, 1.0}, Generator::collective_sz(3), cfg, 0.0),
                  InvalidArgument);
}
