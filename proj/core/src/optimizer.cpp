#include "lindbladiff/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lindbladiff/errors.hpp"

namespace lindbladiff {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return s;
}

void check_finite(const ValueGradient& vg, std::size_t n) {
  if (vg.gradient.size() != n) throw DimensionError("objective returned a gradient of the wrong length");
  if (!std::isfinite(vg.value)) throw NumericalError("objective returned a non-finite value");
  for (double g : vg.gradient) {
    if (!std::isfinite(g)) throw NumericalError("objective returned a non-finite gradient");
  }
}

GradientCheckReport assemble(double value, std::span<const double> adjoint, std::span<const double> forward,
                             std::span<const double> fd, double h, double tolerance) {
  GradientCheckReport report;
  report.value = value;
  report.step = h;
  report.tolerance = tolerance;
  for (std::size_t k = 0; k < adjoint.size(); ++k) {
    GradientCheckRow row{k, adjoint[k], forward[k], fd[k], 0.0};
    row.max_relative_error = std::max(
        {relative_error(adjoint[k], forward[k]), relative_error(adjoint[k], fd[k]), relative_error(forward[k], fd[k])});
    report.max_relative_error = std::max(report.max_relative_error, row.max_relative_error);
    report.adjoint_forward_error = std::max(report.adjoint_forward_error, relative_error(adjoint[k], forward[k]));
    report.rows.push_back(row);
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

template <typename F>
std::vector<double> central_differences(F&& f, std::span<const double> x, double h) {
  std::vector<double> out;
  std::vector<double> shifted(x.begin(), x.end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    shifted[k] = x[k] + h;
    const double plus = f(shifted);
    shifted[k] = x[k] - h;
    const double minus = f(shifted);
    shifted[k] = x[k];
    out.push_back((plus - minus) / (2.0 * h));
  }
  return out;
}

}  // namespace

void OptConfig::validate() const {
  if (max_iterations < 1) throw InvalidArgument("optimizer: max_iterations must be positive");
  if (!(initial_step > 0.0)) throw InvalidArgument("optimizer: initial_step must be positive");
  if (!(backtracking > 0.0 && backtracking < 1.0)) throw InvalidArgument("optimizer: backtracking must be in (0, 1)");
  if (!(armijo > 0.0)) throw InvalidArgument("optimizer: armijo constant must be positive");
  if (!(gradient_tolerance > 0.0)) throw InvalidArgument("optimizer: gradient_tolerance must be positive");
}

const char* to_string(OptStatus s) noexcept {
  switch (s) {
    case OptStatus::converged:
      return "converged";
    case OptStatus::max_iterations:
      return "max-iters";
    case OptStatus::line_search_failure:
      return "line-search-failure";
  }
  return "unknown";
}

OptResult maximize(const Objective& objective, std::span<const double> x0, const OptConfig& config) {
  config.validate();
  const std::size_t n = x0.size();
  OptResult result;
  OptTrace& trace = result.trace;

  std::vector<double> x(x0.begin(), x0.end());
  ValueGradient current = objective(x);
  ++trace.evaluations;
  check_finite(current, n);
  double gnorm2 = norm2(current.gradient);
  trace.iterates.push_back({0, x, current.value, std::sqrt(gnorm2), 0.0, trace.evaluations});

  double next_step = config.initial_step;
  trace.status = OptStatus::max_iterations;
  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    if (std::sqrt(gnorm2) <= config.gradient_tolerance) {
      trace.status = OptStatus::converged;
      break;
    }
    double step = next_step;
    bool accepted = false;
    std::vector<double> trial(n);
    ValueGradient candidate;
    for (std::size_t attempt = 0; attempt <= config.max_halvings; ++attempt) {
      for (std::size_t k = 0; k < n; ++k) trial[k] = x[k] + step * current.gradient[k];
      candidate = objective(trial);
      ++trace.evaluations;
      check_finite(candidate, n);
      if (candidate.value > current.value && candidate.value >= current.value + config.armijo * step * gnorm2) {
        accepted = true;
        break;
      }
      step *= config.backtracking;
    }
    if (!accepted) {
      trace.status = OptStatus::line_search_failure;
      break;
    }
    x = trial;
    current = std::move(candidate);
    gnorm2 = norm2(current.gradient);
    trace.iterates.push_back({it, x, current.value, std::sqrt(gnorm2), step, trace.evaluations});
    next_step = 2.0 * step;
  }
  if (trace.status == OptStatus::max_iterations && std::sqrt(gnorm2) <= config.gradient_tolerance) {
    trace.status = OptStatus::converged;
  }
  result.x = x;
  result.value = current.value;
  return result;
}

OptResult maximize_qfi(const LindbladModel& model, std::span<const double> x0, const DensityOperator& rho0,
                       TimeSpan span, const Generator& g, const SolveConfig& solve, const OptConfig& opt,
                       const QfiOptions& options) {
  const Objective objective = [&](std::span<const double> x) {
    QfiReport report = qfi_of_params(model, x, rho0, span, g, solve, true, options);
    return ValueGradient{report.value, std::move(*report.gradient)};
  };
  return maximize(objective, x0, opt);
}

std::vector<double> random_start(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<double> out(count);
  for (double& v : out) {
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    v = std::numbers::pi * (2.0 * u - 1.0);
  }
  return out;
}

double relative_error(double a, double b) noexcept {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

GradientCheckReport gradient_check(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                                   TimeSpan span, const Generator& g, const SolveConfig& config, double h,
                                   double tolerance, const QfiOptions& options) {
  if (!(h > 0.0)) throw InvalidArgument("gradient_check: step must be positive");
  const QfiReport base = qfi_of_params(model, x, rho0, span, g, config, true, options);
  QfiOptions effective = options;
  effective.clip_tolerance = std::max(options.clip_tolerance, 10.0 * config.rtol);
  const std::vector<double> forward = forward_gradient(model, x, rho0, span, config, qfi_cost(g, effective));
  const auto fd = central_differences(
      [&](std::span<const double> p) { return qfi_of_params(model, p, rho0, span, g, config, false, options).value; }, x,
      h);
  return assemble(base.value, *base.gradient, forward, fd, h, tolerance);
}

GradientCheckReport gradient_check(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                                   TimeSpan span, const CostCofunction& cost, const SolveConfig& config, double h,
                                   double tolerance) {
  if (!(h > 0.0)) throw InvalidArgument("gradient_check: step must be positive");
  const GradientResult adjoint = adjoint_gradient(model, x, rho0, span, config, cost);
  const std::vector<double> forward = forward_gradient(model, x, rho0, span, config, cost);
  const auto fd = central_differences(
      [&](std::span<const double> p) {
        return cost.value(integrate(model, p, rho0, span, config).final_state.matrix());
      },
      x, h);
  return assemble(adjoint.cost, adjoint.dx, forward, fd, h, tolerance);
}

}  // namespace lindbladiff
