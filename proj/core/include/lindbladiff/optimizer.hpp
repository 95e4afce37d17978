#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lindbladiff/ivp.hpp"
#include "lindbladiff/model.hpp"
#include "lindbladiff/qfi.hpp"
#include "lindbladiff/sensitivity.hpp"
#include "lindbladiff/state.hpp"

namespace lindbladiff {

struct OptConfig {
  std::size_t max_iterations = 200;
  double initial_step = 0.1;
  double backtracking = 0.5;
  double armijo = 1e-4;
  double gradient_tolerance = 1e-6;
  std::size_t max_halvings = 30;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class OptStatus { converged, max_iterations, line_search_failure };

const char* to_string(OptStatus s) noexcept;

/// One accepted iterate. Entry 0 is the starting point with step 0.
struct OptIterate {
  std::size_t iteration = 0;
  std::vector<double> x;
  double value = 0.0;
  double gradient_norm = 0.0;
  double step = 0.0;
  /// Objective evaluations so far, rejected line-search trials included.
  std::size_t evaluations = 0;
};

struct OptTrace {
  std::vector<OptIterate> iterates;
  OptStatus status = OptStatus::converged;
  std::size_t evaluations = 0;
};

struct OptResult {
  std::vector<double> x;
  double value = 0.0;
  OptTrace trace;
};

struct ValueGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

using Objective = std::function<ValueGradient(std::span<const double>)>;

/// Gradient ascent with Armijo backtracking. The first trial step is `initial_step`, later ones start at twice
/// the last accepted step; a trial is accepted when F(x + a g) >= F(x) + armijo * a * |g|^2 and F strictly
/// increases. Returns the best iterate.
OptResult maximize(const Objective& objective, std::span<const double> x0, const OptConfig& config = {});

/// maximize with F from qfi_of_params (gradient on); each evaluation is one forward and one reverse pass.
OptResult maximize_qfi(const LindbladModel& model, std::span<const double> x0, const DensityOperator& rho0,
                       TimeSpan span, const Generator& g, const SolveConfig& solve, const OptConfig& opt,
                       const QfiOptions& options = {});

/// Uniform draws in [-pi, pi] from a 64-bit Mersenne twister seeded with `seed`.
std::vector<double> random_start(std::size_t count, std::uint64_t seed);

struct GradientCheckRow {
  std::size_t parameter = 0;
  double adjoint = 0.0;
  double forward = 0.0;
  double finite_difference = 0.0;
  /// Largest pairwise relative error among the three values.
  double max_relative_error = 0.0;
};

struct GradientCheckReport {
  double value = 0.0;
  std::vector<GradientCheckRow> rows;
  double max_relative_error = 0.0;
  double adjoint_forward_error = 0.0;
  double tolerance = 1e-4;
  double step = 1e-6;
  bool passed = true;
};

/// |a - b| / max(|a|, |b|, 1e-6); the floor keeps identically vanishing components from reporting noise.
double relative_error(double a, double b) noexcept;

/// Adjoint, forward-tangent and central-difference gradients of F(x).
GradientCheckReport gradient_check(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                                   TimeSpan span, const Generator& g, const SolveConfig& config, double h = 1e-6,
                                   double tolerance = 1e-4, const QfiOptions& options = {});

/// Same for a terminal cost c(rho(T)).
GradientCheckReport gradient_check(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                                   TimeSpan span, const CostCofunction& cost, const SolveConfig& config,
                                   double h = 1e-6, double tolerance = 1e-4);

}  // namespace lindbladiff
