#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lindbladiff/ivp.hpp"
#include "lindbladiff/linalg.hpp"
#include "lindbladiff/model.hpp"
#include "lindbladiff/state.hpp"

namespace lindbladiff {

/// (Re rho, Im rho) stacked: row-major real block followed by the row-major imaginary block, length 2 d^2.
using RealifiedState = std::vector<double>;

RealifiedState realify(const CMatrix& rho);
/// Inverse of realify for a square d x d matrix. Throws DimensionError unless v.size() == 2 d^2.
CMatrix complexify(std::span<const double> v, std::size_t dimension);

/// Scalar cost c(rho(T)) with its gradient (dc/dRe rho, dc/dIm rho) in realified layout.
///
/// Complexified, the gradient is the cotangent matrix C with dc = Re Tr(C^dagger drho).
struct CostCofunction {
  std::function<double(const CMatrix&)> value;
  std::function<RealifiedState(const CMatrix&)> gradient;
  /// Directions used by the gradient verifier. Empty means generic pseudo-random complex directions.
  std::function<std::vector<CMatrix>(const CMatrix&)> probe_directions;
};

/// c = Re rho_ij
CostCofunction element_real_part(std::size_t i, std::size_t j);
/// c = Re Tr(rho A)
CostCofunction expectation_cost(Operator a);
/// c = Re Tr(V^dagger rho); the gradient is V itself.
CostCofunction cotangent_cost(CMatrix v);

struct CostCheck {
  double max_relative_error = 0.0;
  std::size_t directions = 0;
  bool passed = true;
};

/// Compares the directional derivative <gradient, dir> with central differences (h = 1e-6) along every probe
/// direction. Passes when each error is below 1e-5 relative (with an absolute floor of 1e-8 * max(1, |c|)).
CostCheck verify_cost_gradient(const CostCofunction& cost, const CMatrix& rho);

/// d/dt of the tangent: L(tangent) + (dL/dx_k)(rho), started from zero.
struct ForwardSensitivity {
  CMatrix state;
  CMatrix tangent;
  SolverStats stats;
};

/// Integrates the state and its x_k tangent on the same accepted steps as integrate (the tangent does not
/// enter error control), so `state` equals integrate's final state bit for bit.
ForwardSensitivity forward_sensitivity(const LindbladModel& model, std::span<const double> x,
                                       const DensityOperator& rho0, TimeSpan span, const SolveConfig& config,
                                       std::size_t k);

/// All tangents in one forward pass, contracted with the cost: entry k is Re Tr(C^dagger drho(T)/dx_k).
std::vector<double> forward_gradient(const LindbladModel& model, std::span<const double> x,
                                     const DensityOperator& rho0, TimeSpan span, const SolveConfig& config,
                                     const CostCofunction& cost);

struct AdjointDiagnostics {
  std::size_t forward_steps = 0;
  std::size_t reverse_steps = 0;
  std::size_t segments = 0;
  /// Replay evaluations of the right-hand side plus the adjoint-Liouvillian applications.
  std::size_t rhs_evals = 0;
  std::size_t adjoint_evals = 0;
  /// Largest number of full states held at once during the reverse pass (checkpoints + replayed segment).
  std::size_t peak_retained_states = 0;
  std::size_t longest_segment = 0;
  std::size_t checkpoints = 0;
  /// dH/dx came from finite differences.
  bool fd_assisted = false;
  double trace_drift = 0.0;
};

struct GradientResult {
  double cost = 0.0;
  std::vector<double> dx;
  /// dc/drho0 in realified layout.
  RealifiedState drho0;
  /// dc/dT at the final time.
  double dT = 0.0;
  AdjointDiagnostics diagnostics;
};

struct AdjointOptions {
  /// Run verify_cost_gradient at rho(T) before the reverse pass; failure throws InvalidArgument.
  bool verify_cost = true;
};

/// Discrete adjoint of the Dormand-Prince map on the replayed step grid. One forward integration and one
/// reverse pass that replays each checkpoint segment once.
GradientResult adjoint_gradient(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                                TimeSpan span, const SolveConfig& config, const CostCofunction& cost,
                                const AdjointOptions& options = {});

/// Reverse pass only, from a solve already at hand and a terminal cotangent C (dc = Re Tr(C^dagger drho(T))).
/// `cost` in the result is left at zero.
GradientResult adjoint_from_cotangent(const LindbladModel& model, std::span<const double> x,
                                      const SolveResult& solved, const SolveConfig& config,
                                      const CMatrix& terminal_cotangent);

/// L^dagger(lambda) = i[H, lambda] + sum_j gamma_j (J_j^dagger lambda J_j - 1/2 {J_j^dagger J_j, lambda}).
CMatrix adjoint_liouvillian_apply(const LindbladModel& model, std::span<const double> x, double t,
                                  const CMatrix& lambda);

/// Same map with H already evaluated.
CMatrix apply_adjoint_liouvillian(const Operator& h, const CMatrix& lambda, const LindbladModel& model);

}  // namespace lindbladiff
