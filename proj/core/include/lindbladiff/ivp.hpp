#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "lindbladiff/linalg.hpp"
#include "lindbladiff/model.hpp"
#include "lindbladiff/state.hpp"

namespace lindbladiff {

struct TimeSpan {
  double start = 0.0;
  double end = 1.0;
};

struct SolveConfig {
  double rtol = 1e-8;
  double atol = 1e-10;
  /// Zero selects the starting step automatically.
  double initial_step = 0.0;
  /// Budget of attempted (accepted + rejected) steps.
  std::size_t max_steps = 100000;
  /// Checkpoint count K (>= 2). Zero means ceil(sqrt(max_steps)).
  std::size_t checkpoints = 0;

  void validate() const;
  std::size_t resolved_checkpoints() const;
};

/// Step-size controller state carried between steps. Restoring it reproduces the step sequence exactly.
struct ControllerState {
  /// Step to attempt next; zero before the first step.
  double proposed_step = 0.0;
  double previous_error = 1e-4;
  bool last_rejected = false;
};

struct Checkpoint {
  double time = 0.0;
  /// Number of accepted steps taken before `time`.
  std::size_t step_index = 0;
  CMatrix state;
  ControllerState controller;
};

struct SolverStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
  /// |Tr rho(T) - Tr rho(t0)|
  double trace_drift = 0.0;
};

struct SolveResult {
  DensityOperator final_state;
  /// Sorted by time; first at t0, last at T; at most K entries.
  std::vector<Checkpoint> checkpoints;
  SolverStats stats;
  TimeSpan span;
};

/// Integrates rho' = L(rho) with the Dormand-Prince 5(4) pair under PI step control.
///
/// The error norm is the RMS over entries of |delta_ij| / (atol + rtol * max(|y_ij|, |y_new_ij|)).
/// No trace renormalization is applied. Checkpoints are kept at accepted-step indices that are multiples
/// of a stride doubled whenever more than K - 1 would be held, plus the final state. The final state is
/// validated as a density operator at tolerance max(1e-9, 10 * rtol).
SolveResult integrate(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                      TimeSpan span, const SolveConfig& config = {});

/// State at the start of one accepted step.
struct StepRecord {
  double time = 0.0;
  double step = 0.0;
  CMatrix state;
};

struct SegmentReplay {
  /// Every accepted step starting in [from.time, to.time), in order.
  std::vector<StepRecord> steps;
  double end_time = 0.0;
  CMatrix end_state;
  std::size_t rhs_evals = 0;
};

/// Re-runs the integrator from checkpoint `from` up to checkpoint `to` (same solve, same config).
/// Deterministic: the end state is bit-identical to `to.state`; NumericalError otherwise.
SegmentReplay dense_segment(const LindbladModel& model, std::span<const double> x, const Checkpoint& from,
                            const Checkpoint& to, TimeSpan span, const SolveConfig& config = {});

/// All accepted states (t0 through T) of a solve, rebuilt segment by segment.
std::vector<std::pair<double, CMatrix>> trajectory(const LindbladModel& model, std::span<const double> x,
                                                   const DensityOperator& rho0, TimeSpan span,
                                                   const SolveConfig& config = {});

}  // namespace lindbladiff
