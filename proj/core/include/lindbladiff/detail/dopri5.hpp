#pragma once

// Dormand-Prince 5(4) machinery shared by the forward solver, the tangent solver and the adjoint pass.

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>

#include "lindbladiff/ivp.hpp"
#include "lindbladiff/linalg.hpp"
#include "lindbladiff/model.hpp"

namespace lindbladiff::detail {

inline constexpr std::size_t kStages = 6;  // stages entering the 5th-order update; the 7th is FSAL

inline constexpr std::array<double, 7> kC = {0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};

inline constexpr std::array<std::array<double, 6>, 7> kA = {{
    {0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0},
    {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0},
    {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0},
    {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0},
    {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0},
}};

inline constexpr std::array<double, 6> kB = {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
                                             11.0 / 84.0};

// 5th-order minus embedded 4th-order weights.
inline constexpr std::array<double, 7> kE = {71.0 / 57600.0,  0.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                             -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0};

/// Stage data of one step: inputs Y_s, slopes k_s = L_s(Y_s) and the Hamiltonians H(t + c_s h, x).
struct Stages {
  std::array<CMatrix, kStages> inputs;
  std::array<CMatrix, kStages> slopes;
  std::array<Operator, kStages> hamiltonians;
};

/// Fills `out` for the step (t, h) from y; `k1` must be L(t, y).
void compute_stages(const LindbladModel& model, std::span<const double> x, double t, double h, const CMatrix& y,
                    const CMatrix& k1, const Operator& h1, Stages& out);

/// y + h * sum_s b_s k_s
CMatrix advance(const CMatrix& y, double h, const Stages& stages);

struct AcceptedStep {
  std::size_t index;
  double time;
  double step;
  const CMatrix& state;
  const Stages& stages;
  const CMatrix& next_state;
};

struct StepHooks {
  /// Called once per accepted-step index with the state and controller at its start.
  std::function<void(std::size_t index, double time, const CMatrix& state, const ControllerState& controller)>
      before_step;
  std::function<void(const AcceptedStep&)> after_accept;
};

struct DriveResult {
  double time = 0.0;
  CMatrix state;
  ControllerState controller;
  std::size_t step_index = 0;
  SolverStats stats;
};

/// Shape, parameter-count and span checks shared by every solver entry point.
void check_problem(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0, TimeSpan span,
                   const SolveConfig& config);

/// Runs accepted steps from (time, state, controller, step_index) until span.end, or until
/// `stop_index` accepted steps have been taken in total.
DriveResult drive(const LindbladModel& model, std::span<const double> x, double time, CMatrix state,
                  ControllerState controller, std::size_t step_index, TimeSpan span, const SolveConfig& config,
                  std::optional<std::size_t> stop_index, const StepHooks& hooks);

}  // namespace lindbladiff::detail
