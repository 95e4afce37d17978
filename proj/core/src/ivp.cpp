#include "lindbladiff/ivp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lindbladiff/detail/dopri5.hpp"
#include "lindbladiff/errors.hpp"
#include "lindbladiff/instrumentation.hpp"

namespace lindbladiff {

namespace {

constexpr double kSafety = 0.9;
constexpr double kAlpha = 0.7 / 5.0;
constexpr double kBeta = 0.4 / 5.0;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;

double scaled_rms(const CMatrix& delta, const CMatrix& y, const CMatrix& y_new, const SolveConfig& cfg) {
  const auto d = delta.data();
  const auto a = y.data();
  const auto b = y_new.data();
  double sum = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double sc = cfg.atol + cfg.rtol * std::max(std::abs(a[k]), std::abs(b[k]));
    const double r = std::abs(d[k]) / sc;
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(d.size()));
}

double scaled_rms(const CMatrix& v, const CMatrix& y, const SolveConfig& cfg) { return scaled_rms(v, y, y, cfg); }

// Starting step heuristic (Hairer, Norsett & Wanner, Solving ODEs I, II.4).
double starting_step(const LindbladModel& model, std::span<const double> x, double t, const CMatrix& y,
                     const CMatrix& f0, TimeSpan span, const SolveConfig& cfg, std::size_t& rhs_evals) {
  const double length = span.end - t;
  const double d0 = scaled_rms(y, y, cfg);
  const double d1 = scaled_rms(f0, y, cfg);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, length);
  CMatrix y1 = y;
  y1.add_scaled(h0, f0);
  CMatrix f1 = lindblad_rhs(t + h0, y1, model, x);
  ++rhs_evals;
  f1 -= f0;
  const double d2 = scaled_rms(f1, y, cfg) / h0;
  const double dmax = std::max(d1, d2);
  const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / 5.0);
  return std::min({100.0 * h0, h1, length});
}

}  // namespace

void SolveConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw InvalidArgument("SolveConfig: tolerances must be positive");
  if (max_steps < 1) throw InvalidArgument("SolveConfig: max_steps must be at least 1");
  if (initial_step < 0.0 || !std::isfinite(initial_step)) throw InvalidArgument("SolveConfig: bad initial_step");
  if (checkpoints == 1) throw InvalidArgument("SolveConfig: need at least 2 checkpoints");
}

std::size_t SolveConfig::resolved_checkpoints() const {
  if (checkpoints != 0) return checkpoints;
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(max_steps)))));
}

namespace detail {

void compute_stages(const LindbladModel& model, std::span<const double> x, double t, double h, const CMatrix& y,
                    const CMatrix& k1, const Operator& h1, Stages& out) {
  out.inputs[0] = y;
  out.slopes[0] = k1;
  out.hamiltonians[0] = h1;
  for (std::size_t s = 1; s < kStages; ++s) {
    CMatrix input = y;
    for (std::size_t l = 0; l < s; ++l) {
      if (kA[s][l] != 0.0) input.add_scaled(h * kA[s][l], out.slopes[l]);
    }
    out.hamiltonians[s] = model.hamiltonian().evaluate(t + kC[s] * h, x);
    out.slopes[s] = apply_liouvillian(out.hamiltonians[s], input, model);
    out.inputs[s] = std::move(input);
  }
}

CMatrix advance(const CMatrix& y, double h, const Stages& stages) {
  CMatrix out = y;
  for (std::size_t s = 0; s < kStages; ++s) {
    if (kB[s] != 0.0) out.add_scaled(h * kB[s], stages.slopes[s]);
  }
  return out;
}

void check_problem(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0, TimeSpan span,
                   const SolveConfig& config) {
  config.validate();
  if (!(span.end > span.start)) throw InvalidArgument("need T > t0");
  if (rho0.dimension() != model.dimension()) {
    throw DimensionError("initial state dimension " + std::to_string(rho0.dimension()) +
                         " does not match model dimension " + std::to_string(model.dimension()));
  }
  if (x.size() != model.parameter_count()) {
    throw DimensionError("expected " + std::to_string(model.parameter_count()) + " parameters, got " +
                         std::to_string(x.size()));
  }
}

DriveResult drive(const LindbladModel& model, std::span<const double> x, double time, CMatrix state,
                  ControllerState controller, std::size_t step_index, TimeSpan span, const SolveConfig& config,
                  std::optional<std::size_t> stop_index, const StepHooks& hooks) {
  DriveResult result;
  SolverStats& stats = result.stats;
  const double t_end = span.end;
  const double min_step = 1e-14 * std::abs(span.end - span.start);

  Operator h_start = model.hamiltonian().evaluate(time, x);
  CMatrix k1 = apply_liouvillian(h_start, state, model);
  ++stats.rhs_evals;
  if (controller.proposed_step <= 0.0) {
    controller.proposed_step =
        config.initial_step > 0.0 ? config.initial_step : starting_step(model, x, time, state, k1, span, config, stats.rhs_evals);
  }

  std::size_t attempts = 0;
  Stages stages;
  while (time < t_end && (!stop_index || step_index < *stop_index)) {
    if (hooks.before_step) hooks.before_step(step_index, time, state, controller);
    while (true) {
      if (++attempts > config.max_steps) {
        throw NumericalError("integrate: exceeded max_steps = " + std::to_string(config.max_steps));
      }
      double h = controller.proposed_step;
      bool last = false;
      if (time + 1.01 * h >= t_end) {
        h = t_end - time;
        last = true;
      }
      compute_stages(model, x, time, h, state, k1, h_start, stages);
      stats.rhs_evals += kStages - 1;
      CMatrix next = advance(state, h, stages);
      const double t_next = last ? t_end : time + h;
      Operator h_next = model.hamiltonian().evaluate(t_next, x);
      CMatrix k7 = apply_liouvillian(h_next, next, model);
      ++stats.rhs_evals;

      CMatrix delta(state.rows(), state.cols());
      for (std::size_t s = 0; s < kStages; ++s) {
        if (kE[s] != 0.0) delta.add_scaled(h * kE[s], stages.slopes[s]);
      }
      delta.add_scaled(h * kE[6], k7);
      double err = scaled_rms(delta, state, next, config);
      if (!std::isfinite(err) || !next.is_finite()) {
        if (!next.is_finite() && h <= min_step) throw NumericalError("integrate: non-finite state");
        err = 1e10;
      }

      if (err <= 1.0) {
        double factor = kSafety * std::pow(std::max(err, 1e-10), -kAlpha) * std::pow(controller.previous_error, kBeta);
        factor = std::clamp(factor, kMinFactor, kMaxFactor);
        if (controller.last_rejected) factor = std::min(factor, 1.0);
        if (hooks.after_accept) hooks.after_accept(AcceptedStep{step_index, time, h, state, stages, next});
        controller.proposed_step = h * factor;
        controller.previous_error = std::max(err, 1e-4);
        controller.last_rejected = false;
        ++stats.accepted;
        ++step_index;
        time = t_next;
        state = std::move(next);
        k1 = std::move(k7);
        h_start = std::move(h_next);
        break;
      }
      ++stats.rejected;
      controller.proposed_step = h * std::max(kMinFactor, kSafety * std::pow(err, -0.2));
      controller.last_rejected = true;
      if (controller.proposed_step < min_step) {
        throw NumericalError("integrate: step size underflow at t = " + std::to_string(time));
      }
    }
  }
  result.time = time;
  result.state = std::move(state);
  result.controller = controller;
  result.step_index = step_index;
  return result;
}

}  // namespace detail

SolveResult integrate(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0, TimeSpan span,
                      const SolveConfig& config) {
  detail::check_problem(model, x, rho0, span, config);
  detail::count_forward_integration();

  const std::size_t budget = config.resolved_checkpoints();
  std::vector<Checkpoint> checkpoints;
  std::size_t stride = 1;
  detail::StepHooks hooks;
  hooks.before_step = [&](std::size_t index, double time, const CMatrix& state, const ControllerState& controller) {
    if (index % stride != 0) return;
    checkpoints.push_back({time, index, state, controller});
    while (checkpoints.size() > budget - 1) {
      stride *= 2;
      std::erase_if(checkpoints, [stride](const Checkpoint& c) { return c.step_index % stride != 0; });
    }
  };

  auto run = detail::drive(model, x, span.start, rho0.matrix(), ControllerState{}, 0, span, config, std::nullopt, hooks);
  checkpoints.push_back({run.time, run.step_index, run.state, run.controller});

  SolverStats stats = run.stats;
  stats.trace_drift = std::abs(trace(run.state) - trace(rho0.matrix()));
  const double tolerance = std::max(DensityOperator::kDefaultTolerance, 10.0 * config.rtol);
  try {
    return SolveResult{DensityOperator(std::move(run.state), tolerance), std::move(checkpoints), stats, span};
  } catch (const InvalidState& e) {
    throw NumericalError(std::string("integrate: final state invalid: ") + e.what());
  }
}

SegmentReplay dense_segment(const LindbladModel& model, std::span<const double> x, const Checkpoint& from,
                            const Checkpoint& to, TimeSpan span, const SolveConfig& config) {
  if (to.step_index <= from.step_index || !(to.time > from.time)) {
    throw InvalidArgument("dense_segment: checkpoints out of order");
  }
  detail::count_segment_replay();
  SegmentReplay replay;
  detail::StepHooks hooks;
  hooks.after_accept = [&](const detail::AcceptedStep& step) {
    replay.steps.push_back({step.time, step.step, step.state});
  };
  auto run = detail::drive(model, x, from.time, from.state, from.controller, from.step_index, span, config,
                           to.step_index, hooks);
  if (run.step_index != to.step_index || run.time != to.time || !(run.state == to.state)) {
    throw NumericalError("dense_segment: replay diverged from the recorded checkpoint at t = " + std::to_string(to.time));
  }
  replay.end_time = run.time;
  replay.end_state = std::move(run.state);
  replay.rhs_evals = run.stats.rhs_evals;
  return replay;
}

std::vector<std::pair<double, CMatrix>> trajectory(const LindbladModel& model, std::span<const double> x,
                                                   const DensityOperator& rho0, TimeSpan span,
                                                   const SolveConfig& config) {
  const SolveResult solved = integrate(model, x, rho0, span, config);
  std::vector<std::pair<double, CMatrix>> out;
  for (std::size_t c = 0; c + 1 < solved.checkpoints.size(); ++c) {
    auto replay = dense_segment(model, x, solved.checkpoints[c], solved.checkpoints[c + 1], span, config);
    for (auto& step : replay.steps) out.emplace_back(step.time, std::move(step.state));
  }
  out.emplace_back(span.end, solved.final_state.matrix());
  return out;
}

}  // namespace lindbladiff
