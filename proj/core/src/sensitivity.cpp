#include "lindbladiff/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "lindbladiff/detail/dopri5.hpp"
#include "lindbladiff/errors.hpp"
#include "lindbladiff/instrumentation.hpp"

namespace lindbladiff {

namespace {

using detail::kA;
using detail::kB;
using detail::kC;
using detail::kStages;

constexpr double kProbeStep = 1e-6;
constexpr double kProbeTolerance = 1e-5;

void check_square(const CMatrix& m, std::size_t d, const char* what) {
  if (m.rows() != d || m.cols() != d) {
    throw DimensionError(std::string(what) + ": got " + m.shape_string() + ", expected " + std::to_string(d) + "x" +
                         std::to_string(d));
  }
}

std::vector<CMatrix> generic_probes(const CMatrix& rho) {
  std::mt19937_64 gen(0x5eed);
  auto uniform = [&gen] { return static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };
  std::vector<CMatrix> out;
  for (int p = 0; p < 4; ++p) {
    CMatrix dir(rho.rows(), rho.cols());
    for (auto& z : dir.data()) {
      const double re = uniform();
      z = Complex(re, uniform());
    }
    out.push_back(std::move(dir));
  }
  return out;
}

// Re Tr(-i dH [Y, kbar^dagger]) = Re Tr(kbar^dagger (-i [dH, Y])).
double parameter_pairing(const Operator& dh, const CMatrix& y, const CMatrix& kbar) {
  const CMatrix kdag = kbar.adjoint();
  CMatrix m = matmul(y, kdag);
  m -= matmul(kdag, y);
  return (-kI * trace_product(dh, m)).real();
}

struct StageDerivatives {
  // dH/dx_k at each stage time; one vector per stage.
  std::array<std::vector<Operator>, kStages> per_stage;
};

StageDerivatives stage_derivatives(const LindbladModel& model, std::span<const double> x, double t, double h) {
  StageDerivatives out;
  for (std::size_t s = 0; s < kStages; ++s) {
    for (std::size_t k = 0; k < model.parameter_count(); ++k) {
      out.per_stage[s].push_back(model.hamiltonian().parameter_derivative(t + kC[s] * h, x, k));
    }
  }
  return out;
}

// Advances the tangents through one accepted step using the primal stage data.
void tangent_step(const LindbladModel& model, const detail::AcceptedStep& step, const StageDerivatives& dh,
                  std::vector<CMatrix>& tangents, std::span<const std::size_t> indices) {
  const double h = step.step;
  for (std::size_t p = 0; p < tangents.size(); ++p) {
    const std::size_t k = indices[p];
    std::array<CMatrix, kStages> slopes;
    CMatrix next = tangents[p];
    for (std::size_t s = 0; s < kStages; ++s) {
      CMatrix input = tangents[p];
      for (std::size_t l = 0; l < s; ++l) {
        if (kA[s][l] != 0.0) input.add_scaled(h * kA[s][l], slopes[l]);
      }
      CMatrix slope = apply_liouvillian(step.stages.hamiltonians[s], input, model);
      slope.add_scaled(-kI, commutator(dh.per_stage[s][k], step.stages.inputs[s]));
      if (kB[s] != 0.0) next.add_scaled(h * kB[s], slope);
      slopes[s] = std::move(slope);
    }
    tangents[p] = std::move(next);
  }
}

struct TangentRun {
  detail::DriveResult primal;
  std::vector<CMatrix> tangents;
};

TangentRun run_tangents(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                        TimeSpan span, const SolveConfig& config, std::span<const std::size_t> indices) {
  detail::check_problem(model, x, rho0, span, config);
  detail::count_tangent_integration();
  const std::size_t d = model.dimension();
  TangentRun run;
  run.tangents.assign(indices.size(), CMatrix(d, d));
  detail::StepHooks hooks;
  hooks.after_accept = [&](const detail::AcceptedStep& step) {
    tangent_step(model, step, stage_derivatives(model, x, step.time, step.step), run.tangents, indices);
  };
  run.primal =
      detail::drive(model, x, span.start, rho0.matrix(), ControllerState{}, 0, span, config, std::nullopt, hooks);
  return run;
}

}  // namespace

RealifiedState realify(const CMatrix& rho) {
  const auto data = rho.data();
  RealifiedState out(2 * data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    out[k] = data[k].real();
    out[data.size() + k] = data[k].imag();
  }
  return out;
}

CMatrix complexify(std::span<const double> v, std::size_t dimension) {
  const std::size_t n = dimension * dimension;
  if (v.size() != 2 * n) {
    throw DimensionError("complexify: length " + std::to_string(v.size()) + " does not match 2 * " +
                         std::to_string(dimension) + "^2");
  }
  std::vector<Complex> data(n);
  for (std::size_t k = 0; k < n; ++k) data[k] = Complex(v[k], v[n + k]);
  return CMatrix(dimension, dimension, std::move(data));
}

CostCofunction element_real_part(std::size_t i, std::size_t j) {
  CostCofunction cost;
  cost.value = [i, j](const CMatrix& rho) {
    if (i >= rho.rows() || j >= rho.cols()) throw InvalidArgument("element_real_part: index out of range");
    return rho(i, j).real();
  };
  cost.gradient = [i, j](const CMatrix& rho) {
    CMatrix c(rho.rows(), rho.cols());
    c(i, j) = 1.0;
    return realify(c);
  };
  return cost;
}

CostCofunction expectation_cost(Operator a) {
  CostCofunction cost;
  const CMatrix a_dense = a.to_dense();
  cost.value = [a](const CMatrix& rho) { return trace_product(a, rho).real(); };
  cost.gradient = [a_dense](const CMatrix& rho) {
    check_square(rho, a_dense.rows(), "expectation_cost");
    return realify(a_dense.adjoint());
  };
  return cost;
}

CostCofunction cotangent_cost(CMatrix v) {
  CostCofunction cost;
  cost.value = [v](const CMatrix& rho) { return hs_inner(v, rho).real(); };
  cost.gradient = [v](const CMatrix& rho) {
    check_square(rho, v.rows(), "cotangent_cost");
    return realify(v);
  };
  return cost;
}

CostCheck verify_cost_gradient(const CostCofunction& cost, const CMatrix& rho) {
  if (!cost.value || !cost.gradient) throw InvalidArgument("cost cofunction is missing its value or gradient rule");
  const double c0 = cost.value(rho);
  const CMatrix grad = complexify(cost.gradient(rho), rho.rows());
  const std::vector<CMatrix> probes = cost.probe_directions ? cost.probe_directions(rho) : generic_probes(rho);
  CostCheck check;
  const double floor = 1e-8 * std::max(1.0, std::abs(c0));
  for (const auto& dir : probes) {
    CMatrix plus = rho;
    plus.add_scaled(kProbeStep, dir);
    CMatrix minus = rho;
    minus.add_scaled(-kProbeStep, dir);
    const double fd = (cost.value(plus) - cost.value(minus)) / (2.0 * kProbeStep);
    const double analytic = hs_inner(grad, dir).real();
    const double err = std::abs(fd - analytic);
    const double rel = err / std::max({std::abs(fd), std::abs(analytic), floor / kProbeTolerance});
    check.max_relative_error = std::max(check.max_relative_error, rel);
    if (!std::isfinite(rel) || (err > floor && rel > kProbeTolerance)) check.passed = false;
    ++check.directions;
  }
  return check;
}

ForwardSensitivity forward_sensitivity(const LindbladModel& model, std::span<const double> x,
                                       const DensityOperator& rho0, TimeSpan span, const SolveConfig& config,
                                       std::size_t k) {
  if (k >= model.parameter_count()) {
    throw InvalidArgument("forward_sensitivity: parameter index " + std::to_string(k) + " out of range");
  }
  const std::size_t index[] = {k};
  TangentRun run = run_tangents(model, x, rho0, span, config, index);
  return {std::move(run.primal.state), std::move(run.tangents.front()), run.primal.stats};
}

std::vector<double> forward_gradient(const LindbladModel& model, std::span<const double> x,
                                     const DensityOperator& rho0, TimeSpan span, const SolveConfig& config,
                                     const CostCofunction& cost) {
  std::vector<std::size_t> indices(model.parameter_count());
  for (std::size_t k = 0; k < indices.size(); ++k) indices[k] = k;
  TangentRun run = run_tangents(model, x, rho0, span, config, indices);
  const CMatrix c = complexify(cost.gradient(run.primal.state), model.dimension());
  std::vector<double> out;
  for (const auto& t : run.tangents) out.push_back(hs_inner(c, t).real());
  return out;
}

CMatrix apply_adjoint_liouvillian(const Operator& h, const CMatrix& lambda, const LindbladModel& model) {
  CMatrix out = commutator(h, lambda);
  out *= kI;
  for (const auto& ch : model.channels()) {
    if (ch.rate == 0.0) continue;
    // J^dagger lambda J = ((lambda J)^dagger J)^dagger
    const CMatrix lj = matmul(lambda, ch.op);
    out.add_scaled(ch.rate, matmul(lj.adjoint(), ch.op).adjoint());
  }
  if (!model.channels().empty()) out.add_scaled(-0.5, anticommutator(model.decay_operator(), lambda));
  return out;
}

CMatrix adjoint_liouvillian_apply(const LindbladModel& model, std::span<const double> x, double t,
                                  const CMatrix& lambda) {
  check_square(lambda, model.dimension(), "adjoint_liouvillian_apply");
  if (!lambda.is_finite()) throw NumericalError("adjoint_liouvillian_apply: non-finite input");
  return apply_adjoint_liouvillian(model.hamiltonian().evaluate(t, x), lambda, model);
}

GradientResult adjoint_from_cotangent(const LindbladModel& model, std::span<const double> x,
                                      const SolveResult& solved, const SolveConfig& config,
                                      const CMatrix& terminal_cotangent) {
  const std::size_t d = model.dimension();
  check_square(terminal_cotangent, d, "terminal cotangent");
  if (!terminal_cotangent.is_finite()) throw NumericalError("adjoint: non-finite terminal cotangent");
  if (x.size() != model.parameter_count()) throw DimensionError("adjoint: parameter count mismatch");
  const auto& cps = solved.checkpoints;
  if (cps.size() < 2) throw InvalidArgument("adjoint: solve result carries fewer than two checkpoints");
  detail::count_adjoint_pass();

  GradientResult result;
  AdjointDiagnostics& diag = result.diagnostics;
  diag.forward_steps = solved.stats.accepted;
  diag.checkpoints = cps.size();
  diag.fd_assisted = !model.hamiltonian().has_analytic_derivative();
  diag.trace_drift = solved.stats.trace_drift;
  result.dx.assign(model.parameter_count(), 0.0);

  const CMatrix& rho_t = solved.final_state.matrix();
  result.dT = hs_inner(terminal_cotangent, lindblad_rhs(solved.span.end, rho_t, model, x)).real();

  CMatrix lambda = terminal_cotangent;
  detail::Stages stages;
  for (std::size_t c = cps.size() - 1; c-- > 0;) {
    SegmentReplay replay = dense_segment(model, x, cps[c], cps[c + 1], solved.span, config);
    replay.end_state = CMatrix();
    ++diag.segments;
    diag.rhs_evals += replay.rhs_evals;
    diag.longest_segment = std::max(diag.longest_segment, replay.steps.size());
    diag.peak_retained_states = std::max(diag.peak_retained_states, cps.size() + replay.steps.size());

    for (std::size_t n = replay.steps.size(); n-- > 0;) {
      const StepRecord& rec = replay.steps[n];
      const double h = rec.step;
      Operator h1 = model.hamiltonian().evaluate(rec.time, x);
      const CMatrix k1 = apply_liouvillian(h1, rec.state, model);
      detail::compute_stages(model, x, rec.time, h, rec.state, k1, h1, stages);
      diag.rhs_evals += kStages;
      const StageDerivatives dh = stage_derivatives(model, x, rec.time, h);

      std::array<CMatrix, kStages> ybar;
      CMatrix next_lambda = lambda;
      for (std::size_t s = kStages; s-- > 0;) {
        CMatrix kbar = lambda * Complex(h * kB[s]);
        for (std::size_t m = s + 1; m < kStages; ++m) {
          if (kA[m][s] != 0.0) kbar.add_scaled(h * kA[m][s], ybar[m]);
        }
        for (std::size_t k = 0; k < result.dx.size(); ++k) {
          result.dx[k] += parameter_pairing(dh.per_stage[s][k], stages.inputs[s], kbar);
        }
        ybar[s] = apply_adjoint_liouvillian(stages.hamiltonians[s], kbar, model);
        ++diag.adjoint_evals;
        next_lambda += ybar[s];
      }
      lambda = std::move(next_lambda);
      ++diag.reverse_steps;
    }
    replay.steps.clear();
  }
  if (!lambda.is_finite()) throw NumericalError("adjoint: non-finite adjoint state");
  result.drho0 = realify(lambda);
  for (double v : result.dx) {
    if (!std::isfinite(v)) throw NumericalError("adjoint: non-finite parameter gradient");
  }
  return result;
}

GradientResult adjoint_gradient(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                                TimeSpan span, const SolveConfig& config, const CostCofunction& cost,
                                const AdjointOptions& options) {
  if (!cost.value || !cost.gradient) throw InvalidArgument("cost cofunction is missing its value or gradient rule");
  const SolveResult solved = integrate(model, x, rho0, span, config);
  const CMatrix& rho_t = solved.final_state.matrix();
  if (options.verify_cost) {
    const CostCheck check = verify_cost_gradient(cost, rho_t);
    if (!check.passed) {
      throw InvalidArgument("cost gradient fails the finite-difference check (relative error " +
                            std::to_string(check.max_relative_error) + ")");
    }
  }
  const CMatrix c = complexify(cost.gradient(rho_t), model.dimension());
  GradientResult result = adjoint_from_cotangent(model, x, solved, config, c);
  result.cost = cost.value(rho_t);
  return result;
}

}  // namespace lindbladiff
