#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lindbladiff/eigen.hpp"
#include "lindbladiff/errors.hpp"
#include "lindbladiff/io.hpp"
#include "lindbladiff/operators.hpp"
#include "lindbladiff/sensitivity.hpp"
#include "lindbladiff/version.hpp"

namespace lindbladiff::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double number_at(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

std::uint64_t count_at(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && j.get<std::int64_t>() < 0 && !j.is_number_unsigned())) {
    throw ConfigError(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

std::string string_at(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

bool bool_at(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError(path + "/" + item.key(), "unknown key");
  }
}

// "<prefix>:<n>" -> n
std::optional<std::size_t> preset_size(const std::string& spec, const std::string& prefix, const std::string& path) {
  if (spec.rfind(prefix + ":", 0) != 0) return std::nullopt;
  const std::string digits = spec.substr(prefix.size() + 1);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ConfigError(path, "expected " + prefix + ":<n>, got '" + spec + "'");
  }
  const std::size_t n = std::stoul(digits);
  if (n < 1 || n > 10) throw ConfigError(path, "qubit count must be in [1, 10]");
  return n;
}

bool is_preset_name(const std::string& spec) {
  for (const char* p : {"oat:", "zero:", "all-zero-pure:", "plus:", "maximally-mixed:", "Sz:"}) {
    if (spec.rfind(p, 0) == 0) return true;
  }
  return spec == "phase" || spec == "Sz";
}

fs::path resolve_path(const std::string& file, const fs::path& base) {
  fs::path p(file);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

json read_json_file(const fs::path& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) throw ConfigError(path, "cannot open '" + file.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, "'" + file.string() + "' is not valid JSON: " + e.what());
  }
}

std::vector<double> parse_number_list(const std::string& text, const std::string& path) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    const auto last = item.find_last_not_of(" \t\r\n");
    item = item.substr(first, last - first + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !std::isfinite(v)) throw ConfigError(path, "'" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::vector<double> params_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number_at(j[k], path + "/" + std::to_string(k)));
  return out;
}

// File holding a JSON array or comma separated numbers.
std::vector<double> params_from_file(const fs::path& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) throw ConfigError(path, "cannot open '" + file.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const json parsed = json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) return params_from_json(parsed, path);
  std::string joined = text;
  std::replace(joined.begin(), joined.end(), '\n', ',');
  return parse_number_list(joined, path);
}

LindbladModel zero_model(std::size_t n) {
  const std::size_t d = std::size_t{1} << n;
  std::vector<LinearTerm> terms;
  terms.push_back({std::nullopt, 1.0, Operator(CSparse(d, d, {}))});
  return LindbladModel(HamiltonianSchedule::linear(d, 0, std::move(terms)), {});
}

std::size_t qubits_of(std::size_t d) {
  std::size_t n = 0;
  while ((std::size_t{1} << n) < d) ++n;
  return (std::size_t{1} << n) == d ? n : 0;
}

DensityOperator plus_product(std::size_t n) {
  const std::size_t d = std::size_t{1} << n;
  const std::vector<Complex> psi(d, Complex(1.0 / std::sqrt(static_cast<double>(d))));
  return DensityOperator::pure(psi);
}

LindbladModel build_model(ExperimentConfig& cfg) {
  const std::string path = "/model";
  if (cfg.model.is_object()) return model_from_json(cfg.model, path);
  const std::string spec = string_at(cfg.model, path);
  if (auto n = preset_size(spec, "oat", path)) return preset_oat(*n, cfg.gamma, cfg.storage);
  if (auto n = preset_size(spec, "zero", path)) return zero_model(*n);
  if (spec == "phase") return preset_phase(cfg.storage);
  if (spec.find(':') != std::string::npos && !fs::exists(resolve_path(spec, cfg.base_dir))) {
    throw ConfigError(path, "unknown model preset '" + spec + "' (expected oat:<n>, phase or zero:<n>)");
  }
  const fs::path file = resolve_path(spec, cfg.base_dir);
  cfg.model = fs::absolute(file).lexically_normal().string();
  const json doc = read_json_file(file, path);
  try {
    return model_from_json(doc, "");
  } catch (const ConfigError& e) {
    throw ConfigError(path + e.path(), file.string() + ": " + e.what());
  }
}

DensityOperator build_state(ExperimentConfig& cfg, std::size_t dim) {
  const std::string path = "/state";
  const std::size_t n = qubits_of(dim);
  if (cfg.state.is_null()) {
    if (n == 0) throw ConfigError(path, "no default state for dimension " + std::to_string(dim));
    cfg.state = cfg.model == json("phase") ? std::string("plus:1") : "all-zero-pure:" + std::to_string(n);
  }
  auto checked = [&](DensityOperator rho) {
    if (rho.dimension() != dim) {
      throw ConfigError(path, "state dimension " + std::to_string(rho.dimension()) + " does not match model dimension " +
                                  std::to_string(dim));
    }
    return rho;
  };
  try {
    if (cfg.state.is_array()) return checked(DensityOperator(io::matrix_from_json(cfg.state, path)));
    const std::string spec = string_at(cfg.state, path);
    if (auto k = preset_size(spec, "all-zero-pure", path)) return checked(DensityOperator::all_zero(*k));
    if (auto k = preset_size(spec, "plus", path)) return checked(plus_product(*k));
    if (auto k = preset_size(spec, "maximally-mixed", path))
      return checked(DensityOperator::maximally_mixed(std::size_t{1} << *k));
    if (spec.find(':') != std::string::npos && !fs::exists(resolve_path(spec, cfg.base_dir))) {
      throw ConfigError(path, "unknown state preset '" + spec + "'");
    }
    const fs::path file = resolve_path(spec, cfg.base_dir);
    cfg.state = fs::absolute(file).lexically_normal().string();
    return checked(DensityOperator(io::matrix_from_json(read_json_file(file, path), path)));
  } catch (const InvalidState& e) {
    throw ConfigError(path, e.what());
  }
}

Generator build_generator(ExperimentConfig& cfg, std::size_t dim) {
  const std::string path = "/generator";
  const std::size_t n = qubits_of(dim);
  if (cfg.generator.is_null() || cfg.generator == json("Sz")) {
    if (n == 0) throw ConfigError(path, "no default generator for dimension " + std::to_string(dim));
    cfg.generator = "Sz:" + std::to_string(n);
  }
  try {
    if (cfg.generator.is_array() || cfg.generator.is_object()) {
      return Generator(io::operator_from_json(cfg.generator, path));
    }
    const std::string spec = string_at(cfg.generator, path);
    if (auto k = preset_size(spec, "Sz", path)) {
      if (*k != n) throw ConfigError(path, spec + " does not match a " + std::to_string(n) + "-qubit model");
      return Generator::collective_sz(*k);
    }
    if (spec.find(':') != std::string::npos && !fs::exists(resolve_path(spec, cfg.base_dir))) {
      throw ConfigError(path, "unknown generator preset '" + spec + "'");
    }
    const fs::path file = resolve_path(spec, cfg.base_dir);
    cfg.generator = fs::absolute(file).lexically_normal().string();
    Generator g(io::operator_from_json(read_json_file(file, path), path));
    if (g.dimension() != dim) throw ConfigError(path, "generator dimension does not match the model");
    return g;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

json stats_json(const SolverStats& s) {
  return {{"accepted", s.accepted}, {"rejected", s.rejected}, {"rhs_evals", s.rhs_evals}, {"trace_drift", s.trace_drift}};
}

json eigen_json(const EigDiagnostics& e) {
  return {{"cluster_count", e.cluster_count}, {"largest_cluster", e.largest_cluster},
          {"min_gap", std::isfinite(e.min_gap) ? json(e.min_gap) : json(nullptr)},
          {"residual", e.residual}, {"orthogonality", e.orthogonality}};
}

json adjoint_json(const AdjointDiagnostics& a) {
  return {{"forward_steps", a.forward_steps},
          {"reverse_steps", a.reverse_steps},
          {"segments", a.segments},
          {"rhs_evals", a.rhs_evals},
          {"adjoint_evals", a.adjoint_evals},
          {"peak_retained_states", a.peak_retained_states},
          {"longest_segment", a.longest_segment},
          {"checkpoints", a.checkpoints},
          {"fd_assisted", a.fd_assisted},
          {"trace_drift", a.trace_drift}};
}

json iterate_json(const OptIterate& it) {
  return {{"iteration", it.iteration}, {"x", it.x},       {"F", it.value},
          {"grad_norm", it.gradient_norm}, {"step", it.step}, {"evaluations", it.evaluations}};
}

QfiOptions qfi_options(const ExperimentConfig& cfg) {
  QfiOptions o;
  o.convention = cfg.convention;
  return o;
}

std::string default_cost(const ExperimentConfig& cfg) {
  return cfg.model == json("phase") ? "re-rho:0,1" : "qfi";
}

// "re-rho:i,j"
std::optional<std::pair<std::size_t, std::size_t>> element_cost(const std::string& spec, std::size_t dim) {
  if (spec == "qfi") return std::nullopt;
  const std::string path = "/grad_check/cost";
  if (spec.rfind("re-rho:", 0) != 0) throw ConfigError(path, "expected \"qfi\" or \"re-rho:i,j\", got '" + spec + "'");
  const auto values = parse_number_list(spec.substr(7), path);
  if (values.size() != 2) throw ConfigError(path, "expected two indices");
  for (double v : values) {
    if (v < 0 || v != std::floor(v) || v >= static_cast<double>(dim)) throw ConfigError(path, "index out of range");
  }
  return std::make_pair(static_cast<std::size_t>(values[0]), static_cast<std::size_t>(values[1]));
}

json solve_result(const Experiment& e, const ExperimentConfig& cfg) {
  const SolveResult r = integrate(e.model, e.params, e.rho0, cfg.span, cfg.solver);
  const CMatrix& rho = r.final_state.matrix();
  return {{"solver", stats_json(r.stats)},
          {"final_state", io::to_json(rho)},
          {"trace", trace(rho).real()},
          {"trace_drift", r.stats.trace_drift},
          {"purity", r.final_state.purity()},
          {"min_eigenvalue", r.final_state.min_eigenvalue()},
          {"checkpoints", r.checkpoints.size()}};
}

json qfi_result(const Experiment& e, const ExperimentConfig& cfg) {
  const QfiReport r =
      qfi_of_params(e.model, e.params, e.rho0, cfg.span, e.generator, cfg.solver, cfg.want_gradient, qfi_options(cfg));
  json out = {{"F", r.value},
              {"skipped_pairs", r.skipped_pairs},
              {"clusters", r.clusters},
              {"largest_cluster", r.largest_cluster},
              {"convention", to_string(r.convention)}};
  if (r.gradient) out["grad"] = *r.gradient;
  if (r.solver) out["solver"] = stats_json(*r.solver);
  if (r.eigen) out["eigen"] = eigen_json(*r.eigen);
  if (r.adjoint) out["adjoint"] = adjoint_json(*r.adjoint);
  return out;
}

json grad_check_result(const Experiment& e, const ExperimentConfig& cfg) {
  const auto element = element_cost(cfg.grad_check.cost, e.model.dimension());
  const GradientCheckReport r =
      element ? gradient_check(e.model, e.params, e.rho0, cfg.span, element_real_part(element->first, element->second),
                               cfg.solver, cfg.grad_check.h, cfg.grad_check.tolerance)
              : gradient_check(e.model, e.params, e.rho0, cfg.span, e.generator, cfg.solver, cfg.grad_check.h,
                               cfg.grad_check.tolerance, qfi_options(cfg));
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"parameter", row.parameter},
                    {"adjoint", row.adjoint},
                    {"forward", row.forward},
                    {"finite_difference", row.finite_difference},
                    {"max_relative_error", row.max_relative_error}});
  }
  return {{"cost", cfg.grad_check.cost},
          {"value", r.value},
          {"rows", rows},
          {"max_relative_error", r.max_relative_error},
          {"adjoint_forward_error", r.adjoint_forward_error},
          {"tolerance", r.tolerance},
          {"step", r.step},
          {"passed", r.passed}};
}

json optimize_result(const Experiment& e, const ExperimentConfig& cfg, std::vector<std::string>& lines) {
  json runs = json::array();
  std::size_t best = 0;
  double best_value = -INFINITY;
  std::vector<double> best_x;
  std::size_t total_evaluations = 0;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    const std::vector<double> start = r == 0 ? e.params : random_start(e.params.size(), cfg.seed + r);
    OptConfig opt = cfg.optimizer;
    opt.seed = cfg.seed + r;
    const OptResult res =
        maximize_qfi(e.model, start, e.rho0, cfg.span, e.generator, cfg.solver, opt, qfi_options(cfg));
    json iterates = json::array();
    for (const auto& it : res.trace.iterates) {
      json line = iterate_json(it);
      line["restart"] = r;
      lines.push_back(line.dump());
      iterates.push_back(iterate_json(it));
    }
    runs.push_back({{"restart", r},
                    {"start", start},
                    {"x", res.x},
                    {"F", res.value},
                    {"status", to_string(res.trace.status)},
                    {"iterations", res.trace.iterates.size() - 1},
                    {"evaluations", res.trace.evaluations},
                    {"iterates", iterates}});
    total_evaluations += res.trace.evaluations;
    if (res.value > best_value) {
      best_value = res.value;
      best = r;
      best_x = res.x;
    }
  }
  json summary = {{"restart", best}, {"x", best_x}, {"F", best_value}, {"evaluations", total_evaluations}};
  lines.push_back(json{{"summary", summary}}.dump());
  return {{"best", summary}, {"runs", runs}};
}

json emit_plots_result(const Experiment& e, const ExperimentConfig& cfg, std::string& csv) {
  if (cfg.plots.kind == "trace") {
    if (cfg.plots.input.empty()) throw ConfigError("/plots/input", "a trace file is required for kind \"trace\"");
    const fs::path file = resolve_path(cfg.plots.input, cfg.base_dir);
    std::ifstream in(file);
    if (!in) throw ConfigError("/plots/input", "cannot open '" + file.string() + "'");
    const auto iterates = read_trace(in);
    csv = trace_csv(iterates);
    return {{"kind", "trace"}, {"rows", iterates.size()}, {"csv", cfg.plots.csv}};
  }
  const auto states = trajectory(e.model, e.params, e.rho0, cfg.span, cfg.solver);
  std::vector<TrajectoryRow> rows;
  for (const auto& [t, rho] : states) {
    rows.push_back({t, trace(rho).real(), hs_inner(rho, rho).real(), eigh(rho).eigenvalues.front()});
  }
  csv = trajectory_csv(rows);
  return {{"kind", "trajectory"}, {"rows", rows.size()}, {"csv", cfg.plots.csv}};
}

json error_json(const char* kind, const std::string& message) { return {{"kind", kind}, {"message", message}}; }

void write_file(const fs::path& file, const std::string& content) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + file.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write to '" + file.string() + "' failed");
}

}  // namespace

Command command_from_string(const std::string& name) {
  if (name == "solve") return Command::solve;
  if (name == "qfi") return Command::qfi;
  if (name == "grad-check") return Command::grad_check;
  if (name == "optimize") return Command::optimize;
  if (name == "emit-plots") return Command::emit_plots;
  throw ConfigError("", "unknown command '" + name + "'");
}

const char* to_string(Command c) noexcept {
  switch (c) {
    case Command::solve:
      return "solve";
    case Command::qfi:
      return "qfi";
    case Command::grad_check:
      return "grad-check";
    case Command::optimize:
      return "optimize";
    case Command::emit_plots:
      return "emit-plots";
  }
  return "unknown";
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
  check_keys(j, "", {"model", "gamma", "storage", "state", "params", "t_span", "solver", "generator", "qfi",
                     "optimizer", "grad_check", "plots", "seed", "output", "trace_output"});
  ExperimentConfig c;
  c.base_dir = base_dir;
  if (j.contains("model")) {
    c.model = j["model"];
    if (!c.model.is_string() && !c.model.is_object()) throw ConfigError("/model", "expected a preset, a path or an object");
  }
  if (j.contains("gamma")) {
    c.gamma = number_at(j["gamma"], "/gamma");
    if (c.gamma < 0.0) throw ConfigError("/gamma", "dissipation rate must be non-negative");
  }
  if (j.contains("storage")) {
    const std::string s = string_at(j["storage"], "/storage");
    if (s != "sparse" && s != "dense") throw ConfigError("/storage", "expected \"sparse\" or \"dense\"");
    c.storage = s == "dense" ? Storage::dense : Storage::sparse;
  }
  if (j.contains("state")) c.state = j["state"];
  if (j.contains("params")) {
    const json& p = j["params"];
    c.params = p.is_string() ? params_from_file(resolve_path(p.get<std::string>(), base_dir), "/params")
                             : params_from_json(p, "/params");
  }
  if (j.contains("t_span")) {
    const json& t = j["t_span"];
    if (!t.is_array() || t.size() != 2) throw ConfigError("/t_span", "expected [t0, T]");
    c.span = {number_at(t[0], "/t_span/0"), number_at(t[1], "/t_span/1")};
    if (!(c.span.end > c.span.start)) throw ConfigError("/t_span", "T must exceed t0");
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    check_keys(s, "/solver", {"rtol", "atol", "initial_step", "max_steps", "checkpoints"});
    if (s.contains("rtol")) c.solver.rtol = number_at(s["rtol"], "/solver/rtol");
    if (s.contains("atol")) c.solver.atol = number_at(s["atol"], "/solver/atol");
    if (s.contains("initial_step")) c.solver.initial_step = number_at(s["initial_step"], "/solver/initial_step");
    if (s.contains("max_steps")) c.solver.max_steps = count_at(s["max_steps"], "/solver/max_steps");
    if (s.contains("checkpoints")) c.solver.checkpoints = count_at(s["checkpoints"], "/solver/checkpoints");
  }
  try {
    c.solver.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("/solver", e.what());
  }
  if (j.contains("generator")) c.generator = j["generator"];
  if (j.contains("qfi")) {
    const json& q = j["qfi"];
    check_keys(q, "/qfi", {"convention", "gradient"});
    if (q.contains("convention")) {
      try {
        c.convention = convention_from_string(string_at(q["convention"], "/qfi/convention"));
      } catch (const InvalidArgument& e) {
        throw ConfigError("/qfi/convention", e.what());
      }
    }
    if (q.contains("gradient")) c.want_gradient = bool_at(q["gradient"], "/qfi/gradient");
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    check_keys(o, "/optimizer", {"max_iterations", "initial_step", "backtracking", "armijo", "gradient_tolerance",
                                 "max_halvings", "restarts"});
    OptConfig& opt = c.optimizer;
    if (o.contains("max_iterations")) opt.max_iterations = count_at(o["max_iterations"], "/optimizer/max_iterations");
    if (o.contains("initial_step")) opt.initial_step = number_at(o["initial_step"], "/optimizer/initial_step");
    if (o.contains("backtracking")) opt.backtracking = number_at(o["backtracking"], "/optimizer/backtracking");
    if (o.contains("armijo")) opt.armijo = number_at(o["armijo"], "/optimizer/armijo");
    if (o.contains("gradient_tolerance"))
      opt.gradient_tolerance = number_at(o["gradient_tolerance"], "/optimizer/gradient_tolerance");
    if (o.contains("max_halvings")) opt.max_halvings = count_at(o["max_halvings"], "/optimizer/max_halvings");
    if (o.contains("restarts")) c.restarts = count_at(o["restarts"], "/optimizer/restarts");
    if (c.restarts < 1) throw ConfigError("/optimizer/restarts", "must be at least 1");
  }
  try {
    c.optimizer.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("/optimizer", e.what());
  }
  if (j.contains("grad_check")) {
    const json& g = j["grad_check"];
    check_keys(g, "/grad_check", {"h", "tolerance", "cost"});
    if (g.contains("h")) c.grad_check.h = number_at(g["h"], "/grad_check/h");
    if (g.contains("tolerance")) c.grad_check.tolerance = number_at(g["tolerance"], "/grad_check/tolerance");
    if (g.contains("cost")) c.grad_check.cost = string_at(g["cost"], "/grad_check/cost");
    if (!(c.grad_check.h > 0.0)) throw ConfigError("/grad_check/h", "must be positive");
    if (!(c.grad_check.tolerance > 0.0)) throw ConfigError("/grad_check/tolerance", "must be positive");
  }
  if (j.contains("plots")) {
    const json& p = j["plots"];
    check_keys(p, "/plots", {"kind", "input", "csv"});
    if (p.contains("kind")) c.plots.kind = string_at(p["kind"], "/plots/kind");
    if (c.plots.kind != "trajectory" && c.plots.kind != "trace") {
      throw ConfigError("/plots/kind", "expected \"trajectory\" or \"trace\"");
    }
    if (p.contains("input")) c.plots.input = string_at(p["input"], "/plots/input");
    if (p.contains("csv")) c.plots.csv = string_at(p["csv"], "/plots/csv");
  }
  if (j.contains("seed")) c.seed = count_at(j["seed"], "/seed");
  if (j.contains("output")) c.output = string_at(j["output"], "/output");
  if (j.contains("trace_output")) c.trace_output = string_at(j["trace_output"], "/trace_output");
  return c;
}

ExperimentConfig load_config(const fs::path& file) {
  const json j = read_json_file(file, "");
  return parse_config(j, fs::absolute(file).parent_path());
}

Experiment resolve(ExperimentConfig& cfg) {
  LindbladModel model = build_model(cfg);
  const std::size_t dim = model.dimension();
  DensityOperator rho0 = build_state(cfg, dim);
  Generator g = build_generator(cfg, dim);
  if (!cfg.params) cfg.params = random_start(model.parameter_count(), cfg.seed);
  if (cfg.params->size() != model.parameter_count()) {
    throw ConfigError("/params", "expected " + std::to_string(model.parameter_count()) + " parameters, got " +
                                     std::to_string(cfg.params->size()));
  }
  if (cfg.grad_check.cost.empty()) cfg.grad_check.cost = default_cost(cfg);
  (void)element_cost(cfg.grad_check.cost, dim);
  if (cfg.solver.checkpoints == 0) cfg.solver.checkpoints = cfg.solver.resolved_checkpoints();
  if (cfg.trace_output.empty() && !cfg.output.empty()) {
    cfg.trace_output = fs::path(cfg.output).replace_extension(".trace.jsonl").string();
  }
  std::vector<double> params = *cfg.params;
  return Experiment{std::move(model), std::move(rho0), std::move(g), std::move(params)};
}

json echo(const ExperimentConfig& c) {
  json j;
  j["model"] = c.model;
  j["gamma"] = c.gamma;
  j["storage"] = c.storage == Storage::dense ? "dense" : "sparse";
  if (!c.state.is_null()) j["state"] = c.state;
  if (c.params) j["params"] = *c.params;
  j["t_span"] = {c.span.start, c.span.end};
  j["solver"] = {{"rtol", c.solver.rtol},
                 {"atol", c.solver.atol},
                 {"initial_step", c.solver.initial_step},
                 {"max_steps", c.solver.max_steps},
                 {"checkpoints", c.solver.checkpoints}};
  if (!c.generator.is_null()) j["generator"] = c.generator;
  j["qfi"] = {{"convention", to_string(c.convention)}, {"gradient", c.want_gradient}};
  j["optimizer"] = {{"max_iterations", c.optimizer.max_iterations},
                    {"initial_step", c.optimizer.initial_step},
                    {"backtracking", c.optimizer.backtracking},
                    {"armijo", c.optimizer.armijo},
                    {"gradient_tolerance", c.optimizer.gradient_tolerance},
                    {"max_halvings", c.optimizer.max_halvings},
                    {"restarts", c.restarts}};
  json gc = {{"h", c.grad_check.h}, {"tolerance", c.grad_check.tolerance}};
  if (!c.grad_check.cost.empty()) gc["cost"] = c.grad_check.cost;
  j["grad_check"] = gc;
  json plots = {{"kind", c.plots.kind}};
  if (!c.plots.input.empty()) plots["input"] = c.plots.input;
  if (!c.plots.csv.empty()) plots["csv"] = c.plots.csv;
  j["plots"] = plots;
  j["seed"] = c.seed;
  if (!c.output.empty()) j["output"] = c.output;
  if (!c.trace_output.empty()) j["trace_output"] = c.trace_output;
  return j;
}

RunResult run(Command command, ExperimentConfig config) {
  const auto start = Clock::now();
  RunResult out;
  json& report = out.report;
  report["schema"] = kSchema;
  report["version"] = kVersion;
  report["command"] = to_string(command);
  json timing;
  try {
    Experiment e = resolve(config);
    timing["setup"] = seconds_since(start);
    report["config"] = echo(config);
    const auto stage = Clock::now();
    switch (command) {
      case Command::solve:
        report["result"] = solve_result(e, config);
        break;
      case Command::qfi:
        report["result"] = qfi_result(e, config);
        break;
      case Command::grad_check:
        report["result"] = grad_check_result(e, config);
        if (!report["result"]["passed"].get<bool>()) out.exit_code = kVerdict;
        break;
      case Command::optimize:
        report["result"] = optimize_result(e, config, out.trace_lines);
        break;
      case Command::emit_plots:
        report["result"] = emit_plots_result(e, config, out.csv);
        break;
    }
    timing[to_string(command)] = seconds_since(stage);
    report["status"] = out.exit_code == kOk ? "ok" : "failed";
  } catch (const ConfigError& err) {
    out.exit_code = kValidation;
    report["error"] = error_json("config", err.what());
    report["error"]["path"] = err.path();
  } catch (const StageError& err) {
    out.exit_code = kNumerical;
    report["error"] = error_json("numerical", err.what());
    report["error"]["stage"] = err.stage();
  } catch (const NumericalError& err) {
    out.exit_code = kNumerical;
    report["error"] = error_json("numerical", err.what());
  } catch (const InvalidArgument& err) {
    out.exit_code = kValidation;
    report["error"] = error_json("validation", err.what());
  } catch (const DimensionError& err) {
    out.exit_code = kValidation;
    report["error"] = error_json("validation", err.what());
  } catch (const std::exception& err) {
    out.exit_code = kNumerical;
    report["error"] = error_json("runtime", err.what());
  }
  if (out.exit_code == kValidation || out.exit_code == kNumerical) {
    report["status"] = "error";
    if (!report.contains("config")) report["config"] = echo(config);
  }
  timing["total"] = seconds_since(start);
  report["timing"] = timing;
  return out;
}

std::string serialize(const json& report) { return report.dump(2) + "\n"; }

json without_timing(json report) {
  report.erase("timing");
  return report;
}

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

std::string trace_csv(const std::vector<OptIterate>& iterates) {
  std::string out = "iter,F,grad_norm,step\n";
  for (const auto& it : iterates) {
    out += std::to_string(it.iteration) + "," + format_double(it.value) + "," + format_double(it.gradient_norm) + "," +
           format_double(it.step) + "\n";
  }
  return out;
}

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::string out = "t,trace_rho,purity,min_eig\n";
  for (const auto& r : rows) {
    out += format_double(r.t) + "," + format_double(r.trace) + "," + format_double(r.purity) + "," +
           format_double(r.min_eig) + "\n";
  }
  return out;
}

std::vector<OptIterate> read_trace(std::istream& in) {
  std::vector<OptIterate> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ConfigError("/plots/input", "line " + std::to_string(number) + " is not a JSON object");
    }
    if (j.contains("summary")) continue;
    try {
      OptIterate it;
      it.iteration = j.at("iteration").get<std::size_t>();
      it.x = j.at("x").get<std::vector<double>>();
      it.value = j.at("F").get<double>();
      it.gradient_norm = j.at("grad_norm").get<double>();
      it.step = j.at("step").get<double>();
      it.evaluations = j.at("evaluations").get<std::size_t>();
      out.push_back(std::move(it));
    } catch (const json::exception& e) {
      throw ConfigError("/plots/input", "line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable Lindblad dynamics and quantum Fisher information"};
  app.set_version_flag("--version", std::string(kVersion));
  std::string command;
  std::string config_file;
  std::string out_file;
  std::optional<std::uint64_t> seed;
  std::optional<double> rtol;
  std::optional<double> atol;
  std::optional<std::string> model;
  std::optional<double> gamma;
  std::optional<std::string> state;
  std::optional<std::string> params;
  std::optional<std::string> t_span;
  std::optional<std::string> generator;
  std::optional<std::size_t> checkpoints;
  std::optional<std::string> convention;
  bool grad = false;
  std::optional<std::string> cost;
  std::optional<double> fd_step;
  std::optional<double> tolerance;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> restarts;
  std::optional<std::string> trace_file;
  std::optional<std::string> kind;
  std::optional<std::string> input;
  std::optional<std::string> csv;

  app.add_option("command", command, "solve | qfi | grad-check | optimize | emit-plots")
      ->required()
      ->check(CLI::IsMember({"solve", "qfi", "grad-check", "optimize", "emit-plots"}));
  app.add_option("--config", config_file, "experiment configuration (JSON)");
  app.add_option("--out", out_file, "report path (default: standard output)");
  app.add_option("--seed", seed, "seed for random starts");
  app.add_option("--rtol", rtol, "relative tolerance");
  app.add_option("--atol", atol, "absolute tolerance");
  app.add_option("--model", model, "oat:<n> | phase | zero:<n> | model file");
  app.add_option("--gamma", gamma, "decay rate for preset models");
  app.add_option("--state", state, "all-zero-pure:<n> | plus:<n> | maximally-mixed:<n> | matrix file");
  app.add_option("--params", params, "comma separated values or a file");
  app.add_option("--t-span", t_span, "t0,T");
  app.add_option("--generator", generator, "Sz | Sz:<n> | operator file");
  app.add_option("--checkpoints", checkpoints, "checkpoint count K");
  app.add_option("--convention", convention, "pairwise | standard");
  app.add_flag("--grad", grad, "also compute the gradient (qfi)");
  app.add_option("--cost", cost, "grad-check cost: qfi | re-rho:i,j");
  app.add_option("--fd-step", fd_step, "grad-check central-difference step");
  app.add_option("--tolerance", tolerance, "grad-check tolerance");
  app.add_option("--iterations", iterations, "optimizer iteration limit");
  app.add_option("--restarts", restarts, "optimizer random restarts");
  app.add_option("--trace", trace_file, "optimization trace output (JSON lines)");
  app.add_option("--kind", kind, "emit-plots: trajectory | trace");
  app.add_option("--input", input, "emit-plots: trace file to tabulate");
  app.add_option("--csv", csv, "emit-plots: CSV path (default: standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kValidation;
  }

  ExperimentConfig cfg;
  try {
    json j = json::object();
    fs::path base;
    if (!config_file.empty()) {
      j = read_json_file(config_file, "");
      base = fs::absolute(config_file).parent_path();
    }
    // Paths given on the command line are relative to the working directory.
    auto flag_path = [&](const std::string& spec) -> json {
      if (is_preset_name(spec)) return spec;
      return fs::absolute(spec).lexically_normal().string();
    };
    if (model) j["model"] = flag_path(*model);
    if (gamma) j["gamma"] = *gamma;
    if (state) j["state"] = flag_path(*state);
    if (generator) j["generator"] = flag_path(*generator);
    if (params) {
      const bool numeric = params->find_first_not_of("0123456789.,+-eE \t") == std::string::npos;
      if (numeric) {
        j["params"] = parse_number_list(*params, "/params");
      } else {
        j["params"] = fs::absolute(*params).lexically_normal().string();
      }
    }
    if (t_span) {
      const auto values = parse_number_list(*t_span, "/t_span");
      if (values.size() != 2) throw ConfigError("/t_span", "expected t0,T");
      j["t_span"] = values;
    }
    if (rtol) j["solver"]["rtol"] = *rtol;
    if (atol) j["solver"]["atol"] = *atol;
    if (checkpoints) j["solver"]["checkpoints"] = *checkpoints;
    if (convention) j["qfi"]["convention"] = *convention;
    if (grad) j["qfi"]["gradient"] = true;
    if (cost) j["grad_check"]["cost"] = *cost;
    if (fd_step) j["grad_check"]["h"] = *fd_step;
    if (tolerance) j["grad_check"]["tolerance"] = *tolerance;
    if (iterations) j["optimizer"]["max_iterations"] = *iterations;
    if (restarts) j["optimizer"]["restarts"] = *restarts;
    if (kind) j["plots"]["kind"] = *kind;
    if (input) j["plots"]["input"] = fs::absolute(*input).lexically_normal().string();
    if (csv) j["plots"]["csv"] = fs::absolute(*csv).lexically_normal().string();
    if (seed) j["seed"] = *seed;
    if (!out_file.empty()) j["output"] = fs::absolute(out_file).lexically_normal().string();
    if (trace_file) j["trace_output"] = fs::absolute(*trace_file).lexically_normal().string();
    cfg = parse_config(j, base);
  } catch (const ConfigError& e) {
    err << "lindbladiff: " << e.what() << "\n";
    return kValidation;
  }

  const Command cmd = command_from_string(command);
  RunResult result = run(cmd, cfg);
  if (result.report.contains("error")) err << "lindbladiff: " << result.report["error"]["message"].get<std::string>() << "\n";

  try {
    const std::string text = serialize(result.report);
    const bool csv_to_stdout = cmd == Command::emit_plots && cfg.plots.csv.empty();
    if (csv_to_stdout) out << result.csv;
    if (cmd == Command::emit_plots && !cfg.plots.csv.empty() && result.exit_code == kOk) {
      write_file(cfg.plots.csv, result.csv);
    }
    if (!cfg.output.empty()) {
      write_file(cfg.output, text);
    } else if (!csv_to_stdout) {
      out << text;
    }
    const std::string trace_path = result.report.contains("config") && result.report["config"].contains("trace_output")
                                       ? result.report["config"]["trace_output"].get<std::string>()
                                       : std::string();
    if (cmd == Command::optimize && !trace_path.empty() && !result.trace_lines.empty()) {
      std::string lines;
      for (const auto& l : result.trace_lines) lines += l + "\n";
      write_file(trace_path, lines);
    }
  } catch (const std::exception& e) {
    err << "lindbladiff: " << e.what() << "\n";
    return kNumerical;
  }
  return result.exit_code;
}

}  // namespace lindbladiff::cli
