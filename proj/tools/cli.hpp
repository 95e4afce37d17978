#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lindbladiff/ivp.hpp"
#include "lindbladiff/model.hpp"
#include "lindbladiff/optimizer.hpp"
#include "lindbladiff/qfi.hpp"
#include "lindbladiff/state.hpp"

namespace lindbladiff::cli {

inline constexpr const char* kSchema = "lindbladiff-report/1";

enum class Command { solve, qfi, grad_check, optimize, emit_plots };

Command command_from_string(const std::string& name);
const char* to_string(Command c) noexcept;

enum ExitCode : int { kOk = 0, kValidation = 2, kNumerical = 3, kVerdict = 4 };

struct GradCheckSettings {
  double h = 1e-6;
  double tolerance = 1e-4;
  /// "qfi" or "re-rho:i,j"; empty picks "re-rho:0,1" for the phase preset and "qfi" otherwise.
  std::string cost;
};

struct PlotSettings {
  /// "trajectory" (solve the configured experiment) or "trace" (read an optimization JSONL trace).
  std::string kind = "trajectory";
  std::string input;
  /// Empty writes the CSV to standard output.
  std::string csv;
};

/// Everything a run needs. Specs stay in their JSON form until `resolve`.
///   model:     "oat:<n>" | "phase" | "zero:<n>" | file path | inline model object
///   state:     "all-zero-pure:<n>" | "plus:<n>" | "maximally-mixed:<n>" | file path | matrix literal
///   generator: "Sz:<n>" | "Sz" | file path | matrix literal
struct ExperimentConfig {
  nlohmann::json model = "oat:2";
  double gamma = 0.0;
  Storage storage = Storage::sparse;
  nlohmann::json state;
  std::optional<std::vector<double>> params;
  TimeSpan span;
  SolveConfig solver;
  nlohmann::json generator;
  QfiConvention convention = QfiConvention::pairwise;
  bool want_gradient = false;
  OptConfig optimizer;
  std::size_t restarts = 1;
  GradCheckSettings grad_check;
  PlotSettings plots;
  std::uint64_t seed = 0;
  std::string output;
  /// Optimization trace (JSON lines); empty derives "<output stem>.trace.jsonl" when an output is set.
  std::string trace_output;
  /// Relative file references are taken from here.
  std::filesystem::path base_dir;
};

/// Throws ConfigError with a JSON pointer into `j` for unknown keys and bad values.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& file);

struct Experiment {
  LindbladModel model;
  DensityOperator rho0;
  Generator generator;
  std::vector<double> params;
};

/// Builds the model, state and generator, and writes every defaulted spec back into `config`.
Experiment resolve(ExperimentConfig& config);

/// Resolved configuration; parse_config(echo(c)) reproduces the run.
nlohmann::json echo(const ExperimentConfig& config);

struct RunResult {
  int exit_code = kOk;
  nlohmann::json report;
  /// JSON lines of the optimization trace (optimize only).
  std::vector<std::string> trace_lines;
  /// emit-plots output.
  std::string csv;
};

/// Runs one pipeline. Errors are reported in the result, never thrown.
RunResult run(Command command, ExperimentConfig config);

/// Pretty-printed report with a trailing newline. Keys are sorted, so equal reports serialize identically.
std::string serialize(const nlohmann::json& report);

/// Copy of the report with the wall-clock fields removed.
nlohmann::json without_timing(nlohmann::json report);

std::string format_double(double v);

/// iter,F,grad_norm,step
std::string trace_csv(const std::vector<OptIterate>& iterates);

struct TrajectoryRow {
  double t = 0.0;
  double trace = 0.0;
  double purity = 0.0;
  double min_eig = 0.0;
};

/// t,trace_rho,purity,min_eig
std::string trajectory_csv(const std::vector<TrajectoryRow>& rows);

/// Reads iterates back from a JSON-lines trace; the summary record is skipped.
std::vector<OptIterate> read_trace(std::istream& in);

/// Full command line: lindbladiff <command> [--config FILE] [overrides]. Writes the report to --out (or `out`).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lindbladiff::cli
