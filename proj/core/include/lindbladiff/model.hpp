#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lindbladiff/linalg.hpp"

namespace lindbladiff {

/// One term of a Hamiltonian that is linear in the parameters: coefficient * matrix, where the
/// coefficient is either a constant or a single parameter x_k.
struct LinearTerm {
  std::optional<std::size_t> parameter;
  double constant = 1.0;
  Operator matrix;
};

/// H(t, x) with an optional analytic dH/dx_k. Without one, central differences with
/// h = 1e-6 * max(1, |x_k|) are used and `has_analytic_derivative()` is false.
class HamiltonianSchedule {
 public:
  using Rule = std::function<Operator(double t, std::span<const double> x)>;
  using DerivativeRule = std::function<Operator(double t, std::span<const double> x, std::size_t k)>;

  HamiltonianSchedule(std::size_t dimension, std::size_t parameter_count, Rule rule,
                      std::optional<DerivativeRule> derivative = std::nullopt);

  /// Time-independent H(x) = sum_m c_m(x) A_m with analytic derivative.
  static HamiltonianSchedule linear(std::size_t dimension, std::size_t parameter_count, std::vector<LinearTerm> terms);
  /// x-independent constant operator.
  static HamiltonianSchedule constant(Operator h);

  Operator evaluate(double t, std::span<const double> x) const;
  Operator parameter_derivative(double t, std::span<const double> x, std::size_t k) const;

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t parameter_count() const noexcept { return parameter_count_; }
  bool has_analytic_derivative() const noexcept { return derivative_.has_value(); }

 private:
  std::size_t dimension_;
  std::size_t parameter_count_;
  Rule rule_;
  std::optional<DerivativeRule> derivative_;
};

struct JumpChannel {
  double rate = 0.0;
  Operator op;
};

/// Parameterized Lindblad generator: Hamiltonian schedule plus x-independent jump channels.
class LindbladModel {
 public:
  /// Validates channel shapes and rates and that H is Hermitian at (t = 0, x = 0).
  LindbladModel(HamiltonianSchedule hamiltonian, std::vector<JumpChannel> channels);

  const HamiltonianSchedule& hamiltonian() const noexcept { return hamiltonian_; }
  const std::vector<JumpChannel>& channels() const noexcept { return channels_; }
  std::size_t dimension() const noexcept { return hamiltonian_.dimension(); }
  std::size_t parameter_count() const noexcept { return hamiltonian_.parameter_count(); }
  /// sum_j gamma_j J_j^dagger J_j
  const Operator& decay_operator() const noexcept { return decay_; }

 private:
  HamiltonianSchedule hamiltonian_;
  std::vector<JumpChannel> channels_;
  Operator decay_;
};

/// -i[H(t,x), rho] + sum_j gamma_j (J_j rho J_j^dagger - 1/2 {J_j^dagger J_j, rho}).
/// `rho` need not be a valid state; only shape and finiteness are checked.
CMatrix lindblad_rhs(double t, const CMatrix& rho, const LindbladModel& model, std::span<const double> x);

/// Same generator with H already evaluated.
CMatrix apply_liouvillian(const Operator& h, const CMatrix& rho, const LindbladModel& model);

/// -i[dH/dx_k(t,x), rho]. Jump channels do not depend on x.
CMatrix rhs_parameter_derivative(double t, const CMatrix& rho, const LindbladModel& model, std::span<const double> x,
                                 std::size_t k);

enum class Storage { sparse, dense };

/// One-axis twisting with decay: H = x0 Sz^2 + x1 Sx, channel (gamma, sigma^- on qubit i) for each qubit.
/// Two parameters; 1 <= n <= 10.
LindbladModel preset_oat(std::size_t n, double gamma, Storage storage = Storage::sparse);

/// Single qubit phase model H = x0 * sigma_z / 2, no channels.
LindbladModel preset_phase(Storage storage = Storage::sparse);

/// Parses a model definition:
/// {"dimension": d,
///  "hamiltonian": {"kind": "explicit", "terms": [{"coefficient": "param:k" | number, "matrix": literal}]}
///               | {"kind": "preset_oat", "qubits": n, "gamma": g},
///  "channels": [{"gamma": g, "matrix": literal}]}
/// Errors are ConfigError with a JSON pointer rooted at `path`.
LindbladModel model_from_json(const nlohmann::json& j, const std::string& path = "");

}  // namespace lindbladiff
