#include "lindbladiff/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include "lindbladiff/errors.hpp"
#include "lindbladiff/io.hpp"
#include "lindbladiff/operators.hpp"

namespace lindbladiff {
namespace {

constexpr double kHermitianTolerance = 1e-12;

Operator difference_quotient(const Operator& plus, const Operator& minus, double step) {
  CMatrix d = plus.to_dense();
  d -= minus.to_dense();
  d *= 1.0 / (2.0 * step);
  return d;
}

void check_square(const Operator& op, std::size_t dim, const std::string& what) {
  if (op.rows() != dim || op.cols() != dim) {
    throw DimensionError(what + ": operator " + op.shape_string() + " does not match dimension " + std::to_string(dim));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// HamiltonianSchedule

HamiltonianSchedule::HamiltonianSchedule(std::size_t dimension, std::size_t parameter_count, Rule rule,
                                         std::optional<DerivativeRule> derivative)
    : dimension_(dimension), parameter_count_(parameter_count), rule_(std::move(rule)), derivative_(std::move(derivative)) {
  if (dimension_ == 0) throw InvalidArgument("HamiltonianSchedule: zero dimension");
  if (!rule_) throw InvalidArgument("HamiltonianSchedule: empty evaluation rule");
  if (derivative_ && !*derivative_) derivative_.reset();
}

HamiltonianSchedule HamiltonianSchedule::linear(std::size_t dimension, std::size_t parameter_count,
                                                std::vector<LinearTerm> terms) {
  if (terms.empty()) throw InvalidArgument("linear Hamiltonian: no terms");
  for (std::size_t m = 0; m < terms.size(); ++m) {
    check_square(terms[m].matrix, dimension, "linear Hamiltonian term " + std::to_string(m));
    if (!is_hermitian(terms[m].matrix, kHermitianTolerance)) {
      throw InvalidArgument("linear Hamiltonian term " + std::to_string(m) + " is not Hermitian");
    }
    if (terms[m].parameter && *terms[m].parameter >= parameter_count) {
      throw InvalidArgument("linear Hamiltonian term " + std::to_string(m) + " references parameter " +
                            std::to_string(*terms[m].parameter) + " of " + std::to_string(parameter_count));
    }
  }
  auto shared = std::make_shared<const std::vector<LinearTerm>>(std::move(terms));
  std::vector<Operator> ops;
  for (const auto& t : *shared) ops.push_back(t.matrix);
  auto matrices = std::make_shared<const std::vector<Operator>>(std::move(ops));

  Rule rule = [shared, matrices](double, std::span<const double> x) {
    std::vector<double> coeffs;
    coeffs.reserve(shared->size());
    for (const auto& t : *shared) coeffs.push_back(t.parameter ? x[*t.parameter] : t.constant);
    return linear_combination(coeffs, *matrices);
  };
  DerivativeRule derivative = [shared, matrices](double, std::span<const double>, std::size_t k) {
    std::vector<double> coeffs;
    coeffs.reserve(shared->size());
    for (const auto& t : *shared) coeffs.push_back(t.parameter && *t.parameter == k ? 1.0 : 0.0);
    return linear_combination(coeffs, *matrices);
  };
  return HamiltonianSchedule(dimension, parameter_count, std::move(rule), std::move(derivative));
}

HamiltonianSchedule HamiltonianSchedule::constant(Operator h) {
  const std::size_t dim = h.rows();
  std::vector<LinearTerm> terms;
  terms.push_back({std::nullopt, 1.0, std::move(h)});
  return linear(dim, 0, std::move(terms));
}

Operator HamiltonianSchedule::evaluate(double t, std::span<const double> x) const {
  if (x.size() != parameter_count_) {
    throw DimensionError("Hamiltonian: expected " + std::to_string(parameter_count_) + " parameters, got " +
                         std::to_string(x.size()));
  }
  Operator h = rule_(t, x);
  check_square(h, dimension_, "Hamiltonian rule");
  return h;
}

Operator HamiltonianSchedule::parameter_derivative(double t, std::span<const double> x, std::size_t k) const {
  if (k >= parameter_count_) {
    throw InvalidArgument("Hamiltonian derivative: parameter index " + std::to_string(k) + " out of range (" +
                          std::to_string(parameter_count_) + " parameters)");
  }
  if (x.size() != parameter_count_) {
    throw DimensionError("Hamiltonian: expected " + std::to_string(parameter_count_) + " parameters, got " +
                         std::to_string(x.size()));
  }
  if (derivative_) {
    Operator d = (*derivative_)(t, x, k);
    check_square(d, dimension_, "Hamiltonian derivative rule");
    return d;
  }
  const double step = 1e-6 * std::max(1.0, std::abs(x[k]));
  std::vector<double> shifted(x.begin(), x.end());
  shifted[k] = x[k] + step;
  const Operator plus = evaluate(t, shifted);
  shifted[k] = x[k] - step;
  const Operator minus = evaluate(t, shifted);
  return difference_quotient(plus, minus, step);
}

// ---------------------------------------------------------------------------
// LindbladModel

LindbladModel::LindbladModel(HamiltonianSchedule hamiltonian, std::vector<JumpChannel> channels)
    : hamiltonian_(std::move(hamiltonian)), channels_(std::move(channels)) {
  const std::size_t dim = hamiltonian_.dimension();
  std::vector<double> rates;
  std::vector<Operator> products;
  for (std::size_t j = 0; j < channels_.size(); ++j) {
    const auto& ch = channels_[j];
    if (!(ch.rate >= 0.0) || !std::isfinite(ch.rate)) {
      throw InvalidArgument("jump channel " + std::to_string(j) + ": rate must be finite and non-negative");
    }
    check_square(ch.op, dim, "jump channel " + std::to_string(j));
    const Operator adj = hermitian_adjoint(ch.op);
    if (ch.op.is_sparse()) {
      products.emplace_back(CSparse::from_dense(matmul(adj, ch.op.to_dense())));
    } else {
      products.emplace_back(matmul(adj, ch.op.to_dense()));
    }
    rates.push_back(ch.rate);
  }
  if (products.empty()) {
    decay_ = CSparse(dim, dim, {});
  } else {
    decay_ = linear_combination(rates, products);
  }
  const std::vector<double> origin(hamiltonian_.parameter_count(), 0.0);
  if (!is_hermitian(hamiltonian_.evaluate(0.0, origin), kHermitianTolerance)) {
    throw InvalidArgument("Hamiltonian is not Hermitian at t = 0, x = 0");
  }
}

CMatrix apply_liouvillian(const Operator& h, const CMatrix& rho, const LindbladModel& model) {
  CMatrix out = commutator(h, rho);
  out *= -kI;
  for (const auto& ch : model.channels()) {
    if (ch.rate == 0.0) continue;
    const CMatrix jr = matmul(ch.op, rho);
    // J rho J^dagger = (J (J rho)^dagger)^dagger
    out.add_scaled(ch.rate, matmul(ch.op, jr.adjoint()).adjoint());
  }
  if (!model.channels().empty()) out.add_scaled(-0.5, anticommutator(model.decay_operator(), rho));
  return out;
}

CMatrix lindblad_rhs(double t, const CMatrix& rho, const LindbladModel& model, std::span<const double> x) {
  if (rho.rows() != model.dimension() || rho.cols() != model.dimension()) {
    throw DimensionError("lindblad_rhs: state " + rho.shape_string() + " for model dimension " +
                         std::to_string(model.dimension()));
  }
  if (!rho.is_finite()) throw NumericalError("lindblad_rhs: non-finite state");
  return apply_liouvillian(model.hamiltonian().evaluate(t, x), rho, model);
}

CMatrix rhs_parameter_derivative(double t, const CMatrix& rho, const LindbladModel& model, std::span<const double> x,
                                 std::size_t k) {
  if (rho.rows() != model.dimension() || rho.cols() != model.dimension()) {
    throw DimensionError("rhs_parameter_derivative: state " + rho.shape_string() + " for model dimension " +
                         std::to_string(model.dimension()));
  }
  CMatrix out = commutator(model.hamiltonian().parameter_derivative(t, x, k), rho);
  out *= -kI;
  return out;
}

// ---------------------------------------------------------------------------
// Presets

LindbladModel preset_oat(std::size_t n, double gamma, Storage storage) {
  if (n < 1 || n > 10) throw InvalidArgument("preset_oat: qubit count must be in [1, 10]");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidArgument("preset_oat: gamma must be non-negative");
  const CSparse sz = ops::collective_z(n);
  const CSparse sz2 = CSparse::from_dense(matmul(Operator(sz), sz.to_dense()));
  const CSparse sx = ops::collective_x(n);
  auto stored = [storage](const CSparse& m) -> Operator {
    if (storage == Storage::dense) return m.to_dense();
    return m;
  };
  const std::size_t dim = std::size_t{1} << n;
  std::vector<LinearTerm> terms;
  terms.push_back({0, 0.0, stored(sz2)});
  terms.push_back({1, 0.0, stored(sx)});
  std::vector<JumpChannel> channels;
  for (std::size_t q = 0; q < n; ++q) channels.push_back({gamma, stored(ops::embed(ops::sigma_minus(), q, n))});
  return LindbladModel(HamiltonianSchedule::linear(dim, 2, std::move(terms)), std::move(channels));
}

LindbladModel preset_phase(Storage storage) {
  CSparse half_z = CSparse(2, 2, {{0, 0, 0.5}, {1, 1, -0.5}});
  std::vector<LinearTerm> terms;
  terms.push_back({0, 0.0, storage == Storage::dense ? Operator(half_z.to_dense()) : Operator(half_z)});
  return LindbladModel(HamiltonianSchedule::linear(2, 1, std::move(terms)), {});
}

// ---------------------------------------------------------------------------
// JSON model definitions

namespace {

using nlohmann::json;

const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + "/" + key, "missing field");
  return j[key];
}

double number_at(const json& j, const std::string& path) {
  if (!j.is_number() || !std::isfinite(j.get<double>())) throw ConfigError(path, "expected a finite number");
  return j.get<double>();
}

std::size_t count_at(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

}  // namespace

LindbladModel model_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "model definition must be an object");
  const json& ham = require(j, "hamiltonian", path);
  const std::string ham_path = path + "/hamiltonian";
  const json& kind_json = require(ham, "kind", ham_path);
  if (!kind_json.is_string()) throw ConfigError(ham_path + "/kind", "expected a string");
  const std::string kind = kind_json.get<std::string>();

  if (kind == "preset_oat") {
    const std::size_t n = count_at(require(ham, "qubits", ham_path), ham_path + "/qubits");
    const double gamma = ham.contains("gamma") ? number_at(ham["gamma"], ham_path + "/gamma") : 0.0;
    if (gamma < 0.0) throw ConfigError(ham_path + "/gamma", "dissipation rate must be non-negative");
    if (n < 1 || n > 10) throw ConfigError(ham_path + "/qubits", "qubit count must be in [1, 10]");
    if (j.contains("dimension") && count_at(j["dimension"], path + "/dimension") != (std::size_t{1} << n)) {
      throw ConfigError(path + "/dimension", "does not match 2^qubits");
    }
    return preset_oat(n, gamma);
  }
  if (kind != "explicit") throw ConfigError(ham_path + "/kind", "unknown Hamiltonian kind '" + kind + "'");

  const std::size_t dim = count_at(require(j, "dimension", path), path + "/dimension");
  if (dim == 0) throw ConfigError(path + "/dimension", "must be positive");
  const json& terms_json = require(ham, "terms", ham_path);
  if (!terms_json.is_array() || terms_json.empty()) throw ConfigError(ham_path + "/terms", "expected a non-empty array");

  std::vector<LinearTerm> terms;
  std::size_t parameter_count = 0;
  for (std::size_t m = 0; m < terms_json.size(); ++m) {
    const std::string term_path = ham_path + "/terms/" + std::to_string(m);
    const json& term = terms_json[m];
    LinearTerm t;
    const json& coeff = require(term, "coefficient", term_path);
    if (coeff.is_string()) {
      const std::string s = coeff.get<std::string>();
      const std::string prefix = "param:";
      if (s.rfind(prefix, 0) != 0) throw ConfigError(term_path + "/coefficient", "expected \"param:k\" or a number");
      try {
        std::size_t used = 0;
        const unsigned long k = std::stoul(s.substr(prefix.size()), &used);
        if (used + prefix.size() != s.size()) throw std::invalid_argument("trailing");
        t.parameter = k;
      } catch (const std::exception&) {
        throw ConfigError(term_path + "/coefficient", "bad parameter reference '" + s + "'");
      }
      parameter_count = std::max(parameter_count, *t.parameter + 1);
    } else {
      t.constant = number_at(coeff, term_path + "/coefficient");
    }
    const std::string matrix_path = term_path + "/matrix";
    t.matrix = io::operator_from_json(require(term, "matrix", term_path), matrix_path);
    if (t.matrix.rows() != dim || t.matrix.cols() != dim) {
      throw ConfigError(matrix_path, "shape " + t.matrix.shape_string() + " does not match dimension " + std::to_string(dim));
    }
    if (!is_hermitian(t.matrix, kHermitianTolerance)) throw ConfigError(matrix_path, "Hamiltonian term is not Hermitian");
    terms.push_back(std::move(t));
  }

  std::vector<JumpChannel> channels;
  if (j.contains("channels")) {
    const json& list = j["channels"];
    if (!list.is_array()) throw ConfigError(path + "/channels", "expected an array");
    for (std::size_t c = 0; c < list.size(); ++c) {
      const std::string ch_path = path + "/channels/" + std::to_string(c);
      const double gamma = number_at(require(list[c], "gamma", ch_path), ch_path + "/gamma");
      if (gamma < 0.0) throw ConfigError(ch_path + "/gamma", "dissipation rate must be non-negative");
      Operator op = io::operator_from_json(require(list[c], "matrix", ch_path), ch_path + "/matrix");
      if (op.rows() != dim || op.cols() != dim) {
        throw ConfigError(ch_path + "/matrix", "shape " + op.shape_string() + " does not match dimension " + std::to_string(dim));
      }
      channels.push_back({gamma, std::move(op)});
    }
  }
  return LindbladModel(HamiltonianSchedule::linear(dim, parameter_count, std::move(terms)), std::move(channels));
}

}  // namespace lindbladiff
