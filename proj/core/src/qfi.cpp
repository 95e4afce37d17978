#include "lindbladiff/qfi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "lindbladiff/errors.hpp"
#include "lindbladiff/operators.hpp"

namespace lindbladiff {

namespace {

double pair_weight(double a, double b) { return (a - b) * (a - b) / (a + b); }

// d/da of (a - b)^2 / (a + b)
double pair_weight_da(double a, double b) { return (a - b) * (a + 3.0 * b) / ((a + b) * (a + b)); }

std::vector<double> clipped_eigenvalues(const EigDecomposition& decomp, const QfiOptions& options) {
  std::vector<double> out = decomp.eigenvalues;
  for (double& l : out) {
    if (l < -options.clip_tolerance) {
      char buffer[96];
      std::snprintf(buffer, sizeof buffer, "eigenvalue %.3e below -%.3e", l, options.clip_tolerance);
      throw InvalidState(buffer);
    }
    if (l < 0.0) l = 0.0;
  }
  return out;
}

std::vector<double> clipped_cluster_means(const EigDecomposition& decomp, std::span<const double> lambda) {
  std::vector<double> out(lambda.size());
  for (const auto& members : decomp.clusters) {
    double sum = 0.0;
    for (std::size_t i : members) sum += lambda[i];
    for (std::size_t i : members) out[i] = sum / static_cast<double>(members.size());
  }
  return out;
}

void check_generator(const EigDecomposition& decomp, const Generator& g) {
  if (g.dimension() != decomp.dimension()) {
    throw DimensionError("qfi: generator dimension " + std::to_string(g.dimension()) + " does not match state " +
                         std::to_string(decomp.dimension()));
  }
}

// G in the eigenbasis.
CMatrix rotated_generator(const EigDecomposition& decomp, const Generator& g) {
  const CMatrix& psi = decomp.eigenvectors;
  return matmul(psi.adjoint(), matmul(g.op(), psi));
}

CMatrix random_hermitian(std::mt19937_64& gen, std::size_t d) {
  auto uniform = [&gen] { return static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };
  CMatrix m(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    m(i, i) = uniform();
    for (std::size_t j = i + 1; j < d; ++j) {
      const double re = uniform();
      m(i, j) = Complex(re, uniform());
      m(j, i) = std::conj(m(i, j));
    }
  }
  return m;
}

}  // namespace

Generator::Generator(Operator g) : op_(std::move(g)), dense_(op_.to_dense()) {
  if (!dense_.is_square()) throw DimensionError("generator must be square, got " + dense_.shape_string());
  if (!dense_.is_finite()) throw InvalidArgument("generator has non-finite entries");
  if (hermiticity_residual(dense_) > 1e-12) throw InvalidArgument("generator is not Hermitian");
}

Generator Generator::collective_sz(std::size_t n) { return Generator(Operator(ops::collective_z(n))); }

const char* to_string(QfiConvention c) noexcept { return c == QfiConvention::standard ? "standard" : "pairwise"; }

QfiConvention convention_from_string(const std::string& name) {
  if (name == "pairwise") return QfiConvention::pairwise;
  if (name == "standard") return QfiConvention::standard;
  throw InvalidArgument("unknown QFI convention '" + name + "' (expected pairwise or standard)");
}

QfiReport qfi(const EigDecomposition& decomp, const Generator& g, const QfiOptions& options) {
  check_generator(decomp, g);
  const std::vector<double> lambda = clipped_eigenvalues(decomp, options);
  const CMatrix gt = rotated_generator(decomp, g);
  QfiReport report;
  report.convention = options.convention;
  report.clusters = decomp.clusters.size();
  for (const auto& c : decomp.clusters) report.largest_cluster = std::max(report.largest_cluster, c.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double s = lambda[i] + lambda[j];
      if (s <= options.skip_tolerance) {
        ++report.skipped_pairs;
        continue;
      }
      sum += pair_weight(lambda[i], lambda[j]) * std::norm(gt(i, j));
    }
  }
  report.value = options.multiplier() * sum;
  return report;
}

CMatrix qfi_rho_cotangent(const EigDecomposition& decomp, const Generator& g, const QfiOptions& options) {
  check_generator(decomp, g);
  const std::size_t n = decomp.dimension();
  const std::vector<double> means = clipped_cluster_means(decomp, clipped_eigenvalues(decomp, options));
  const CMatrix gt = rotated_generator(decomp, g);

  // Eigenvalue part, block diagonal over clusters: on a cluster C the first-order change is
  // sum_{j not in C} df/da(mean_C, mean_j) Tr(E_C G~_{Cj} G~_{jC}), E = Psi^dagger drho Psi, which depends on
  // how drho splits C and not only on its mean.
  CMatrix m(n, n);
  CMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (decomp.cluster_of[i] == decomp.cluster_of[j]) continue;
      if (means[i] + means[j] <= options.skip_tolerance) continue;
      a(i, j) = pair_weight(means[i], means[j]) * gt(i, j);
      const double w = pair_weight_da(means[i], means[j]);
      for (std::size_t k : decomp.clusters[decomp.cluster_of[i]]) m(i, k) += w * gt(i, j) * std::conj(gt(k, j));
    }
  }
  // Eigenvector part: dF = Re Tr(c_psi^dagger dPsi) with c_psi = 2 G Psi (W o G~).
  CMatrix c_psi = matmul(g.op(), matmul(decomp.eigenvectors, a));
  c_psi *= 2.0;
  const std::vector<double> no_lambda(n, 0.0);
  CMatrix d = eig_vjp(decomp, no_lambda, c_psi);
  d += matmul(decomp.eigenvectors, matmul(m, decomp.eigenvectors.adjoint()));
  d = hermitian_part(d);
  d *= options.multiplier();
  return d;
}

CostCofunction qfi_cost(const Generator& g, const QfiOptions& options) {
  CostCofunction cost;
  cost.value = [g, options](const CMatrix& rho) { return qfi(eigh(rho, options.eig), g, options).value; };
  cost.gradient = [g, options](const CMatrix& rho) {
    return realify(qfi_rho_cotangent(eigh(rho, options.eig), g, options));
  };
  cost.probe_directions = [g](const CMatrix& rho) {
    // F is not differentiable across a change of rank, so only rank-preserving directions are probed there.
    std::mt19937_64 gen(0x9f1);
    const std::size_t d = rho.rows();
    std::vector<CMatrix> out;
    std::vector<CMatrix> generators = {g.dense(), random_hermitian(gen, d), random_hermitian(gen, d)};
    for (const auto& k : generators) {
      CMatrix dir = matmul(k, rho);
      dir -= matmul(rho, k);
      dir *= kI;
      out.push_back(std::move(dir));
    }
    if (eigh(rho).eigenvalues.front() > 1e-3) {
      for (int p = 0; p < 2; ++p) {
        CMatrix dir = random_hermitian(gen, d);
        const Complex shift = trace(dir) / static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i) dir(i, i) -= shift;
        out.push_back(std::move(dir));
      }
    }
    return out;
  };
  return cost;
}

QfiReport qfi_of_params(const LindbladModel& model, std::span<const double> x, const DensityOperator& rho0,
                        TimeSpan span, const Generator& g, const SolveConfig& config, bool want_gradient,
                        const QfiOptions& options) {
  if (g.dimension() != model.dimension()) {
    throw DimensionError("qfi_of_params: generator dimension " + std::to_string(g.dimension()) +
                         " does not match model dimension " + std::to_string(model.dimension()));
  }
  auto staged = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const StageError&) {
      throw;
    } catch (const NumericalError& e) {
      throw StageError(stage, e.what());
    } catch (const InvalidState& e) {
      throw StageError(stage, e.what());
    }
  };

  // rho(T) is only accurate to the solver tolerance, which integrate already accepts as 10 rtol.
  QfiOptions effective = options;
  effective.clip_tolerance = std::max(options.clip_tolerance, 10.0 * config.rtol);

  const SolveResult solved = staged("integrate", [&] { return integrate(model, x, rho0, span, config); });
  const CMatrix& rho_t = solved.final_state.matrix();
  const EigDecomposition decomp = staged("eigh", [&] { return eigh(rho_t, options.eig); });
  QfiReport report = staged("qfi", [&] { return qfi(decomp, g, effective); });
  report.solver = solved.stats;
  report.eigen = eigen_diagnostics(rho_t, decomp);
  if (want_gradient) {
    const CMatrix cotangent = staged("qfi", [&] { return qfi_rho_cotangent(decomp, g, effective); });
    GradientResult grad =
        staged("adjoint", [&] { return adjoint_from_cotangent(model, x, solved, config, cotangent); });
    report.gradient = std::move(grad.dx);
    report.adjoint = grad.diagnostics;
  }
  return report;
}

}  // namespace lindbladiff
