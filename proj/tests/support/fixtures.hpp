#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lindbladiff/linalg.hpp"
#include "lindbladiff/model.hpp"
#include "lindbladiff/operators.hpp"
#include "lindbladiff/state.hpp"
#include "oracles.hpp"

namespace fixtures {

using namespace lindbladiff;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
  Complex complex_normal() {
    const double re = normal();
    return {re, normal()};
  }

 private:
  std::mt19937_64 gen_;
};

inline CMatrix random_matrix(Rng& rng, std::size_t d) {
  CMatrix m(d, d);
  for (auto& z : m.data()) z = rng.complex_normal();
  return m;
}

inline CMatrix random_hermitian(Rng& rng, std::size_t d) { return hermitian_part(random_matrix(rng, d)); }

inline CMatrix random_density(Rng& rng, std::size_t d) {
  const CMatrix a = random_matrix(rng, d);
  CMatrix rho = matmul(a, a.adjoint());
  rho *= 1.0 / trace(rho).real();
  return hermitian_part(rho);
}

inline CMatrix random_unitary(Rng& rng, std::size_t d) {
  return oracles::expm_unitary(random_hermitian(rng, d), 1.0);
}

inline CMatrix plus_state() { return CMatrix{{0.5, 0.5}, {0.5, 0.5}}; }

/// H = sum_k x_k A_k + A_0' with random Hermitian A and `channels` random jump operators.
struct RandomModel {
  LindbladModel model;
  std::vector<CMatrix> terms;  // terms[k] multiplies x_k; terms.back() is the constant drift
  std::vector<oracles::Channel> channels;
};

inline RandomModel random_model(Rng& rng, std::size_t d, std::size_t params, std::size_t channel_count,
                                bool sparse = false) {
  std::vector<LinearTerm> terms;
  std::vector<CMatrix> dense_terms;
  for (std::size_t k = 0; k <= params; ++k) {
    CMatrix a = random_hermitian(rng, d);
    dense_terms.push_back(a);
    Operator op = sparse ? Operator(CSparse::from_dense(a)) : Operator(a);
    if (k < params) {
      terms.push_back({k, 1.0, op});
    } else {
      terms.push_back({std::nullopt, 1.0, op});
    }
  }
  std::vector<JumpChannel> channels;
  std::vector<oracles::Channel> oracle_channels;
  for (std::size_t c = 0; c < channel_count; ++c) {
    CMatrix j = random_matrix(rng, d);
    j *= 0.5;
    const double rate = rng.uniform(0.05, 0.5);
    channels.push_back({rate, sparse ? Operator(CSparse::from_dense(j)) : Operator(j)});
    oracle_channels.push_back({rate, j});
  }
  return {LindbladModel(HamiltonianSchedule::linear(d, params, std::move(terms)), std::move(channels)),
          std::move(dense_terms), std::move(oracle_channels)};
}

inline CMatrix model_hamiltonian(const RandomModel& m, std::span<const double> x) {
  CMatrix h = m.terms.back();
  for (std::size_t k = 0; k < x.size(); ++k) h.add_scaled(x[k], m.terms[k]);
  return h;
}

/// Dephasing: H = 0, one channel (gamma, sigma_z).
inline LindbladModel dephasing_model(double gamma) {
  return LindbladModel(HamiltonianSchedule::constant(Operator(CSparse(2, 2, {}))),
                       {JumpChannel{gamma, Operator(ops::pauli_z())}});
}

/// H = 0, no channels, one inert parameter.
inline LindbladModel zero_model(std::size_t d, std::size_t params = 1) {
  std::vector<LinearTerm> terms;
  terms.push_back({std::nullopt, 1.0, Operator(CSparse(d, d, {}))});
  return LindbladModel(HamiltonianSchedule::linear(d, params, std::move(terms)), {});
}

inline std::vector<Complex> ghz(std::size_t n) {
  std::vector<Complex> psi(std::size_t{1} << n, 0.0);
  psi.front() = M_SQRT1_2;
  psi.back() = M_SQRT1_2;
  return psi;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

}  // namespace fixtures
