#pragma once

#include <cstddef>

#include "lindbladiff/linalg.hpp"

// Standard qubit operators. Basis ordering is |0...0>, |0...1>, ..., with qubit 0 the most significant bit
// and sigma_z |0> = +|0>.
namespace lindbladiff::ops {

CSparse pauli_x();
CSparse pauli_y();
CSparse pauli_z();
/// |1><0|: lowers the sigma_z eigenvalue from +1 to -1.
CSparse sigma_minus();

/// `local` acting on `qubit` of an `n`-qubit register, identity elsewhere.
CSparse embed(const CSparse& local, std::size_t qubit, std::size_t n);

/// S_alpha = 1/2 sum_i sigma_alpha on qubit i.
CSparse collective_x(std::size_t n);
CSparse collective_y(std::size_t n);
CSparse collective_z(std::size_t n);

}  // namespace lindbladiff::ops
