#include "lindbladiff/operators.hpp"

#include <vector>

#include "lindbladiff/errors.hpp"

namespace lindbladiff::ops {
namespace {

CSparse collective(const CSparse& pauli, std::size_t n) {
  if (n == 0) throw InvalidArgument("collective operator: need at least one qubit");
  std::vector<Triplet> entries;
  for (std::size_t q = 0; q < n; ++q) {
    for (auto t : embed(pauli, q, n).triplets()) {
      t.value *= 0.5;
      entries.push_back(t);
    }
  }
  const std::size_t dim = std::size_t{1} << n;
  return CSparse(dim, dim, std::move(entries));
}

}  // namespace

CSparse pauli_x() { return CSparse(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}}); }
CSparse pauli_y() { return CSparse(2, 2, {{0, 1, -kI}, {1, 0, kI}}); }
CSparse pauli_z() { return CSparse(2, 2, {{0, 0, 1.0}, {1, 1, -1.0}}); }
CSparse sigma_minus() { return CSparse(2, 2, {{1, 0, 1.0}}); }

CSparse embed(const CSparse& local, std::size_t qubit, std::size_t n) {
  if (qubit >= n) throw InvalidArgument("embed: qubit index out of range");
  if (local.rows() != 2 || local.cols() != 2) throw DimensionError("embed: expected a 2x2 operator");
  const CSparse left = CSparse::identity(std::size_t{1} << qubit);
  const CSparse right = CSparse::identity(std::size_t{1} << (n - qubit - 1));
  return kron(kron(left, local), right);
}

CSparse collective_x(std::size_t n) { return collective(pauli_x(), n); }
CSparse collective_y(std::size_t n) { return collective(pauli_y(), n); }
CSparse collective_z(std::size_t n) { return collective(pauli_z(), n); }

}  // namespace lindbladiff::ops
