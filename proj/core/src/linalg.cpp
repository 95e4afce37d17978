#include "lindbladiff/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

#include "lindbladiff/errors.hpp"

namespace lindbladiff {
namespace {

std::string shape(std::size_t r, std::size_t c) {
  std::ostringstream out;
  out << "(" << r << "x" << c << ")";
  return out.str();
}

[[noreturn]] void mismatch(const char* op, const std::string& a, const std::string& b) {
  throw DimensionError(std::string(op) + ": dimension mismatch " + a + " vs " + b);
}

bool finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

}  // namespace

// ---------------------------------------------------------------------------
// CMatrix

CMatrix::CMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

CMatrix::CMatrix(std::size_t rows, std::size_t cols, std::vector<Complex> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("CMatrix: " + std::to_string(data_.size()) + " entries for shape " + shape(rows, cols));
  }
  if (!is_finite()) throw InvalidArgument("CMatrix: non-finite entry");
}

CMatrix::CMatrix(std::initializer_list<std::initializer_list<Complex>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& row : rows) {
    if (row.size() != cols_) throw DimensionError("CMatrix: ragged initializer list");
    data_.insert(data_.end(), row.begin(), row.end());
  }
  if (!is_finite()) throw InvalidArgument("CMatrix: non-finite entry");
}

CMatrix CMatrix::identity(std::size_t n) {
  CMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

CMatrix CMatrix::diagonal(std::span<const Complex> entries) {
  CMatrix m(entries.size(), entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) m(i, i) = entries[i];
  return m;
}

CMatrix CMatrix::diagonal(std::span<const double> entries) {
  CMatrix m(entries.size(), entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) m(i, i) = entries[i];
  return m;
}

CMatrix CMatrix::adjoint() const {
  CMatrix out(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out(j, i) = std::conj((*this)(i, j));
  return out;
}

CMatrix CMatrix::column(std::size_t j) const {
  CMatrix out(rows_, 1);
  for (std::size_t i = 0; i < rows_; ++i) out(i, 0) = (*this)(i, j);
  return out;
}

void CMatrix::set_column(std::size_t j, const CMatrix& column) {
  if (column.rows() != rows_ || column.cols() != 1) mismatch("set_column", shape_string(), column.shape_string());
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = column(i, 0);
}

bool CMatrix::is_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), finite);
}

std::string CMatrix::shape_string() const { return shape(rows_, cols_); }

CMatrix& CMatrix::operator+=(const CMatrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) mismatch("add", shape_string(), other.shape_string());
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
  return *this;
}

CMatrix& CMatrix::operator-=(const CMatrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) mismatch("subtract", shape_string(), other.shape_string());
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
  return *this;
}

CMatrix& CMatrix::operator*=(Complex scale) noexcept {
  for (auto& z : data_) z *= scale;
  return *this;
}

CMatrix& CMatrix::add_scaled(Complex scale, const CMatrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) mismatch("add_scaled", shape_string(), other.shape_string());
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += scale * other.data_[k];
  return *this;
}

// ---------------------------------------------------------------------------
// CSparse

CSparse::CSparse(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) : rows_(rows), cols_(cols) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) {
      throw DimensionError("CSparse: entry (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                           ") outside shape " + shape(rows, cols));
    }
    if (!finite(t.value)) throw InvalidArgument("CSparse: non-finite entry");
  }
  std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  row_offsets_.assign(rows + 1, 0);
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (!col_indices_.empty() && k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
      values_.back() += t.value;
      continue;
    }
    col_indices_.push_back(t.col);
    values_.push_back(t.value);
    ++row_offsets_[t.row + 1];
  }
  std::partial_sum(row_offsets_.begin(), row_offsets_.end(), row_offsets_.begin());
}

CSparse CSparse::from_dense(const CMatrix& dense, double drop_tolerance) {
  std::vector<Triplet> triplets;
  for (std::size_t i = 0; i < dense.rows(); ++i)
    for (std::size_t j = 0; j < dense.cols(); ++j)
      if (std::abs(dense(i, j)) > drop_tolerance) triplets.push_back({i, j, dense(i, j)});
  return CSparse(dense.rows(), dense.cols(), std::move(triplets));
}

CSparse CSparse::identity(std::size_t n) {
  std::vector<Triplet> triplets;
  triplets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) triplets.push_back({i, i, 1.0});
  return CSparse(n, n, std::move(triplets));
}

CMatrix CSparse::to_dense() const {
  CMatrix out(rows_, cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) out(i, col_indices_[k]) = values_[k];
  return out;
}

std::vector<Triplet> CSparse::triplets() const {
  std::vector<Triplet> out;
  out.reserve(nnz());
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) out.push_back({i, col_indices_[k], values_[k]});
  return out;
}

CSparse CSparse::adjoint() const {
  auto entries = triplets();
  for (auto& t : entries) {
    std::swap(t.row, t.col);
    t.value = std::conj(t.value);
  }
  return CSparse(cols_, rows_, std::move(entries));
}

std::string CSparse::shape_string() const { return shape(rows_, cols_); }

// ---------------------------------------------------------------------------
// Operator

std::size_t Operator::rows() const noexcept {
  return visit([](const auto& m) { return m.rows(); });
}

std::size_t Operator::cols() const noexcept {
  return visit([](const auto& m) { return m.cols(); });
}

CMatrix Operator::to_dense() const {
  if (const auto* d = dense_ptr()) return *d;
  return sparse_ptr()->to_dense();
}

CSparse Operator::to_sparse() const {
  if (const auto* s = sparse_ptr()) return *s;
  return CSparse::from_dense(*dense_ptr());
}

std::string Operator::shape_string() const { return shape(rows(), cols()); }

// ---------------------------------------------------------------------------
// Products

CMatrix matmul(const CMatrix& a, const CMatrix& b) {
  if (a.cols() != b.rows()) mismatch("matmul", a.shape_string(), b.shape_string());
  CMatrix out(a.rows(), b.cols());
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const Complex aik = a(i, k);
      if (aik == Complex{}) continue;
      const Complex* brow = &b(k, 0);
      Complex* orow = &out(i, 0);
      for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

namespace {

CMatrix sparse_times_dense(const CSparse& a, const CMatrix& b) {
  if (a.cols() != b.rows()) mismatch("matmul", a.shape_string(), b.shape_string());
  CMatrix out(a.rows(), b.cols());
  const auto offsets = a.row_offsets();
  const auto cols = a.col_indices();
  const auto vals = a.values();
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Complex* orow = &out(i, 0);
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      const Complex v = vals[k];
      const Complex* brow = &b(cols[k], 0);
      for (std::size_t j = 0; j < m; ++j) orow[j] += v * brow[j];
    }
  }
  return out;
}

CMatrix dense_times_sparse(const CMatrix& a, const CSparse& b) {
  if (a.cols() != b.rows()) mismatch("matmul", a.shape_string(), b.shape_string());
  CMatrix out(a.rows(), b.cols());
  const auto offsets = b.row_offsets();
  const auto cols = b.col_indices();
  const auto vals = b.values();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Complex* orow = &out(i, 0);
    for (std::size_t k = 0; k < b.rows(); ++k) {
      const Complex aik = a(i, k);
      if (aik == Complex{}) continue;
      for (std::size_t p = offsets[k]; p < offsets[k + 1]; ++p) orow[cols[p]] += aik * vals[p];
    }
  }
  return out;
}

}  // namespace

CMatrix matmul(const Operator& a, const CMatrix& b) {
  if (const auto* s = a.sparse_ptr()) return sparse_times_dense(*s, b);
  return matmul(*a.dense_ptr(), b);
}

CMatrix matmul(const CMatrix& a, const Operator& b) {
  if (const auto* s = b.sparse_ptr()) return dense_times_sparse(a, *s);
  return matmul(a, *b.dense_ptr());
}

CMatrix hermitian_adjoint(const CMatrix& a) { return a.adjoint(); }

Operator hermitian_adjoint(const Operator& a) {
  return a.visit([](const auto& m) { return Operator(m.adjoint()); });
}

Complex trace(const CMatrix& a) {
  if (!a.is_square()) throw DimensionError("trace: non-square matrix " + a.shape_string());
  Complex sum{};
  for (std::size_t i = 0; i < a.rows(); ++i) sum += a(i, i);
  return sum;
}

Complex trace_product(const Operator& a, const CMatrix& b) {
  if (a.cols() != b.rows() || a.rows() != b.cols()) mismatch("trace_product", a.shape_string(), b.shape_string());
  Complex sum{};
  if (const auto* s = a.sparse_ptr()) {
    const auto offsets = s->row_offsets();
    const auto cols = s->col_indices();
    const auto vals = s->values();
    for (std::size_t i = 0; i < s->rows(); ++i)
      for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) sum += vals[k] * b(cols[k], i);
    return sum;
  }
  const CMatrix& d = *a.dense_ptr();
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t k = 0; k < d.cols(); ++k) sum += d(i, k) * b(k, i);
  return sum;
}

Complex hs_inner(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) mismatch("hs_inner", a.shape_string(), b.shape_string());
  Complex sum{};
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t k = 0; k < da.size(); ++k) sum += std::conj(da[k]) * db[k];
  return sum;
}

double frobenius_norm(const CMatrix& a) {
  double sum = 0.0;
  for (const auto& z : a.data()) sum += std::norm(z);
  return std::sqrt(sum);
}

double frobenius_distance(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) mismatch("frobenius_distance", a.shape_string(), b.shape_string());
  double sum = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t k = 0; k < da.size(); ++k) sum += std::norm(da[k] - db[k]);
  return std::sqrt(sum);
}

double max_abs_difference(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) mismatch("max_abs_difference", a.shape_string(), b.shape_string());
  double worst = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t k = 0; k < da.size(); ++k) worst = std::max(worst, std::abs(da[k] - db[k]));
  return worst;
}

double hermiticity_residual(const CMatrix& a) {
  if (!a.is_square()) throw DimensionError("hermiticity_residual: non-square matrix " + a.shape_string());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) sum += std::norm(a(i, j) - std::conj(a(j, i)));
  return std::sqrt(sum);
}

bool is_hermitian(const Operator& a, double tolerance) {
  if (a.rows() != a.cols()) return false;
  return hermiticity_residual(a.to_dense()) <= tolerance;
}

CMatrix hermitian_part(const CMatrix& a) {
  if (!a.is_square()) throw DimensionError("hermitian_part: non-square matrix " + a.shape_string());
  CMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    out(i, i) = a(i, i).real();
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const Complex v = 0.5 * (a(i, j) + std::conj(a(j, i)));
      out(i, j) = v;
      out(j, i) = std::conj(v);
    }
  }
  return out;
}

CMatrix commutator(const Operator& a, const CMatrix& b) {
  CMatrix out = matmul(a, b);
  out -= matmul(b, a);
  return out;
}

CMatrix anticommutator(const Operator& a, const CMatrix& b) {
  CMatrix out = matmul(a, b);
  out += matmul(b, a);
  return out;
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

CSparse kron(const CSparse& a, const CSparse& b) {
  std::vector<Triplet> out;
  out.reserve(a.nnz() * b.nnz());
  for (const auto& ta : a.triplets())
    for (const auto& tb : b.triplets())
      out.push_back({ta.row * b.rows() + tb.row, ta.col * b.cols() + tb.col, ta.value * tb.value});
  return CSparse(a.rows() * b.rows(), a.cols() * b.cols(), std::move(out));
}

Operator linear_combination(std::span<const double> coefficients, std::span<const Operator> terms) {
  if (coefficients.size() != terms.size()) {
    throw DimensionError("linear_combination: " + std::to_string(coefficients.size()) + " coefficients for " +
                         std::to_string(terms.size()) + " terms");
  }
  if (terms.empty()) throw InvalidArgument("linear_combination: no terms");
  const std::size_t rows = terms.front().rows();
  const std::size_t cols = terms.front().cols();
  for (const auto& t : terms) {
    if (t.rows() != rows || t.cols() != cols) mismatch("linear_combination", terms.front().shape_string(), t.shape_string());
  }
  const bool all_sparse = std::all_of(terms.begin(), terms.end(), [](const Operator& t) { return t.is_sparse(); });
  if (all_sparse) {
    std::vector<Triplet> entries;
    for (std::size_t m = 0; m < terms.size(); ++m) {
      if (coefficients[m] == 0.0) continue;
      for (auto t : terms[m].sparse_ptr()->triplets()) {
        t.value *= coefficients[m];
        entries.push_back(t);
      }
    }
    return CSparse(rows, cols, std::move(entries));
  }
  CMatrix out(rows, cols);
  for (std::size_t m = 0; m < terms.size(); ++m) {
    if (coefficients[m] == 0.0) continue;
    if (const auto* s = terms[m].sparse_ptr()) {
      for (const auto& t : s->triplets()) out(t.row, t.col) += coefficients[m] * t.value;
    } else {
      out.add_scaled(coefficients[m], *terms[m].dense_ptr());
    }
  }
  return out;
}

CMatrix solve(CMatrix a, CMatrix b) {
  if (!a.is_square()) throw DimensionError("solve: non-square matrix " + a.shape_string());
  if (a.rows() != b.rows()) mismatch("solve", a.shape_string(), b.shape_string());
  const std::size_t n = a.rows();
  const std::size_t m = b.cols();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (a(pivot, col) == Complex{}) throw NumericalError("solve: singular matrix");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
      for (std::size_t j = 0; j < m; ++j) std::swap(b(col, j), b(pivot, j));
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const Complex factor = a(r, col) / a(col, col);
      if (factor == Complex{}) continue;
      for (std::size_t j = col; j < n; ++j) a(r, j) -= factor * a(col, j);
      for (std::size_t j = 0; j < m; ++j) b(r, j) -= factor * b(col, j);
    }
  }
  for (std::size_t col = n; col-- > 0;) {
    for (std::size_t j = 0; j < m; ++j) {
      Complex sum = b(col, j);
      for (std::size_t k = col + 1; k < n; ++k) sum -= a(col, k) * b(k, j);
      b(col, j) = sum / a(col, col);
    }
  }
  return b;
}

}  // namespace lindbladiff
