#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lindbladiff {

using Complex = std::complex<double>;

inline constexpr Complex kI{0.0, 1.0};

/// Dense complex matrix, row-major.
class CMatrix {
 public:
  CMatrix() = default;
  CMatrix(std::size_t rows, std::size_t cols);
  /// Takes ownership of `data` (row-major, rows*cols entries). Throws on size mismatch or non-finite entries.
  CMatrix(std::size_t rows, std::size_t cols, std::vector<Complex> data);
  CMatrix(std::initializer_list<std::initializer_list<Complex>> rows);

  static CMatrix zeros(std::size_t rows, std::size_t cols) { return CMatrix(rows, cols); }
  static CMatrix identity(std::size_t n);
  static CMatrix diagonal(std::span<const Complex> entries);
  static CMatrix diagonal(std::span<const double> entries);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_square() const noexcept { return rows_ == cols_; }
  bool empty() const noexcept { return data_.empty(); }

  Complex& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const Complex& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<Complex> data() noexcept { return data_; }
  std::span<const Complex> data() const noexcept { return data_; }

  /// Conjugate transpose.
  CMatrix adjoint() const;
  CMatrix column(std::size_t j) const;
  void set_column(std::size_t j, const CMatrix& column);
  bool is_finite() const noexcept;
  std::string shape_string() const;

  CMatrix& operator+=(const CMatrix& other);
  CMatrix& operator-=(const CMatrix& other);
  CMatrix& operator*=(Complex scale) noexcept;
  /// this += scale * other
  CMatrix& add_scaled(Complex scale, const CMatrix& other);

  friend CMatrix operator+(CMatrix a, const CMatrix& b) { return a += b; }
  friend CMatrix operator-(CMatrix a, const CMatrix& b) { return a -= b; }
  friend CMatrix operator*(CMatrix a, Complex s) { return a *= s; }
  friend CMatrix operator*(Complex s, CMatrix a) { return a *= s; }
  friend bool operator==(const CMatrix&, const CMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Complex> data_;
};

struct Triplet {
  std::size_t row;
  std::size_t col;
  Complex value;
};

/// Compressed sparse row matrix. Column indices are strictly increasing within each row.
class CSparse {
 public:
  CSparse() = default;
  /// Duplicate (row, col) entries are summed. Explicit zeros are kept as structural entries.
  CSparse(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  /// Stores every entry whose magnitude exceeds `drop_tolerance`.
  static CSparse from_dense(const CMatrix& dense, double drop_tolerance = 0.0);
  static CSparse identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
  std::span<const Complex> values() const noexcept { return values_; }

  CMatrix to_dense() const;
  CSparse adjoint() const;
  std::vector<Triplet> triplets() const;
  std::string shape_string() const;

  friend bool operator==(const CSparse&, const CSparse&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<Complex> values_;
};

/// Either storage form of a linear operator. Both variants honour the same apply/adjoint contract.
class Operator {
 public:
  Operator() : storage_(CMatrix{}) {}
  Operator(CMatrix dense) : storage_(std::move(dense)) {}   // NOLINT(google-explicit-constructor)
  Operator(CSparse sparse) : storage_(std::move(sparse)) {}  // NOLINT(google-explicit-constructor)

  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;
  bool is_sparse() const noexcept { return std::holds_alternative<CSparse>(storage_); }

  const CMatrix* dense_ptr() const noexcept { return std::get_if<CMatrix>(&storage_); }
  const CSparse* sparse_ptr() const noexcept { return std::get_if<CSparse>(&storage_); }
  CMatrix to_dense() const;
  CSparse to_sparse() const;
  std::string shape_string() const;

  template <typename Visitor>
  decltype(auto) visit(Visitor&& v) const {
    return std::visit(std::forward<Visitor>(v), storage_);
  }

 private:
  std::variant<CMatrix, CSparse> storage_;
};

CMatrix matmul(const CMatrix& a, const CMatrix& b);
CMatrix matmul(const Operator& a, const CMatrix& b);
CMatrix matmul(const CMatrix& a, const Operator& b);

CMatrix hermitian_adjoint(const CMatrix& a);
Operator hermitian_adjoint(const Operator& a);

/// Sum of diagonal entries; throws DimensionError for non-square input.
Complex trace(const CMatrix& a);
/// Tr(a b) without forming the product.
Complex trace_product(const Operator& a, const CMatrix& b);
/// Hilbert-Schmidt inner product Tr(a^dagger b).
Complex hs_inner(const CMatrix& a, const CMatrix& b);

double frobenius_norm(const CMatrix& a);
double frobenius_distance(const CMatrix& a, const CMatrix& b);
double max_abs_difference(const CMatrix& a, const CMatrix& b);

/// ||a - a^dagger||_F
double hermiticity_residual(const CMatrix& a);
bool is_hermitian(const Operator& a, double tolerance);
/// (a + a^dagger) / 2
CMatrix hermitian_part(const CMatrix& a);

CMatrix commutator(const Operator& a, const CMatrix& b);
CMatrix anticommutator(const Operator& a, const CMatrix& b);

CMatrix kron(const CMatrix& a, const CMatrix& b);
CSparse kron(const CSparse& a, const CSparse& b);

/// sum_m coefficients[m] * terms[m]; sparse when every term is sparse.
Operator linear_combination(std::span<const double> coefficients, std::span<const Operator> terms);

/// Solves a x = b for square a by Gaussian elimination with partial pivoting.
CMatrix solve(CMatrix a, CMatrix b);

}  // namespace lindbladiff
