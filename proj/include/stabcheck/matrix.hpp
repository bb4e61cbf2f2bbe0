#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stabcheck/error.hpp"

namespace stabcheck {

using Vector = std::vector<double>;

/// Dense row-major matrix sized for desk-scale control problems.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw Error(ErrorKind::Dimension, "ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix column(std::span<const double> v) {
    Matrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
  }
  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }
  bool is_scalar() const noexcept { return rows_ == 1 && cols_ == 1; }
  bool is_vector() const noexcept { return cols_ == 1 || rows_ == 1; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> values() const noexcept { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  Vector apply(std::span<const double> x) const {
    if (x.size() != cols_) throw Error(ErrorKind::Dimension, "matrix-vector size mismatch");
    Vector y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) y[r] += (*this)(r, c) * x[c];
    return y;
  }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.rows_) throw Error(ErrorKind::Dimension, "matrix product size mismatch");
    Matrix p(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k)
        for (std::size_t j = 0; j < b.cols_; ++j) p(i, j) += a(i, k) * b(k, j);
    return p;
  }
  friend Matrix operator+(Matrix a, const Matrix& b) {
    a.require_same(b);
    for (std::size_t i = 0; i < a.data_.size(); ++i) a.data_[i] += b.data_[i];
    return a;
  }
  friend Matrix operator-(Matrix a, const Matrix& b) {
    a.require_same(b);
    for (std::size_t i = 0; i < a.data_.size(); ++i) a.data_[i] -= b.data_[i];
    return a;
  }
  friend Matrix operator*(double s, Matrix a) {
    for (double& v : a.data_) v *= s;
    return a;
  }
  friend bool operator==(const Matrix&, const Matrix&) = default;

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  void require_same(const Matrix& b) const {
    if (rows_ != b.rows_ || cols_ != b.cols_) throw Error(ErrorKind::Dimension, "matrix size mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Kronecker product a ⊗ b.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

/// Solves M y = rhs by Gaussian elimination with partial pivoting. Returns
/// nullopt when a pivot falls below `pivot_tol` relative to the largest entry.
inline std::optional<Vector> solve_linear(Matrix m, Vector rhs, double pivot_tol = 1e-12) {
  const std::size_t n = m.rows();
  if (!m.is_square() || rhs.size() != n) throw Error(ErrorKind::Dimension, "linear system is not square");
  const double scale = std::max(m.max_abs(), 1.0);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
    if (std::abs(m(piv, col)) <= pivot_tol * scale) return std::nullopt;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(col, c), m(piv, c));
      std::swap(rhs[col], rhs[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m(r, col) / m(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m(r, c) -= f * m(col, c);
      rhs[r] -= f * rhs[col];
    }
  }
  Vector y(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= m(i, c) * y[c];
    y[i] = s / m(i, i);
  }
  return y;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_real(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// Matrix literal text: `[1.5 0.5; 0.5 1]`, `[1; 1]`, `[1.15 0.57]`, or a bare
/// number. Entries within a row are separated by spaces or commas.
inline std::string format_matrix(const Matrix& m) {
  if (m.is_scalar()) return format_real(m(0, 0));
  std::string s = "[";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (r) s += "; ";
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) s += ' ';
      s += format_real(m(r, c));
    }
  }
  return s + "]";
}

/// Parses a matrix literal. On failure throws Error(Syntax) whose column is
/// the 1-based offset inside `text`.
inline Matrix parse_matrix(std::string_view text) {
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  };
  auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorKind::Syntax, why, 1, static_cast<int>(i) + 1);
  };
  auto number = [&]() -> double {
    skip_ws();
    const std::string rest(text.substr(i));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) throw fail("expected a number");
    if (!std::isfinite(v)) throw fail("non-finite number");
    i += static_cast<std::size_t>(end - rest.c_str());
    return v;
  };

  skip_ws();
  if (i < text.size() && text[i] != '[') {
    const double v = number();
    skip_ws();
    if (i != text.size()) throw fail("trailing characters after number");
    return Matrix::scalar(v);
  }
  if (i >= text.size()) throw fail("empty matrix literal");
  ++i;  // '['
  std::vector<std::vector<double>> rows(1);
  for (;;) {
    skip_ws();
    if (i >= text.size()) throw fail("unterminated matrix literal");
    const char ch = text[i];
    if (ch == ']') {
      ++i;
      break;
    }
    if (ch == ';') {
      ++i;
      rows.emplace_back();
      continue;
    }
    if (ch == ',') {
      ++i;
      continue;
    }
    rows.back().push_back(number());
  }
  skip_ws();
  if (i != text.size()) throw fail("trailing characters after matrix literal");
  const std::size_t cols = rows.front().size();
  if (cols == 0) throw fail("empty matrix row");
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw fail("ragged matrix literal");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c];
  }
  return m;
}

}  // namespace stabcheck
