/* Copyright 2026 The GRM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grm/errors.hpp"

namespace grm {

/// Dense row-major matrix of doubles. Batches of descriptors and gradients
/// are stored one sample per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_dims(data_.size() == rows_ * cols_, "Matrix: data size does not match shape");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      require_dims(rows[i].size() == m.cols_, "Matrix::from_rows: ragged rows");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require_dims(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k)
    m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_dims(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Square matrix whose symmetry and finiteness have been checked on entry.
class SymMatrix {
 public:
  SymMatrix() = default;

  /// Validates `m`; throws InvalidInput if it is not square, finite and
  /// symmetric to 1e-12 relative.
  explicit SymMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw InvalidInput("SymMatrix: matrix is not square");
    if (!m_.all_finite()) throw InvalidInput("SymMatrix: non-finite entry");
    for (std::size_t i = 0; i < dim(); ++i)
      for (std::size_t j = i + 1; j < dim(); ++j) {
        const double a = m_(i, j), b = m_(j, i);
        if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(a)))
          throw InvalidInput("SymMatrix: matrix is not symmetric");
      }
  }

  /// (m + mᵀ)/2, for products that are symmetric only up to rounding.
  static SymMatrix symmetrized(const Matrix& m) {
    require_dims(m.rows() == m.cols(), "SymMatrix::symmetrized: matrix is not square");
    Matrix s(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
    return SymMatrix(std::move(s));
  }

  static SymMatrix identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }

  std::size_t dim() const { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }

  bool operator==(const SymMatrix&) const = default;

 private:
  Matrix m_;
};

/// A = U·diag(λ)·Uᵀ with λ sorted descending and U orthonormal.
struct EigenDecomposition {
  Matrix basis;                      // columns are eigenvectors
  std::vector<double> eigenvalues;   // descending
  double mean_eigenvalue = 0.0;

  std::size_t dim() const { return eigenvalues.size(); }
};

namespace detail {

inline void normalize_signs_and_sort(Matrix& v, std::vector<double>& w) {
  const std::size_t n = w.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Stable so equal eigenvalues keep their solver order.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });

  Matrix sorted(n, n);
  std::vector<double> sorted_w(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    sorted_w[k] = w[src];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::abs(v(i, src)) > std::abs(v(arg, src))) arg = i;
    const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) sorted(i, k) = sign * v(i, src);
  }
  v = std::move(sorted);
  w = std::move(sorted_w);
}

}  // namespace detail

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps over every (p, q) pair and zeroes a(p, q) with a plane rotation
/// until the off-diagonal Frobenius norm drops below 1e-12·‖A‖_F. Each
/// eigenvector is signed so that its largest-magnitude entry is positive,
/// making the output a deterministic function of the input bits.
inline EigenDecomposition eigh_sym(const SymMatrix& input, int max_sweeps = 100) {
  const std::size_t n = input.dim();
  if (n == 0) throw InvalidInput("eigh_sym: empty matrix");

  Matrix a = input.matrix();
  Matrix v = Matrix::identity(n);
  const double norm = frobenius_norm(a);
  const double tol = 1e-12 * norm;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  bool converged = false;
  for (int sweep = 0; sweep <= max_sweeps; ++sweep) {
    if (off_norm() <= tol) {
      converged = true;
      break;
    }
    if (sweep == max_sweeps) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = 0.5 * (a(q, q) - a(p, p)) / apq;
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = a(r, p);
          const double arq = a(r, q);
          const double nrp = arp - s * (arq + tau * arp);
          const double nrq = arq + s * (arp - tau * arq);
          a(r, p) = nrp;
          a(p, r) = nrp;
          a(r, q) = nrq;
          a(q, r) = nrq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }
  if (!converged)
    throw ConvergenceError("eigh_sym: no convergence after " + std::to_string(max_sweeps) +
                           " sweeps");

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = a(i, i);
  detail::normalize_signs_and_sort(v, w);

  EigenDecomposition out;
  out.basis = std::move(v);
  out.eigenvalues = std::move(w);
  out.mean_eigenvalue =
      std::accumulate(out.eigenvalues.begin(), out.eigenvalues.end(), 0.0) / static_cast<double>(n);
  return out;
}

/// U·diag(scales)·Uᵀ, explicitly symmetrized.
inline SymMatrix sym_sandwich(const Matrix& u, std::span<const double> scales) {
  const std::size_t n = u.rows();
  require_dims(u.cols() == n, "sym_sandwich: basis is not square");
  require_dims(scales.size() == n, "sym_sandwich: scale count differs from dimension");
  for (double s : scales)
    if (!std::isfinite(s) || s < 0.0) throw InvalidInput("sym_sandwich: scales must be finite and nonnegative");

  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += u(i, k) * scales[k] * u(j, k);
      m(i, j) = acc;
      m(j, i) = acc;
    }
  return SymMatrix::symmetrized(m);
}

/// max |UᵀU − I|.
inline double orthonormality_error(const Matrix& u) {
  const Matrix g = matmul(transpose(u), u);
  return max_abs_diff(g, Matrix::identity(u.cols()));
}

/// ‖U·diag(λ)·Uᵀ − A‖_F.
inline double reconstruction_error(const EigenDecomposition& e, const SymMatrix& a) {
  const std::size_t n = e.dim();
  Matrix r(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += e.basis(i, k) * e.eigenvalues[k] * e.basis(j, k);
      r(i, j) = acc - a(i, j);
    }
  return frobenius_norm(r);
}

}  // namespace grm
