#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relax_mprk/errors.hpp"

namespace relax_mprk {

using Vector = std::vector<double>;

/// Dense row-major n x n matrix. Sized for the few-hundred unknowns the
/// Patankar systems produce; no blocking or sparsity.
class SquareMatrix {
 public:
  SquareMatrix() = default;

  explicit SquareMatrix(std::size_t n, double fill = 0.0)
      : n_(n), entries_(n * n, fill) {}

  SquareMatrix(std::initializer_list<std::initializer_list<double>> rows)
      : n_(rows.size()), entries_() {
    entries_.reserve(n_ * n_);
    for (const auto& r : rows) {
      if (r.size() != n_) {
        throw std::invalid_argument("SquareMatrix: ragged initializer");
      }
      entries_.insert(entries_.end(), r.begin(), r.end());
    }
  }

  static SquareMatrix identity(std::size_t n) {
    SquareMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t size() const { return n_; }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return entries_[r * n_ + c];
  }

  std::span<const double> row(std::size_t r) const {
    return {entries_.data() + r * n_, n_};
  }

  Vector apply(std::span<const double> x) const {
    Vector y(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n_; ++c) acc += entries_[r * n_ + c] * x[c];
      y[r] = acc;
    }
    return y;
  }

  double norm_inf() const {
    double best = 0.0;
    for (std::size_t r = 0; r < n_; ++r) {
      double s = 0.0;
      for (double v : row(r)) s += std::abs(v);
      best = std::max(best, s);
    }
    return best;
  }

  bool all_finite() const {
    for (double v : entries_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> entries_;
};

/// Solves A x = b by Gaussian elimination with partial pivoting.
///
/// A pivot whose magnitude falls below 1e-14 times the largest entry of its
/// original row is reported as singular. The matrix is taken by value and
/// used as factorization scratch.
inline Vector lu_solve(SquareMatrix a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (b.size() != n) {
    throw std::invalid_argument("lu_solve: right-hand side has size " +
                                std::to_string(b.size()) + ", expected " +
                                std::to_string(n));
  }
  if (!a.all_finite()) throw DomainError("lu_solve: non-finite matrix entry");

  constexpr double kPivotTol = 1e-14;
  Vector x(b.begin(), b.end());
  std::vector<double> scale(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (double v : a.row(r)) scale[r] = std::max(scale[r], std::abs(v));
  }

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(a(k, k));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double v = std::abs(a(r, k));
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (!(best > kPivotTol * scale[piv]) || best == 0.0) {
      throw SingularMatrixError("lu_solve: numerically singular pivot in column " +
                                std::to_string(k));
    }
    if (piv != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(piv, c));
      std::swap(x[k], x[piv]);
      std::swap(scale[k], scale[piv]);
    }
    const double inv = 1.0 / a(k, k);
    for (std::size_t r = k + 1; r < n; ++r) {
      const double factor = a(r, k) * inv;
      if (factor == 0.0) continue;
      a(r, k) = 0.0;
      for (std::size_t c = k + 1; c < n; ++c) a(r, c) -= factor * a(k, c);
      x[r] -= factor * x[k];
    }
  }

  for (std::size_t k = n; k-- > 0;) {
    double acc = x[k];
    for (std::size_t c = k + 1; c < n; ++c) acc -= a(k, c) * x[c];
    x[k] = acc / a(k, k);
  }
  return x;
}

}  // namespace relax_mprk
