#pragma once

// Cyclic Jacobi eigensolver for small dense symmetric matrices.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>

#include "dpa/error.hpp"

namespace dpa {

template <std::size_t N>
using SquareMatrix = std::array<std::array<double, N>, N>;

template <std::size_t N>
struct SymmetricEigen {
  std::array<double, N> values{};  // descending
  SquareMatrix<N> vectors{};       // vectors[k] is the unit eigenvector of values[k]
  int sweeps = 0;
};

template <std::size_t N>
double off_diagonal_norm(const SquareMatrix<N>& a) {
  double s = 0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      if (i != j) s += a[i][j] * a[i][j];
  return std::sqrt(s);
}

template <std::size_t N>
double frobenius_norm(const SquareMatrix<N>& a) {
  double s = 0;
  for (const auto& row : a)
    for (double v : row) s += v * v;
  return std::sqrt(s);
}

/// Diagonalizes the symmetric matrix `input` (only symmetry is assumed, the
/// upper triangle is used). Converges when the off-diagonal Frobenius norm
/// drops to `tolerance` times the matrix Frobenius norm. Throws EigenFailure
/// after `max_sweeps` sweeps without convergence.
template <std::size_t N>
SymmetricEigen<N> jacobi_eigen(const SquareMatrix<N>& input, double tolerance = 1e-12, int max_sweeps = 100) {
  SquareMatrix<N> a{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i; j < N; ++j) a[i][j] = a[j][i] = input[i][j];

  SquareMatrix<N> v{};
  for (std::size_t i = 0; i < N; ++i) v[i][i] = 1.0;

  const double scale = frobenius_norm(a);
  SymmetricEigen<N> out;
  bool converged = scale == 0.0;

  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    if (off_diagonal_norm(a) <= tolerance * scale) {
      converged = true;
      break;
    }
    out.sweeps = sweep + 1;
    for (std::size_t p = 0; p + 1 < N; ++p) {
      for (std::size_t q = p + 1; q < N; ++q) {
        const double apq = a[p][q];
        if (apq == 0.0) continue;
        // Annihilate negligible elements outright once past the first sweeps.
        const double g = 100.0 * std::abs(apq);
        if (sweep > 3 && std::abs(a[p][p]) + g == std::abs(a[p][p]) && std::abs(a[q][q]) + g == std::abs(a[q][q])) {
          a[p][q] = a[q][p] = 0.0;
          continue;
        }
        const double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < N; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < N; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        a[p][q] = a[q][p] = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
          const double vkp = v[k][p];
          const double vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged && off_diagonal_norm(a) > tolerance * scale) {
    throw Error(ErrorCode::EigenFailure, "Jacobi iteration did not converge");
  }

  std::array<std::size_t, N> order{};
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i][i] > a[j][j]; });
  for (std::size_t k = 0; k < N; ++k) {
    out.values[k] = a[order[k]][order[k]];
    for (std::size_t r = 0; r < N; ++r) out.vectors[k][r] = v[r][order[k]];
  }
  return out;
}

}  // namespace dpa
