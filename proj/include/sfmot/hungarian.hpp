// Kuhn-Munkres (shortest augmenting path with potentials) for rectangular
// assignment problems.
#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace sfmot {

/// Row-to-column assignment; -1 marks an unassigned row.
struct Assignment {
  std::vector<int> row_to_col;
  std::vector<int> col_to_row;
};

/// Minimum-cost one-to-one assignment. The matrix is padded to square with
/// zero-cost dummies, so with rows != cols the surplus side is left unassigned.
/// Rows are inserted in index order and the column scan prefers the lowest
/// index on equal reduced cost, so ties resolve toward low (row, col) pairs.
template <std::floating_point T>
Assignment solve_min_assignment(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& cost) {
  const auto rows = static_cast<int>(cost.rows());
  const auto cols = static_cast<int>(cost.cols());
  if (!cost.allFinite()) throw std::invalid_argument("solve_min_assignment: non-finite cost");
  Assignment out{std::vector<int>(rows, -1), std::vector<int>(cols, -1)};
  const int n = std::max(rows, cols);
  if (rows == 0 || cols == 0) return out;

  auto at = [&](int i, int j) -> T { return (i < rows && j < cols) ? cost(i, j) : T(0); };
  constexpr T inf = std::numeric_limits<T>::infinity();

  // 1-based potentials; p[j] = row matched to column j, 0 = none.
  std::vector<T> u(n + 1, T(0)), v(n + 1, T(0)), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), char(0));
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      T delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const T cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= n; ++j) {
    const int i = p[j] - 1;
    if (i >= 0 && i < rows && j - 1 < cols) {
      out.row_to_col[i] = j - 1;
      out.col_to_row[j - 1] = i;
    }
  }
  return out;
}

/// Maximum-total-similarity assignment (minimizes the negated matrix).
template <std::floating_point T>
Assignment solve_max_assignment(const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& similarity) {
  return solve_min_assignment<T>(-similarity);
}

}  // namespace sfmot
