#pragma once

#include <limits>
#include <vector>

#include <Eigen/Core>

#include "ispa/error.hpp"

namespace ispa {

/// Result of a linear sum assignment. row_to_col[i] is the column matched to
/// row i, or -1 when the matrix has more rows than columns and row i is left
/// out.
struct Assignment {
  std::vector<int> row_to_col;
  double total_cost = 0.0;
};

/// Minimum-cost one-to-one matching of min(rows, cols) pairs (Hungarian
/// method with row/column potentials, O(n^2 m)). Rectangular inputs are
/// handled by solving the transpose when rows > cols. Scans columns in
/// ascending order, so results are deterministic for a given matrix.
template <typename Derived>
Assignment solve_assignment(const Eigen::MatrixBase<Derived>& cost_in) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic> cost = cost_in.template cast<double>();
  if (!cost.allFinite()) throw Error("solve_assignment: cost matrix has non-finite entries");

  const Eigen::Index rows = cost.rows();
  const Eigen::Index cols = cost.cols();
  Assignment out;
  out.row_to_col.assign(static_cast<std::size_t>(rows), -1);
  if (rows == 0 || cols == 0) return out;

  const bool transposed = rows > cols;
  const Eigen::MatrixXd a = transposed ? Eigen::MatrixXd(cost.transpose()) : cost;
  const auto n = static_cast<std::size_t>(a.rows());
  const auto m = static_cast<std::size_t>(a.cols());

  // 1-based arrays; p[j] is the row matched to column j, column 0 is the
  // virtual source of each augmenting path.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    const auto r = static_cast<int>(p[j] - 1);
    const auto c = static_cast<int>(j - 1);
    if (transposed) {
      out.row_to_col[static_cast<std::size_t>(c)] = r;
    } else {
      out.row_to_col[static_cast<std::size_t>(r)] = c;
    }
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int c = out.row_to_col[static_cast<std::size_t>(i)];
    if (c >= 0) out.total_cost += cost(i, c);
  }
  return out;
}

}  // namespace ispa
