#include "simplex.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace balsam::detail {

namespace {

constexpr double kEps = 1e-11;

/// One tableau pass with Bland's anti-cycling rule. `tableau` holds the
/// constraint rows followed by the objective row; `basis` maps rows to
/// basic columns. `ncols` counts decision columns (rhs is the last column).
bool run_simplex(Eigen::MatrixXd& tableau, std::vector<int>& basis, int ncols) {
  const int rows = static_cast<int>(tableau.rows()) - 1;
  const int obj = rows;
  while (true) {
    int pivot_col = -1;
    for (int j = 0; j < ncols; ++j) {
      if (tableau(obj, j) < -kEps) {
        pivot_col = j;
        break;
      }
    }
    if (pivot_col < 0) return true;  // optimal

    int pivot_row = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < rows; ++i) {
      if (tableau(i, pivot_col) > kEps) {
        const double ratio = tableau(i, ncols) / tableau(i, pivot_col);
        if (ratio < best_ratio - kEps ||
            (ratio < best_ratio + kEps && pivot_row >= 0 && basis[i] < basis[pivot_row])) {
          best_ratio = ratio;
          pivot_row = i;
        }
      }
    }
    if (pivot_row < 0) return false;  // unbounded

    tableau.row(pivot_row) /= tableau(pivot_row, pivot_col);
    for (int i = 0; i <= obj; ++i) {
      if (i == pivot_row) continue;
      const double factor = tableau(i, pivot_col);
      if (factor != 0.0) tableau.row(i) -= factor * tableau.row(pivot_row);
    }
    basis[pivot_row] = pivot_col;
  }
}

}  // namespace

std::optional<Eigen::VectorXd> solve_linear_program(const Eigen::MatrixXd& constraints,
                                                    const Eigen::VectorXd& rhs,
                                                    const Eigen::VectorXd& cost) {
  const int m = static_cast<int>(constraints.rows());
  const int n = static_cast<int>(constraints.cols());

  // Phase 1: artificial variables, rows flipped so the rhs is nonnegative.
  Eigen::MatrixXd tableau = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  for (int i = 0; i < m; ++i) {
    const double sign = rhs[i] < 0.0 ? -1.0 : 1.0;
    tableau.block(i, 0, 1, n) = sign * constraints.row(i);
    tableau(i, n + i) = 1.0;
    tableau(i, n + m) = sign * rhs[i];
  }
  for (int j = 0; j < n + m; ++j) {
    if (j >= n) {
      tableau(m, j) = 0.0;
    } else {
      double col_sum = 0.0;
      for (int i = 0; i < m; ++i) col_sum += tableau(i, j);
      tableau(m, j) = -col_sum;
    }
  }
  tableau(m, n + m) = -tableau.block(0, n + m, m, 1).sum();

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;
  if (!run_simplex(tableau, basis, n + m)) return std::nullopt;
  if (std::abs(tableau(m, n + m)) > 1e-7) return std::nullopt;  // infeasible

  // Pivot any artificial variables left in the basis out of it.
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n) continue;
    int replacement = -1;
    for (int j = 0; j < n; ++j) {
      if (std::abs(tableau(i, j)) > kEps) {
        replacement = j;
        break;
      }
    }
    if (replacement < 0) continue;  // redundant row
    tableau.row(i) /= tableau(i, replacement);
    for (int r = 0; r <= m; ++r) {
      if (r == i) continue;
      const double factor = tableau(r, replacement);
      if (factor != 0.0) tableau.row(r) -= factor * tableau.row(i);
    }
    basis[i] = replacement;
  }

  // Phase 2 on the original objective, artificial columns dropped.
  Eigen::MatrixXd tableau2 = Eigen::MatrixXd::Zero(m + 1, n + 1);
  tableau2.block(0, 0, m, n) = tableau.block(0, 0, m, n);
  tableau2.block(0, n, m, 1) = tableau.block(0, n + m, m, 1);
  for (int j = 0; j < n; ++j) tableau2(m, j) = cost[j];
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n) {
      const double factor = tableau2(m, basis[i]);
      if (factor != 0.0) tableau2.row(m) -= factor * tableau2.row(i);
    }
  }
  if (!run_simplex(tableau2, basis, n)) return std::nullopt;

  Eigen::VectorXd solution = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n) solution[basis[i]] = std::max(0.0, tableau2(i, n));
  }
  return solution;
}

}  // namespace balsam::detail
