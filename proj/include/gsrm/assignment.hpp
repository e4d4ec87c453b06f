#pragma once

// Rectangular linear assignment (Kuhn-Munkres with potentials), with a
// deterministic choice among optimal assignments: the lexicographically
// smallest column sequence over rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "gsrm/error.hpp"

namespace gsrm {

// Dense row-major matrix of costs to minimize.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// row_to_col[r] is the assigned column or npos when the row is left over
// (more rows than columns).
struct Assignment {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> row_to_col;
  double total_cost = 0.0;
};

namespace detail {

class LexicographicRepair {
 public:
  LexicographicRepair(const std::vector<std::vector<std::size_t>>& tight, std::vector<std::size_t>& row_to_col,
                      std::vector<std::size_t>& col_to_row)
      : tight_(tight), row_to_col_(row_to_col), col_to_row_(col_to_row) {}

  void run() {
    const std::size_t n = row_to_col_.size();
    for (std::size_t i = 0; i < n; ++i) {
      first_free_row_ = i + 1;
      for (std::size_t j : tight_[i]) {
        if (j >= row_to_col_[i]) break;
        const std::size_t r = col_to_row_[j];
        if (r < i) continue;  // column held by a fixed row
        visited_.assign(n, 0);
        visited_[j] = 1;
        if (augment(r, row_to_col_[i])) {
          row_to_col_[i] = j;
          col_to_row_[j] = i;
          break;
        }
      }
    }
  }

 private:
  // Re-routes row r away from its column so that target becomes its column
  // or is reached through an alternating path over unfixed rows.
  bool augment(std::size_t r, std::size_t target) {
    for (std::size_t c : tight_[r]) {
      if (visited_[c]) continue;
      visited_[c] = 1;
      if (c == target) {
        row_to_col_[r] = c;
        col_to_row_[c] = r;
        return true;
      }
      const std::size_t next = col_to_row_[c];
      if (next < first_free_row_) continue;
      if (augment(next, target)) {
        row_to_col_[r] = c;
        col_to_row_[c] = r;
        return true;
      }
    }
    return false;
  }

  const std::vector<std::vector<std::size_t>>& tight_;
  std::vector<std::size_t>& row_to_col_;
  std::vector<std::size_t>& col_to_row_;
  std::vector<std::uint8_t> visited_;
  std::size_t first_free_row_ = 0;
};

}  // namespace detail

// Minimum-cost assignment of min(rows, cols) pairs. Missing rows/columns are
// padded with zero-cost dummies, so a real pair is only used when it is no
// worse than leaving both sides unassigned.
inline Assignment solve_assignment(const CostMatrix& cost, double tie_tolerance = 1e-12) {
  const std::size_t n = std::max(cost.rows, cost.cols);
  Assignment result;
  result.row_to_col.assign(cost.rows, Assignment::npos);
  if (n == 0) return result;
  for (double v : cost.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "assignment costs must be finite");
  }
  auto c = [&](std::size_t i, std::size_t j) -> double {
    return (i < cost.rows && j < cost.cols) ? cost(i, j) : 0.0;
  };

  // Shortest augmenting path formulation, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<std::uint8_t> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
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

  std::vector<std::size_t> row_to_col(n), col_to_row(n);
  for (std::size_t j = 1; j <= n; ++j) {
    row_to_col[p[j] - 1] = j - 1;
    col_to_row[j - 1] = p[j] - 1;
  }

  // Every optimal assignment lives on the tight edges of the final potentials.
  std::vector<std::vector<std::size_t>> tight(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(c(i, j) - u[i + 1] - v[j + 1]) <= tie_tolerance || row_to_col[i] == j) tight[i].push_back(j);
    }
  }
  detail::LexicographicRepair(tight, row_to_col, col_to_row).run();

  for (std::size_t i = 0; i < cost.rows; ++i) {
    const std::size_t j = row_to_col[i];
    if (j < cost.cols) {
      result.row_to_col[i] = j;
      result.total_cost += cost(i, j);
    }
  }
  return result;
}

}  // namespace gsrm
