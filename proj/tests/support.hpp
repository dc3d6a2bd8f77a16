#pragma once

// Reference implementations used by the tests. They share nothing with the
// library beyond the public types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "stepalign/autodiff.hpp"
#include "stepalign/core.hpp"
#include "stepalign/rng.hpp"

namespace testsupport {

using stepalign::Matrix;

inline Matrix random_matrix(stepalign::Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline Matrix random_unit_rows(stepalign::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    m.row(i) /= m.row(i).norm();
  }
  return m;
}

/// Sorted-copy nearest rank percentile.
inline double percentile_by_sort(const Matrix& m, double p) {
  std::vector<double> v(m.data(), m.data() + m.size());
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

struct OracleResult {
  double cost = std::numeric_limits<double>::infinity();
  int drops = 0;  // rows + columns dropped in the optimum found first
};

/// One-to-one: each row takes a strictly later column than the previous
/// matched row, or is dropped; untouched columns are dropped.
inline OracleResult one_to_one_oracle(const Matrix& c, double row_drop, double col_drop) {
  const int k = static_cast<int>(c.rows()), n = static_cast<int>(c.cols());
  OracleResult best;
  std::vector<int> pick(static_cast<std::size_t>(k), -1);
  std::function<void(int, int)> rec = [&](int row, int next_col) {
    if (row == k) {
      double cost = 0.0;
      int matched = 0;
      for (int i = 0; i < k; ++i) {
        if (pick[static_cast<std::size_t>(i)] < 0) {
          cost += row_drop;
        } else {
          cost += c(i, pick[static_cast<std::size_t>(i)]);
          ++matched;
        }
      }
      cost += col_drop * (n - matched);
      const int drops = (k - matched) + (n - matched);
      if (cost < best.cost) best = {cost, drops};
      return;
    }
    pick[static_cast<std::size_t>(row)] = -1;
    rec(row + 1, next_col);
    for (int j = next_col; j < n; ++j) {
      pick[static_cast<std::size_t>(row)] = j;
      rec(row + 1, j + 1);
    }
  };
  rec(0, 0);
  return best;
}

/// Many-to-one: every column goes to a row (non-decreasing left to right) or
/// is dropped; rows receiving no column are dropped.
inline OracleResult many_to_one_oracle(const Matrix& c, double row_drop, double col_drop) {
  const int k = static_cast<int>(c.rows()), n = static_cast<int>(c.cols());
  OracleResult best;
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  std::function<void(int, int)> rec = [&](int col, int min_row) {
    if (col == n) {
      double cost = 0.0;
      std::vector<bool> used(static_cast<std::size_t>(k), false);
      int dropped_cols = 0;
      for (int j = 0; j < n; ++j) {
        const int r = owner[static_cast<std::size_t>(j)];
        if (r < 0) {
          cost += col_drop;
          ++dropped_cols;
        } else {
          cost += c(r, j);
          used[static_cast<std::size_t>(r)] = true;
        }
      }
      int dropped_rows = 0;
      for (int i = 0; i < k; ++i)
        if (!used[static_cast<std::size_t>(i)]) ++dropped_rows;
      cost += row_drop * dropped_rows;
      if (cost < best.cost) best = {cost, dropped_rows + dropped_cols};
      return;
    }
    owner[static_cast<std::size_t>(col)] = -1;
    rec(col + 1, min_row);
    for (int r = min_row; r < k; ++r) {
      owner[static_cast<std::size_t>(col)] = r;
      rec(col + 1, r);
    }
  };
  rec(0, 0);
  return best;
}

/// Cheapest monotone path from (0,0) to (K-1,N-1) with unit steps.
inline double dtw_path_oracle(const Matrix& c) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int, int, double)> rec = [&](int i, int j, double acc) {
    acc += c(i, j);
    if (i == c.rows() - 1 && j == c.cols() - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < c.rows()) rec(i + 1, j, acc);
    if (j + 1 < c.cols()) rec(i, j + 1, acc);
    if (i + 1 < c.rows() && j + 1 < c.cols()) rec(i + 1, j + 1, acc);
  };
  rec(0, 0, 0.0);
  return best;
}

/// Minimum over all permutations of a square matrix.
inline double assignment_oracle(const Matrix& c) {
  std::vector<int> perm(static_cast<std::size_t>(c.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += c(static_cast<Eigen::Index>(i), perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct GradCheck {
  double max_rel_error = 0.0;  // over coordinates above the absolute floor
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t failures = 0;
};

using LossBuilder = std::function<stepalign::ad::Var(stepalign::ad::Tape&, const std::vector<stepalign::ad::Var>&)>;

/// Central differences over every coordinate of every input. A coordinate
/// passes when |analytic - numeric| <= abs_floor or the relative error is
/// within rel_tol.
inline GradCheck finite_difference_check(const std::vector<Matrix>& inputs, const LossBuilder& build,
                                         double eps = 1e-5, double rel_tol = 1e-4, double abs_floor = 1e-8) {
  using namespace stepalign;
  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& m : inputs) vars.push_back(tape.leaf(m));
    ad::Var loss = build(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }
  auto eval = [&](const std::vector<Matrix>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& m : xs) vars.push_back(tape.constant(m));
    return build(tape, vars).scalar();
  };
  GradCheck out;
  std::vector<Matrix> xs = inputs;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    for (Eigen::Index k = 0; k < xs[t].size(); ++k) {
      const double orig = xs[t].data()[k];
      xs[t].data()[k] = orig + eps;
      const double fp = eval(xs);
      xs[t].data()[k] = orig - eps;
      const double fm = eval(xs);
      xs[t].data()[k] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[t].data()[k];
      const double diff = std::abs(a - numeric);
      const double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-300});
      ++out.coordinates;
      out.max_abs_error = std::max(out.max_abs_error, diff);
      if (diff > abs_floor) {
        out.max_rel_error = std::max(out.max_rel_error, rel);
        if (rel > rel_tol) ++out.failures;
      }
    }
  }
  return out;
}

}  // namespace testsupport
