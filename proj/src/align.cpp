#include "stepalign/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace stepalign {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double drop_or_inf(const std::optional<double>& c) { return c ? *c : kInf; }

// Dense (rows+1) x (cols+1) table.
template <typename T>
class Grid {
 public:
  Grid(int rows, int cols, T fill) : cols_(cols + 1), data_(static_cast<std::size_t>(rows + 1) * (cols + 1), fill) {}
  T& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  T operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

 private:
  int cols_;
  std::vector<T> data_;
};

enum class Step : std::uint8_t { none, match, match_continue, match_new, drop_col, drop_row };

Correspondence assemble(const CostSpec& spec, MaskMatrix match, MatchMode mode) {
  std::vector<int> dropped_rows, dropped_cols;
  if (mode != MatchMode::many_to_many) {
    for (int i = 0; i < match.rows(); ++i)
      if (match.row(i).cast<int>().sum() == 0) dropped_rows.push_back(i);
    for (int j = 0; j < match.cols(); ++j)
      if (match.col(j).cast<int>().sum() == 0) dropped_cols.push_back(j);
  }
  const double cost = correspondence_cost(spec, match, dropped_rows.size(), dropped_cols.size());
  return {std::move(match), cost, std::move(dropped_rows), std::move(dropped_cols), mode};
}

Correspondence drop_dtw_one_to_one(const CostSpec& spec) {
  const Matrix& c = spec.match_cost;
  const int rows = static_cast<int>(c.rows());
  const int cols = static_cast<int>(c.cols());
  const double rd = drop_or_inf(spec.row_drop_cost);
  const double cd = drop_or_inf(spec.col_drop_cost);

  Grid<double> best(rows, cols, kInf);
  Grid<Step> back(rows, cols, Step::none);
  best(0, 0) = 0.0;
  for (int i = 1; i <= rows; ++i) {
    best(i, 0) = best(i - 1, 0) + rd;
    back(i, 0) = Step::drop_row;
  }
  for (int j = 1; j <= cols; ++j) {
    best(0, j) = best(0, j - 1) + cd;
    back(0, j) = Step::drop_col;
  }
  for (int i = 1; i <= rows; ++i) {
    for (int j = 1; j <= cols; ++j) {
      double v = best(i - 1, j - 1) + c(i - 1, j - 1);
      Step s = Step::match;
      if (const double alt = best(i, j - 1) + cd; alt < v) v = alt, s = Step::drop_col;
      if (const double alt = best(i - 1, j) + rd; alt < v) v = alt, s = Step::drop_row;
      best(i, j) = v;
      back(i, j) = s;
    }
  }
  if (!std::isfinite(best(rows, cols))) throw InvariantError("no feasible one_to_one alignment");

  MaskMatrix match = MaskMatrix::Zero(rows, cols);
  int i = rows, j = cols;
  while (i > 0 || j > 0) {
    switch (back(i, j)) {
      case Step::match: match(i - 1, j - 1) = 1; --i; --j; break;
      case Step::drop_col: --j; break;
      case Step::drop_row: --i; break;
      default: throw InvariantError("broken traceback");
    }
  }
  return assemble(spec, std::move(match), MatchMode::one_to_one);
}

// Two layers: `open` means the last consumed row has at least one match and
// may absorb further columns; `closed` means it was dropped (or no row yet).
Correspondence drop_dtw_many_to_one(const CostSpec& spec) {
  const Matrix& c = spec.match_cost;
  const int rows = static_cast<int>(c.rows());
  const int cols = static_cast<int>(c.cols());
  const double rd = drop_or_inf(spec.row_drop_cost);
  const double cd = drop_or_inf(spec.col_drop_cost);

  Grid<double> open(rows, cols, kInf), closed(rows, cols, kInf);
  Grid<Step> back_open(rows, cols, Step::none), back_closed(rows, cols, Step::none);
  auto best = [&](int i, int j) { return std::min(open(i, j), closed(i, j)); };

  closed(0, 0) = 0.0;
  for (int j = 1; j <= cols; ++j) {
    closed(0, j) = closed(0, j - 1) + cd;
    back_closed(0, j) = Step::drop_col;
  }
  for (int i = 1; i <= rows; ++i) {
    closed(i, 0) = closed(i - 1, 0) + rd;
    back_closed(i, 0) = Step::drop_row;
  }
  for (int i = 1; i <= rows; ++i) {
    for (int j = 1; j <= cols; ++j) {
      const double m = c(i - 1, j - 1);
      double v = open(i, j - 1) + m;
      Step s = Step::match_continue;
      if (const double alt = best(i - 1, j - 1) + m; alt < v) v = alt, s = Step::match_new;
      if (const double alt = open(i, j - 1) + cd; alt < v) v = alt, s = Step::drop_col;
      open(i, j) = v;
      back_open(i, j) = s;

      double w = closed(i, j - 1) + cd;
      Step t = Step::drop_col;
      if (const double alt = best(i - 1, j) + rd; alt < w) w = alt, t = Step::drop_row;
      closed(i, j) = w;
      back_closed(i, j) = t;
    }
  }
  const double total = best(rows, cols);
  if (!std::isfinite(total)) throw InvariantError("no feasible many_to_one alignment");

  MaskMatrix match = MaskMatrix::Zero(rows, cols);
  int i = rows, j = cols;
  bool in_open = open(rows, cols) <= closed(rows, cols);
  while (i > 0 || j > 0) {
    if (in_open) {
      switch (back_open(i, j)) {
        case Step::match_continue: match(i - 1, j - 1) = 1; --j; break;
        case Step::match_new:
          match(i - 1, j - 1) = 1;
          --i; --j;
          in_open = open(i, j) <= closed(i, j);
          break;
        case Step::drop_col: --j; break;
        default: throw InvariantError("broken traceback");
      }
    } else {
      switch (back_closed(i, j)) {
        case Step::drop_col: --j; break;
        case Step::drop_row:
          --i;
          in_open = open(i, j) <= closed(i, j);
          break;
        default: throw InvariantError("broken traceback");
      }
    }
  }
  return assemble(spec, std::move(match), MatchMode::many_to_one);
}

struct Candidate {
  double cost = kInf;
  int matches = -1;
  std::vector<std::pair<int, int>> pairs;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  if (a.matches != b.matches) return a.matches > b.matches;
  return a.pairs < b.pairs;
}

class Enumerator {
 public:
  Enumerator(const CostSpec& spec, MatchMode mode)
      : spec_(spec),
        mode_(mode),
        rows_(static_cast<int>(spec.match_cost.rows())),
        cols_(static_cast<int>(spec.match_cost.cols())),
        match_(MaskMatrix::Zero(rows_, cols_)) {}

  Candidate run() {
    if (mode_ == MatchMode::one_to_one)
      rows_one_to_one(0, -1);
    else
      cols_many_to_one(0, 0);
    return best_;
  }

 private:
  void consider() {
    std::vector<int> row_sum(rows_, 0), col_sum(cols_, 0);
    Candidate cand;
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j)
        if (match_(i, j)) {
          ++row_sum[i];
          ++col_sum[j];
          cand.pairs.emplace_back(i, j);
        }
    const auto dr = static_cast<std::size_t>(std::count(row_sum.begin(), row_sum.end(), 0));
    const auto dc = static_cast<std::size_t>(std::count(col_sum.begin(), col_sum.end(), 0));
    if (dr > 0 && !spec_.row_drop_cost) return;
    if (dc > 0 && !spec_.col_drop_cost) return;
    cand.matches = static_cast<int>(cand.pairs.size());
    cand.cost = correspondence_cost(spec_, match_, dr, dc);
    if (best_.matches < 0 || better(cand, best_)) best_ = std::move(cand);
  }

  // Each row is dropped or matched to a column right of the previous match.
  void rows_one_to_one(int i, int last_col) {
    if (i == rows_) {
      consider();
      return;
    }
    rows_one_to_one(i + 1, last_col);
    for (int j = last_col + 1; j < cols_; ++j) {
      match_(i, j) = 1;
      rows_one_to_one(i + 1, j);
      match_(i, j) = 0;
    }
  }

  // Each column is dropped or assigned to a row no earlier than the last one.
  void cols_many_to_one(int j, int min_row) {
    if (j == cols_) {
      consider();
      return;
    }
    cols_many_to_one(j + 1, min_row);
    for (int i = min_row; i < rows_; ++i) {
      match_(i, j) = 1;
      cols_many_to_one(j + 1, i);
      match_(i, j) = 0;
    }
  }

  const CostSpec& spec_;
  MatchMode mode_;
  int rows_, cols_;
  MaskMatrix match_;
  Candidate best_;
};

}  // namespace

void CostSpec::validate() const {
  if (match_cost.size() == 0) throw InvariantError("empty match-cost matrix");
  if (!match_cost.allFinite()) throw InvariantError("match-cost matrix contains non-finite values");
  if (row_drop_cost && !std::isfinite(*row_drop_cost)) throw InvariantError("row drop cost is not finite");
  if (col_drop_cost && !std::isfinite(*col_drop_cost)) throw InvariantError("column drop cost is not finite");
  if (!row_drop_cost && !col_drop_cost) throw InvariantError("at least one drop cost is required");
}

Matrix match_cost_matrix(const Matrix& rows, const Matrix& cols) {
  if (rows.cols() != cols.cols())
    throw InvariantError("dimension mismatch: " + std::to_string(rows.cols()) + " vs " + std::to_string(cols.cols()));
  return -cosine_matrix(rows, cols);
}

Matrix match_cost_matrix(const EmbeddingSequence& rows, const EmbeddingSequence& cols) {
  return match_cost_matrix(rows.data(), cols.data());
}

double percentile_drop_cost(const Matrix& costs, double p) {
  if (costs.size() == 0) throw InvariantError("percentile of an empty matrix");
  if (!(p > 0.0 && p <= 1.0)) throw InvariantError("percentile must lie in (0, 1]");
  if (!costs.allFinite()) throw InvariantError("percentile of non-finite costs");
  std::vector<double> flat(costs.data(), costs.data() + costs.size());
  std::sort(flat.begin(), flat.end());
  const auto n = static_cast<double>(flat.size());
  // The epsilon keeps products like 0.3 * 10 from rounding up a rank.
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, flat.size());
  return flat[rank - 1];
}

CostSpec percentile_cost_spec(Matrix costs, double p) {
  const double drop = percentile_drop_cost(costs, p);
  return {std::move(costs), drop, drop};
}

double correspondence_cost(const CostSpec& spec, const MaskMatrix& match, std::size_t num_dropped_rows,
                           std::size_t num_dropped_cols) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < match.rows(); ++i)
    for (Eigen::Index j = 0; j < match.cols(); ++j)
      if (match(i, j)) total += spec.match_cost(i, j);
  if (num_dropped_rows > 0) total += static_cast<double>(num_dropped_rows) * drop_or_inf(spec.row_drop_cost);
  if (num_dropped_cols > 0) total += static_cast<double>(num_dropped_cols) * drop_or_inf(spec.col_drop_cost);
  return total;
}

Correspondence drop_dtw(const CostSpec& spec, MatchMode mode) {
  spec.validate();
  switch (mode) {
    case MatchMode::one_to_one: return drop_dtw_one_to_one(spec);
    case MatchMode::many_to_one: return drop_dtw_many_to_one(spec);
    case MatchMode::many_to_many: break;
  }
  throw InvariantError("drop_dtw supports one_to_one and many_to_one only");
}

Correspondence dtw(const Matrix& costs) {
  if (costs.size() == 0) throw InvariantError("dtw of an empty matrix");
  if (!costs.allFinite()) throw InvariantError("dtw costs contain non-finite values");
  const int rows = static_cast<int>(costs.rows());
  const int cols = static_cast<int>(costs.cols());
  Matrix acc(rows, cols);
  Grid<Step> back(rows, cols, Step::none);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (i == 0 && j == 0) {
        acc(0, 0) = costs(0, 0);
        continue;
      }
      double v = kInf;
      Step s = Step::none;
      if (i > 0 && j > 0) v = acc(i - 1, j - 1), s = Step::match;
      if (j > 0 && acc(i, j - 1) < v) v = acc(i, j - 1), s = Step::drop_col;
      if (i > 0 && acc(i - 1, j) < v) v = acc(i - 1, j), s = Step::drop_row;
      acc(i, j) = v + costs(i, j);
      back(i, j) = s;
    }
  }
  MaskMatrix match = MaskMatrix::Zero(rows, cols);
  int i = rows - 1, j = cols - 1;
  match(i, j) = 1;
  while (i > 0 || j > 0) {
    switch (back(i, j)) {
      case Step::match: --i; --j; break;
      case Step::drop_col: --j; break;
      case Step::drop_row: --i; break;
      default: throw InvariantError("broken dtw traceback");
    }
    match(i, j) = 1;
  }
  CostSpec spec{costs, std::nullopt, std::nullopt};
  return assemble(spec, std::move(match), MatchMode::many_to_many);
}

Correspondence brute_force_align(const CostSpec& spec, MatchMode mode) {
  spec.validate();
  if (spec.match_cost.rows() > 6 || spec.match_cost.cols() > 7)
    throw InvariantError("brute_force_align is limited to K <= 6 and N <= 7");
  if (mode == MatchMode::many_to_many) throw InvariantError("brute_force_align supports Drop-DTW modes only");
  const Candidate best = Enumerator(spec, mode).run();
  if (best.matches < 0) throw InvariantError("no feasible alignment");
  MaskMatrix match = MaskMatrix::Zero(spec.match_cost.rows(), spec.match_cost.cols());
  for (const auto& [i, j] : best.pairs) match(i, j) = 1;
  return assemble(spec, std::move(match), mode);
}

}  // namespace stepalign
