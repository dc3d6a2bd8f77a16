#pragma once

#include <optional>

#include "stepalign/core.hpp"

namespace stepalign {

inline constexpr double kDefaultDropPercentile = 0.8;

/// Match costs between K row elements and N column elements plus per-side
/// drop penalties. An absent drop cost forbids dropping on that side.
struct CostSpec {
  Matrix match_cost;
  std::optional<double> row_drop_cost;
  std::optional<double> col_drop_cost;

  void validate() const;
};

/// Entry (i, j) = -cos(rows_i, cols_j).
Matrix match_cost_matrix(const EmbeddingSequence& rows, const EmbeddingSequence& cols);
Matrix match_cost_matrix(const Matrix& rows, const Matrix& cols);

/// Nearest-rank percentile of the flattened matrix: the element at sorted
/// index ceil(p * n) - 1.
double percentile_drop_cost(const Matrix& costs, double p = kDefaultDropPercentile);

/// Builds a CostSpec with both drop costs set to the percentile of `costs`.
CostSpec percentile_cost_spec(Matrix costs, double p = kDefaultDropPercentile);

/// Minimum-cost Drop-DTW correspondence. Traceback ties prefer a match over a
/// column drop over a row drop. Throws InvariantError when no alignment is
/// feasible under the given drop permissions.
Correspondence drop_dtw(const CostSpec& spec, MatchMode mode);

/// Classic boundary-to-boundary DTW with steps (1,0), (0,1), (1,1).
Correspondence dtw(const Matrix& costs);

/// Exhaustive enumeration of every valid correspondence (K <= 6, N <= 7).
/// Ties prefer more matches, then the lexicographically smallest match set.
Correspondence brute_force_align(const CostSpec& spec, MatchMode mode);

/// Canonical cost of a correspondence: matched costs summed in row-major
/// order, then row drops, then column drops.
double correspondence_cost(const CostSpec& spec, const MaskMatrix& match, std::size_t num_dropped_rows,
                           std::size_t num_dropped_cols);

}  // namespace stepalign
