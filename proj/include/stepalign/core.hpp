#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace stepalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr int kBackground = -1;

// Error hierarchy. The CLI maps DataError to exit code 2 and NumericalError
// to exit code 3; InvariantError signals a bug or an invalid argument.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct InvariantError : Error {
  using Error::Error;
};

enum class SequenceKind : std::uint16_t { video = 0, phrases = 1, step_texts = 2, slots = 3 };

std::string_view to_string(SequenceKind kind);
SequenceKind sequence_kind_from_code(std::uint16_t code);

/// An ordered list of d-dimensional vectors, one per row. Always non-empty
/// and finite; immutable after construction.
class EmbeddingSequence {
 public:
  EmbeddingSequence(Matrix data, SequenceKind kind);

  [[nodiscard]] const Matrix& data() const noexcept { return data_; }
  [[nodiscard]] SequenceKind kind() const noexcept { return kind_; }
  [[nodiscard]] Eigen::Index length() const noexcept { return data_.rows(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return data_.cols(); }
  [[nodiscard]] auto row(Eigen::Index i) const { return data_.row(i); }

  [[nodiscard]] EmbeddingSequence with_kind(SequenceKind kind) const { return {data_, kind}; }

  friend bool operator==(const EmbeddingSequence& a, const EmbeddingSequence& b) {
    return a.kind_ == b.kind_ && a.data_.rows() == b.data_.rows() &&
           a.data_.cols() == b.data_.cols() && a.data_ == b.data_;
  }

 private:
  Matrix data_;
  SequenceKind kind_;
};

/// Inclusive frame range [start, end] carrying a step or slot label.
struct Segment {
  int label = kBackground;
  int start = 0;
  int end = 0;

  [[nodiscard]] int length() const { return end - start + 1; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct DatasetSample {
  std::string id;
  std::string task;
  EmbeddingSequence video;
  EmbeddingSequence phrases;
  std::vector<Segment> gt_segments;  // label = task step id
  std::optional<EmbeddingSequence> gt_step_texts;
  std::optional<std::vector<bool>> phrase_relevance;

  void validate() const;
};

/// one_to_one and many_to_one come from Drop-DTW; many_to_many is the
/// boundary-to-boundary path produced by classic DTW (no drops, a column may
/// pair with several consecutive rows).
enum class MatchMode { one_to_one, many_to_one, many_to_many };

std::string_view to_string(MatchMode mode);
MatchMode match_mode_from_string(std::string_view name);

/// Result of an alignment run: a binary K x N match matrix plus drop sets.
/// Construction checks every structural invariant of the given mode.
class Correspondence {
 public:
  Correspondence(MaskMatrix match, double total_cost, std::vector<int> dropped_rows,
                 std::vector<int> dropped_cols, MatchMode mode);

  [[nodiscard]] const MaskMatrix& match_matrix() const noexcept { return match_; }
  [[nodiscard]] double total_cost() const noexcept { return total_cost_; }
  [[nodiscard]] const std::vector<int>& dropped_rows() const noexcept { return dropped_rows_; }
  [[nodiscard]] const std::vector<int>& dropped_cols() const noexcept { return dropped_cols_; }
  [[nodiscard]] MatchMode mode() const noexcept { return mode_; }
  [[nodiscard]] int rows() const noexcept { return static_cast<int>(match_.rows()); }
  [[nodiscard]] int cols() const noexcept { return static_cast<int>(match_.cols()); }

  /// Matched (row, col) pairs in row-major order.
  [[nodiscard]] std::vector<std::pair<int, int>> matched_pairs() const;
  [[nodiscard]] int num_matches() const;
  [[nodiscard]] bool row_dropped(int i) const;
  [[nodiscard]] bool col_dropped(int j) const;
  /// Row matched to column j, or -1.
  [[nodiscard]] int row_of_col(int j) const;

 private:
  MaskMatrix match_;
  double total_cost_;
  std::vector<int> dropped_rows_;
  std::vector<int> dropped_cols_;
  MatchMode mode_;
};

/// Throws InvariantError describing the first violated invariant.
void check_correspondence(const MaskMatrix& match, const std::vector<int>& dropped_rows,
                          const std::vector<int>& dropped_cols, MatchMode mode);

/// Per-frame labels (-1 = background) together with labelled segments.
/// A segment spans [min, max] of the frames carrying its label; frames inside
/// the span may still be background.
class SegmentLabeling {
 public:
  SegmentLabeling() = default;

  /// One segment per distinct non-background label, spanning its frames.
  static SegmentLabeling from_frame_labels(std::vector<int> labels);
  /// One segment per maximal run of equal non-background labels; used when
  /// labels need not be temporally ordered.
  static SegmentLabeling from_runs(std::vector<int> labels);
  /// Fills every segment span with its label.
  static SegmentLabeling from_segments(int num_frames, std::vector<Segment> segments);

  [[nodiscard]] const std::vector<int>& frame_labels() const noexcept { return labels_; }
  [[nodiscard]] const std::vector<Segment>& segments() const noexcept { return segments_; }
  [[nodiscard]] int num_frames() const noexcept { return static_cast<int>(labels_.size()); }

  friend bool operator==(const SegmentLabeling&, const SegmentLabeling&) = default;

 private:
  SegmentLabeling(std::vector<int> labels, std::vector<Segment> segments);

  std::vector<int> labels_;
  std::vector<Segment> segments_;
};

/// Rows scaled to unit L2 norm; throws InvariantError on a zero-norm row.
Matrix normalize_rows(const Matrix& x);
/// cos(a_i, b_j) for every row pair.
Matrix cosine_matrix(const Matrix& a, const Matrix& b);

}  // namespace stepalign
