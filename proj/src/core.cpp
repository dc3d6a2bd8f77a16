#include "stepalign/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace stepalign {

std::string_view to_string(SequenceKind kind) {
  switch (kind) {
    case SequenceKind::video: return "video";
    case SequenceKind::phrases: return "phrases";
    case SequenceKind::step_texts: return "step_texts";
    case SequenceKind::slots: return "slots";
  }
  return "unknown";
}

SequenceKind sequence_kind_from_code(std::uint16_t code) {
  if (code > 3) throw DataError("unknown sequence kind code " + std::to_string(code));
  return static_cast<SequenceKind>(code);
}

EmbeddingSequence::EmbeddingSequence(Matrix data, SequenceKind kind)
    : data_(std::move(data)), kind_(kind) {
  if (data_.rows() < 1 || data_.cols() < 1)
    throw InvariantError("embedding sequence must have length >= 1 and dim >= 1");
  if (!data_.allFinite()) throw InvariantError("embedding sequence contains non-finite values");
}

void DatasetSample::validate() const {
  if (video.kind() != SequenceKind::video) throw DataError(id + ": video has wrong kind");
  if (phrases.dim() != video.dim()) throw DataError(id + ": phrase dim differs from video dim");
  int prev_end = -1;
  for (const auto& s : gt_segments) {
    if (s.start > s.end || s.start < 0 || s.end >= video.length())
      throw DataError(id + ": gt segment out of range");
    if (s.start <= prev_end) throw DataError(id + ": gt segments overlap or are unsorted");
    prev_end = s.end;
  }
  if (gt_step_texts && gt_step_texts->dim() != video.dim())
    throw DataError(id + ": step text dim differs from video dim");
  if (phrase_relevance && static_cast<Eigen::Index>(phrase_relevance->size()) != phrases.length())
    throw DataError(id + ": phrase_relevance length differs from phrase count");
}

std::string_view to_string(MatchMode mode) {
  switch (mode) {
    case MatchMode::one_to_one: return "one_to_one";
    case MatchMode::many_to_one: return "many_to_one";
    case MatchMode::many_to_many: return "many_to_many";
  }
  return "unknown";
}

MatchMode match_mode_from_string(std::string_view name) {
  if (name == "one_to_one") return MatchMode::one_to_one;
  if (name == "many_to_one") return MatchMode::many_to_one;
  if (name == "many_to_many") return MatchMode::many_to_many;
  throw InvariantError("unknown match mode '" + std::string(name) + "'");
}

namespace {

void check_index_set(const std::vector<int>& idx, int bound, const char* what) {
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= bound) throw InvariantError(std::string(what) + " index out of range");
    if (k > 0 && idx[k] <= idx[k - 1])
      throw InvariantError(std::string(what) + " indices must be strictly increasing");
  }
}

}  // namespace

void check_correspondence(const MaskMatrix& match, const std::vector<int>& dropped_rows,
                          const std::vector<int>& dropped_cols, MatchMode mode) {
  const int rows = static_cast<int>(match.rows());
  const int cols = static_cast<int>(match.cols());
  check_index_set(dropped_rows, rows, "dropped row");
  check_index_set(dropped_cols, cols, "dropped column");

  std::vector<bool> row_drop(rows, false), col_drop(cols, false);
  for (int i : dropped_rows) row_drop[i] = true;
  for (int j : dropped_cols) col_drop[j] = true;

  std::vector<int> first(rows, -1), last(rows, -1);
  for (int i = 0; i < rows; ++i) {
    int sum = 0;
    for (int j = 0; j < cols; ++j) {
      const auto v = match(i, j);
      if (v > 1) throw InvariantError("match matrix entries must be 0 or 1");
      if (v == 1) {
        ++sum;
        if (first[i] < 0) first[i] = j;
        last[i] = j;
      }
    }
    if (row_drop[i] && sum > 0) throw InvariantError("dropped row " + std::to_string(i) + " has matches");
    if (!row_drop[i] && sum == 0)
      throw InvariantError("row " + std::to_string(i) + " is neither dropped nor matched");
    if (mode == MatchMode::one_to_one && sum > 1)
      throw InvariantError("row " + std::to_string(i) + " matches more than one column");
  }
  for (int j = 0; j < cols; ++j) {
    int sum = 0;
    for (int i = 0; i < rows; ++i) sum += match(i, j);
    if (col_drop[j] && sum > 0) throw InvariantError("dropped column " + std::to_string(j) + " has matches");
    if (!col_drop[j] && sum == 0)
      throw InvariantError("column " + std::to_string(j) + " is neither dropped nor matched");
    if (sum > 1 && mode != MatchMode::many_to_many)
      throw InvariantError("column " + std::to_string(j) + " matches more than one row");
  }
  if (mode == MatchMode::many_to_many && (!dropped_rows.empty() || !dropped_cols.empty()))
    throw InvariantError("many_to_many correspondences have no drops");
  // Rows of a many_to_many path may share their boundary column.
  const bool shared_boundary = mode == MatchMode::many_to_many;
  int prev_last = -1;
  for (int i = 0; i < rows; ++i) {
    if (first[i] < 0) continue;
    if (shared_boundary ? first[i] < prev_last : first[i] <= prev_last)
      throw InvariantError("matched pairs cross at row " + std::to_string(i));
    if (shared_boundary) {
      for (int j = first[i]; j <= last[i]; ++j)
        if (!match(i, j)) throw InvariantError("many_to_many row " + std::to_string(i) + " is not contiguous");
      if (prev_last >= 0 && first[i] > prev_last + 1)
        throw InvariantError("many_to_many path skips a column before row " + std::to_string(i));
    }
    prev_last = last[i];
  }
}

Correspondence::Correspondence(MaskMatrix match, double total_cost, std::vector<int> dropped_rows,
                               std::vector<int> dropped_cols, MatchMode mode)
    : match_(std::move(match)),
      total_cost_(total_cost),
      dropped_rows_(std::move(dropped_rows)),
      dropped_cols_(std::move(dropped_cols)),
      mode_(mode) {
  check_correspondence(match_, dropped_rows_, dropped_cols_, mode_);
}

std::vector<std::pair<int, int>> Correspondence::matched_pairs() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < rows(); ++i)
    for (int j = 0; j < cols(); ++j)
      if (match_(i, j)) out.emplace_back(i, j);
  return out;
}

int Correspondence::num_matches() const {
  return static_cast<int>(match_.cast<int>().sum());
}

bool Correspondence::row_dropped(int i) const {
  return std::binary_search(dropped_rows_.begin(), dropped_rows_.end(), i);
}

bool Correspondence::col_dropped(int j) const {
  return std::binary_search(dropped_cols_.begin(), dropped_cols_.end(), j);
}

int Correspondence::row_of_col(int j) const {
  for (int i = 0; i < rows(); ++i)
    if (match_(i, j)) return i;
  return -1;
}

SegmentLabeling::SegmentLabeling(std::vector<int> labels, std::vector<Segment> segments)
    : labels_(std::move(labels)), segments_(std::move(segments)) {}

SegmentLabeling SegmentLabeling::from_frame_labels(std::vector<int> labels) {
  std::map<int, Segment> spans;
  for (int f = 0; f < static_cast<int>(labels.size()); ++f) {
    const int l = labels[f];
    if (l < kBackground) throw InvariantError("frame label below -1");
    if (l == kBackground) continue;
    auto [it, inserted] = spans.try_emplace(l, Segment{l, f, f});
    if (!inserted) it->second.end = f;
  }
  std::vector<Segment> segments;
  segments.reserve(spans.size());
  for (const auto& [l, s] : spans) segments.push_back(s);
  std::sort(segments.begin(), segments.end(),
            [](const Segment& a, const Segment& b) { return a.start < b.start; });
  for (std::size_t k = 1; k < segments.size(); ++k)
    if (segments[k].start <= segments[k - 1].end)
      throw InvariantError("frames of different labels interleave; segments would overlap");
  return {std::move(labels), std::move(segments)};
}

SegmentLabeling SegmentLabeling::from_runs(std::vector<int> labels) {
  std::vector<Segment> segments;
  for (int f = 0; f < static_cast<int>(labels.size()); ++f) {
    const int l = labels[f];
    if (l < kBackground) throw InvariantError("frame label below -1");
    if (l == kBackground) continue;
    if (!segments.empty() && segments.back().label == l && segments.back().end == f - 1)
      segments.back().end = f;
    else
      segments.push_back({l, f, f});
  }
  return {std::move(labels), std::move(segments)};
}

SegmentLabeling SegmentLabeling::from_segments(int num_frames, std::vector<Segment> segments) {
  std::sort(segments.begin(), segments.end(),
            [](const Segment& a, const Segment& b) { return a.start < b.start; });
  std::vector<int> labels(num_frames, kBackground);
  int prev_end = -1;
  for (const auto& s : segments) {
    if (s.label < 0) throw InvariantError("segment label must be non-negative");
    if (s.start < 0 || s.end >= num_frames || s.start > s.end) throw InvariantError("segment out of range");
    if (s.start <= prev_end) throw InvariantError("segments overlap");
    prev_end = s.end;
    std::fill(labels.begin() + s.start, labels.begin() + s.end + 1, s.label);
  }
  return {std::move(labels), std::move(segments)};
}

Matrix normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (!(n > 0.0)) throw InvariantError("zero-norm row " + std::to_string(i));
    out.row(i) /= n;
  }
  return out;
}

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvariantError("dimension mismatch in cosine_matrix");
  return normalize_rows(a) * normalize_rows(b).transpose();
}

}  // namespace stepalign
