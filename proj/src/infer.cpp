#include "stepalign/infer.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace stepalign {

namespace {

std::vector<int> select_slots_for_steps(const Matrix& slots, const Matrix& step_texts, double drop_percentile,
                                        std::optional<Correspondence>* stage1) {
  if (slots.rows() < step_texts.rows())
    throw DataError("too few slots: " + std::to_string(slots.rows()) + " slots for " +
                    std::to_string(step_texts.rows()) + " steps");
  Matrix costs = match_cost_matrix(slots, step_texts);
  const double drop = percentile_drop_cost(costs, drop_percentile);
  Correspondence corr = drop_dtw(CostSpec{std::move(costs), drop, std::nullopt}, MatchMode::one_to_one);
  std::vector<int> slot_for_step(static_cast<std::size_t>(step_texts.rows()), -1);
  for (const auto& [i, j] : corr.matched_pairs()) slot_for_step[static_cast<std::size_t>(j)] = i;
  if (stage1) stage1->emplace(std::move(corr));
  return slot_for_step;
}

Matrix gather(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(rows[k]);
  return out;
}

Localization label_frames(Correspondence corr, Eigen::Index num_frames) {
  std::vector<int> labels(static_cast<std::size_t>(num_frames), kBackground);
  for (int j = 0; j < corr.cols(); ++j) labels[static_cast<std::size_t>(j)] = corr.row_of_col(j);
  return {SegmentLabeling::from_frame_labels(std::move(labels)), std::move(corr)};
}

}  // namespace

Localization localize_steps(const Matrix& slots, const Matrix& video, double drop_percentile) {
  return label_frames(drop_dtw(percentile_cost_spec(match_cost_matrix(slots, video), drop_percentile),
                               MatchMode::many_to_one),
                      video.rows());
}

Localization localize_steps_with_drop_cost(const Matrix& slots, const Matrix& video, double drop_cost) {
  return label_frames(drop_dtw(CostSpec{match_cost_matrix(slots, video), drop_cost, drop_cost}, MatchMode::many_to_one),
                      video.rows());
}

ZeroShotLocalization zero_shot_localize(const Matrix& slots, const Matrix& step_texts, const Matrix& video,
                                        double drop_percentile) {
  std::optional<Correspondence> stage1;
  auto slot_for_step = select_slots_for_steps(slots, step_texts, drop_percentile, &stage1);
  Localization loc = localize_steps(gather(slots, slot_for_step), video, drop_percentile);
  return {std::move(loc.labeling), std::move(slot_for_step), std::move(*stage1), std::move(loc.correspondence)};
}

SegmentLabeling nearest_slot_baseline(const Matrix& slots, const Matrix& video, int keep) {
  if (keep < 1 || keep > slots.rows()) throw InvariantError("keep must lie in [1, K]");
  const Matrix cos = cosine_matrix(video, slots);  // N x K
  const Eigen::RowVectorXd best = cos.colwise().maxCoeff();
  std::vector<int> order(static_cast<std::size_t>(slots.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return best(a) > best(b); });
  order.resize(static_cast<std::size_t>(keep));
  std::sort(order.begin(), order.end());
  std::vector<int> labels(static_cast<std::size_t>(video.rows()));
  for (Eigen::Index f = 0; f < video.rows(); ++f) {
    int arg = order.front();
    for (int k : order)
      if (cos(f, k) > cos(f, arg)) arg = k;
    labels[static_cast<std::size_t>(f)] = arg;
  }
  return SegmentLabeling::from_runs(std::move(labels));
}

SegmentLabeling zero_shot_nearest_baseline(const Matrix& slots, const Matrix& step_texts, const Matrix& video,
                                           double drop_percentile) {
  const auto slot_for_step = select_slots_for_steps(slots, step_texts, drop_percentile, nullptr);
  const Matrix chosen = gather(slots, slot_for_step);
  return nearest_slot_baseline(chosen, video, static_cast<int>(chosen.rows()));
}

}  // namespace stepalign
