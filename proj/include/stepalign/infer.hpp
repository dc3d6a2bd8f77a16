#pragma once

#include <vector>

#include "stepalign/align.hpp"
#include "stepalign/core.hpp"

namespace stepalign {

struct Localization {
  SegmentLabeling labeling;  // labels are slot indices
  Correspondence correspondence;
};

/// Many-to-one Drop-DTW of slots (rows) against frames (columns), drops on
/// both sides at the percentile drop cost. Only matched frames carry a label;
/// each surviving slot's segment spans its first to last matched frame.
Localization localize_steps(const Matrix& slots, const Matrix& video, double drop_percentile = kDefaultDropPercentile);
/// Same, with one explicit drop cost on both sides.
Localization localize_steps_with_drop_cost(const Matrix& slots, const Matrix& video, double drop_cost);

struct ZeroShotLocalization {
  SegmentLabeling labeling;             // labels are step-text indices
  std::vector<int> slot_for_step;       // stage-1 slot chosen for each step text
  Correspondence step_correspondence;   // stage 1: slots x step texts
  Correspondence frame_correspondence;  // stage 2: chosen slots x frames
};

/// Stage 1 aligns slots to the ordered step texts one-to-one with slot drops
/// only, so every step keeps exactly one slot. Stage 2 localizes the kept
/// slots in the video. Throws DataError("too few slots") when K < #steps.
ZeroShotLocalization zero_shot_localize(const Matrix& slots, const Matrix& step_texts, const Matrix& video,
                                        double drop_percentile = kDefaultDropPercentile);

/// Order-agnostic ablation: keep the `keep` slots with the highest maximum
/// cosine over the video (ties to the lower index) and label every frame with
/// its most similar kept slot.
SegmentLabeling nearest_slot_baseline(const Matrix& slots, const Matrix& video, int keep);

/// Stage 1 of zero_shot_localize followed by nearest_slot_baseline over the
/// chosen slots; labels are step-text indices.
SegmentLabeling zero_shot_nearest_baseline(const Matrix& slots, const Matrix& step_texts, const Matrix& video,
                                           double drop_percentile = kDefaultDropPercentile);

}  // namespace stepalign
