#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stepalign/core.hpp"

namespace stepalign {

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mof = 0.0;
  double iou = 0.0;
};

struct Support {
  long frames = 0;
  long gt_step_frames = 0;
  long pred_step_frames = 0;
  long correct_step_frames = 0;
};

struct MetricsReport {
  Metrics overall;
  std::map<std::string, Metrics> per_task;
  Support support;
};

/// Framewise scores. A frame is correct when class_map(pred) equals the gt
/// label (background matches background). Predicted labels missing from the
/// map count as key-step predictions that are never correct. Zero
/// denominators yield 0.
MetricsReport framewise_metrics(const std::vector<int>& pred, const std::vector<int>& gt,
                                const std::map<int, int>& class_map);
/// Identity class map.
MetricsReport framewise_metrics(const std::vector<int>& pred, const std::vector<int>& gt);
MetricsReport framewise_metrics(const SegmentLabeling& pred, const SegmentLabeling& gt,
                                const std::map<int, int>& class_map);

struct KMeansResult {
  std::vector<int> assignments;
  Matrix centroids;
  std::vector<double> inertia_history;  // after every Lloyd iteration
  int iterations = 0;
};

/// k-means++ seeding then Lloyd iterations until the assignment is a fixpoint
/// or max_iterations. Empty clusters are reseeded at the farthest point.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iterations = 300);

/// Per cluster, keeps the floor(fraction * size) points nearest its centroid
/// (at least one); distance ties keep the lower index.
std::vector<bool> keep_top_fraction(const Matrix& points, const std::vector<int>& assignments, const Matrix& centroids,
                                    double fraction = 0.6);

/// Minimum-cost assignment; result[i] is the column of row i, or -1 when
/// n > m leaves the row unassigned.
std::vector<int> hungarian(const Matrix& cost);

/// One video's prediction for the evaluation protocols.
struct VideoPrediction {
  std::string task;
  SegmentLabeling labeling;  // labels index rows of `slots`
  Matrix slots;              // step representation per label
  std::vector<int> gt_labels;
};

struct ProtocolOptions {
  double keep_fraction = 0.6;
  std::uint64_t seed = 0;
  bool pooled = false;  // pool all frames instead of averaging tasks
};

/// Per task: cluster the slot vectors of every detected segment into as many
/// clusters as the task has gt steps, keep the 60% nearest each centre,
/// Hungarian-match clusters to gt steps on 1 - frame IoU, and score framewise.
MetricsReport unsupervised_protocol(const std::vector<VideoPrediction>& videos, const ProtocolOptions& options = {});

/// Zero-shot scoring: labels index each video's ordered gt steps; `step_ids`
/// maps them to task step ids.
struct ZeroShotPrediction {
  std::string task;
  std::vector<int> labels;
  std::vector<int> step_ids;
  std::vector<int> gt_labels;
};
MetricsReport zero_shot_protocol(const std::vector<ZeroShotPrediction>& videos, bool pooled = false);

/// Frame labels from gt segments (label = step id).
std::vector<int> gt_frame_labels(const DatasetSample& sample);

/// Seeded random-segment predictions: per video, `segments` disjoint random
/// spans (fewer if the video is short) each carrying a random unit vector.
std::vector<VideoPrediction> random_segment_predictions(const std::vector<DatasetSample>& samples, int segments,
                                                        std::uint64_t seed);

/// Stable JSON rendering (sorted keys, round-trip doubles).
std::string report_json(const MetricsReport& report, const std::string& protocol);
/// One header row then one row per task and an "overall" row.
std::string report_csv(const MetricsReport& report);

}  // namespace stepalign
