#include "stepalign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stepalign/rng.hpp"

namespace stepalign {

namespace {

constexpr int kUnmapped = std::numeric_limits<int>::min();

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

Metrics average(const std::vector<Metrics>& ms) {
  Metrics out;
  if (ms.empty()) return out;
  for (const auto& m : ms) {
    out.precision += m.precision;
    out.recall += m.recall;
    out.f1 += m.f1;
    out.mof += m.mof;
    out.iou += m.iou;
  }
  const auto n = static_cast<double>(ms.size());
  out.precision /= n;
  out.recall /= n;
  out.f1 /= n;
  out.mof /= n;
  out.iou /= n;
  return out;
}

double squared_distance(const Matrix& points, Eigen::Index i, const Matrix& centroids, Eigen::Index c) {
  return (points.row(i) - centroids.row(c)).squaredNorm();
}

int nearest_centroid(const Matrix& points, Eigen::Index i, const Matrix& centroids) {
  int best = 0;
  double best_d = squared_distance(points, i, centroids, 0);
  for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
    const double d = squared_distance(points, i, centroids, c);
    if (d < best_d) best_d = d, best = static_cast<int>(c);
  }
  return best;
}

double inertia(const Matrix& points, const std::vector<int>& assign, const Matrix& centroids) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) s += squared_distance(points, i, centroids, assign[static_cast<std::size_t>(i)]);
  return s;
}

}  // namespace

MetricsReport framewise_metrics(const std::vector<int>& pred, const std::vector<int>& gt,
                                const std::map<int, int>& class_map) {
  if (pred.size() != gt.size()) throw InvariantError("framewise_metrics: frame counts differ");
  std::set<int> targets;
  for (const auto& [p, g] : class_map) {
    if (g < 0) throw InvariantError("class_map must map onto step labels");
    if (!targets.insert(g).second) throw InvariantError("class_map is not injective");
  }
  auto mapped = [&](int p) {
    if (p == kBackground) return kBackground;
    const auto it = class_map.find(p);
    return it == class_map.end() ? kUnmapped : it->second;
  };

  MetricsReport r;
  std::map<int, std::pair<long, long>> inter_union;  // gt step -> (intersection, union)
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const int p = mapped(pred[f]);
    const int g = gt[f];
    ++r.support.frames;
    if (p != kBackground) ++r.support.pred_step_frames;
    if (g != kBackground) {
      ++r.support.gt_step_frames;
      inter_union.try_emplace(g, 0L, 0L);
    }
    if (p == g && g != kBackground) ++r.support.correct_step_frames;
  }
  long correct_all = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    const int p = mapped(pred[f]);
    const int g = gt[f];
    if (p == g) ++correct_all;
    if (g != kBackground) {
      auto& iu = inter_union[g];
      ++iu.second;
      if (p == g) ++iu.first;
    }
    if (p != kBackground && p != g) {
      if (auto it = inter_union.find(p); it != inter_union.end()) ++it->second.second;
    }
  }
  Metrics& m = r.overall;
  m.precision = ratio(static_cast<double>(r.support.correct_step_frames), static_cast<double>(r.support.pred_step_frames));
  m.recall = ratio(static_cast<double>(r.support.correct_step_frames), static_cast<double>(r.support.gt_step_frames));
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  m.mof = ratio(static_cast<double>(correct_all), static_cast<double>(r.support.frames));
  double iou_sum = 0.0;
  for (const auto& [g, iu] : inter_union) iou_sum += ratio(static_cast<double>(iu.first), static_cast<double>(iu.second));
  m.iou = inter_union.empty() ? 0.0 : iou_sum / static_cast<double>(inter_union.size());
  return r;
}

MetricsReport framewise_metrics(const std::vector<int>& pred, const std::vector<int>& gt) {
  std::map<int, int> identity;
  for (int l : pred)
    if (l != kBackground) identity.emplace(l, l);
  return framewise_metrics(pred, gt, identity);
}

MetricsReport framewise_metrics(const SegmentLabeling& pred, const SegmentLabeling& gt,
                                const std::map<int, int>& class_map) {
  return framewise_metrics(pred.frame_labels(), gt.frame_labels(), class_map);
}

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int max_iterations) {
  const Eigen::Index n = points.rows();
  if (k < 1 || k > n) throw InvariantError("kmeans: k must lie in [1, number of points]");
  Rng rng(seed);
  KMeansResult res;
  res.centroids.resize(k, points.cols());

  // k-means++ seeding.
  res.centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = squared_distance(points, i, res.centroids, 0);
      for (int e = 1; e < c; ++e) best = std::min(best, squared_distance(points, i, res.centroids, e));
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    res.centroids.row(c) = points.row(pick);
  }

  res.assignments.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest_centroid(points, i, res.centroids);
      if (c != res.assignments[static_cast<std::size_t>(i)]) changed = true;
      res.assignments[static_cast<std::size_t>(i)] = c;
    }
    res.iterations = it + 1;
    if (!changed && it > 0) {
      res.inertia_history.push_back(inertia(points, res.assignments, res.centroids));
      break;
    }
    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.assignments[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(res.assignments[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        res.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Empty cluster: move it onto the point farthest from its own centroid.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = squared_distance(points, i, res.centroids, res.assignments[static_cast<std::size_t>(i)]);
        if (d > far_d) far_d = d, far = i;
      }
      res.centroids.row(c) = points.row(far);
      res.assignments[static_cast<std::size_t>(far)] = c;
    }
    res.inertia_history.push_back(inertia(points, res.assignments, res.centroids));
  }
  return res;
}

std::vector<bool> keep_top_fraction(const Matrix& points, const std::vector<int>& assignments, const Matrix& centroids,
                                    double fraction) {
  if (static_cast<Eigen::Index>(assignments.size()) != points.rows())
    throw InvariantError("keep_top_fraction: one assignment per point required");
  std::map<int, std::vector<int>> members;
  for (std::size_t i = 0; i < assignments.size(); ++i) members[assignments[i]].push_back(static_cast<int>(i));
  std::vector<bool> keep(assignments.size(), false);
  for (auto& [c, idx] : members) {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return squared_distance(points, a, centroids, c) < squared_distance(points, b, centroids, c);
    });
    // The epsilon keeps products like 0.6 * 5 from flooring down a count.
    auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size()) + 1e-9));
    count = std::clamp<std::size_t>(count, 1, idx.size());
    for (std::size_t k = 0; k < count; ++k) keep[static_cast<std::size_t>(idx[k])] = true;
  }
  return keep;
}

// Potential-based O(n^3) assignment on the square padding of `cost`.
std::vector<int> hungarian(const Matrix& cost) {
  const auto n = static_cast<int>(cost.rows());
  const auto m = static_cast<int>(cost.cols());
  if (n == 0 || m == 0) return std::vector<int>(static_cast<std::size_t>(n), -1);
  if (!cost.allFinite()) throw InvariantError("hungarian: non-finite cost");
  const int size = std::max(n, m);
  const double pad = cost.maxCoeff() + 1.0;
  Matrix a = Matrix::Constant(size, size, pad);
  a.topLeftCorner(n, m) = cost;

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(size) + 1, 0.0), v(static_cast<std::size_t>(size) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(size) + 1, 0), way(static_cast<std::size_t>(size) + 1, 0);
  for (int i = 1; i <= size; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(size) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(size) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= size; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= size; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= size; ++j) {
    const int i = p[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= n && j <= m) result[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  return result;
}

std::vector<int> gt_frame_labels(const DatasetSample& sample) {
  return SegmentLabeling::from_segments(static_cast<int>(sample.video.length()), sample.gt_segments).frame_labels();
}

namespace {

struct TaskFrames {
  std::vector<int> pred;
  std::vector<int> gt;
  std::map<int, int> class_map;
};

TaskFrames unsupervised_task(const std::vector<const VideoPrediction*>& videos, const ProtocolOptions& options) {
  TaskFrames out;
  std::set<int> gt_steps;
  for (const auto* v : videos)
    for (int g : v->gt_labels)
      if (g != kBackground) gt_steps.insert(g);

  // One clustering point per detected segment.
  struct Detection {
    std::size_t video;
    int label;
  };
  std::vector<Detection> dets;
  for (std::size_t vi = 0; vi < videos.size(); ++vi)
    for (const auto& seg : videos[vi]->labeling.segments()) dets.push_back({vi, seg.label});

  std::vector<std::map<int, int>> cluster_of(videos.size());  // per video: slot label -> cluster
  int clusters = 0;
  if (!dets.empty() && !gt_steps.empty()) {
    Matrix points(static_cast<Eigen::Index>(dets.size()), videos.front()->slots.cols());
    for (std::size_t k = 0; k < dets.size(); ++k)
      points.row(static_cast<Eigen::Index>(k)) = videos[dets[k].video]->slots.row(dets[k].label);
    clusters = static_cast<int>(std::min(gt_steps.size(), dets.size()));
    const KMeansResult km = kmeans(points, clusters, options.seed);
    const auto keep = keep_top_fraction(points, km.assignments, km.centroids, options.keep_fraction);
    for (std::size_t k = 0; k < dets.size(); ++k)
      if (keep[k]) cluster_of[dets[k].video][dets[k].label] = km.assignments[k];
  }

  for (std::size_t vi = 0; vi < videos.size(); ++vi) {
    const auto& labels = videos[vi]->labeling.frame_labels();
    if (labels.size() != videos[vi]->gt_labels.size()) throw InvariantError("prediction and gt lengths differ");
    for (std::size_t f = 0; f < labels.size(); ++f) {
      int c = kBackground;
      if (labels[f] != kBackground)
        if (auto it = cluster_of[vi].find(labels[f]); it != cluster_of[vi].end()) c = it->second;
      out.pred.push_back(c);
      out.gt.push_back(videos[vi]->gt_labels[f]);
    }
  }

  if (clusters > 0) {
    const std::vector<int> steps(gt_steps.begin(), gt_steps.end());
    Matrix cost(clusters, static_cast<Eigen::Index>(steps.size()));
    for (int c = 0; c < clusters; ++c) {
      for (std::size_t s = 0; s < steps.size(); ++s) {
        long inter = 0, uni = 0;
        for (std::size_t f = 0; f < out.pred.size(); ++f) {
          const bool in_c = out.pred[f] == c;
          const bool in_g = out.gt[f] == steps[s];
          inter += in_c && in_g;
          uni += in_c || in_g;
        }
        cost(c, static_cast<Eigen::Index>(s)) = 1.0 - ratio(static_cast<double>(inter), static_cast<double>(uni));
      }
    }
    const auto assign = hungarian(cost);
    for (int c = 0; c < clusters; ++c)
      if (assign[static_cast<std::size_t>(c)] >= 0) out.class_map[c] = steps[static_cast<std::size_t>(assign[static_cast<std::size_t>(c)])];
  }
  return out;
}

template <typename Item, typename TaskFn>
MetricsReport run_protocol(const std::vector<Item>& videos, bool pooled, TaskFn per_task) {
  std::map<std::string, std::vector<const Item*>> by_task;
  for (const auto& v : videos) by_task[v.task].push_back(&v);
  MetricsReport report;
  std::vector<Metrics> task_metrics;
  std::vector<int> all_pred, all_gt;
  std::map<int, int> all_map;
  int offset = 0;
  for (const auto& [task, items] : by_task) {
    const TaskFrames tf = per_task(items);
    const MetricsReport tr = framewise_metrics(tf.pred, tf.gt, tf.class_map);
    report.per_task[task] = tr.overall;
    task_metrics.push_back(tr.overall);
    report.support.frames += tr.support.frames;
    report.support.gt_step_frames += tr.support.gt_step_frames;
    report.support.pred_step_frames += tr.support.pred_step_frames;
    report.support.correct_step_frames += tr.support.correct_step_frames;
    if (pooled) {
      // Disjoint label ranges per task keep pooled classes apart.
      int max_label = 0;
      for (int l : tf.pred) max_label = std::max(max_label, l);
      for (int l : tf.gt) max_label = std::max(max_label, l);
      for (const auto& [p, g] : tf.class_map) max_label = std::max({max_label, p, g});
      for (int l : tf.pred) all_pred.push_back(l == kBackground ? l : l + offset);
      for (int l : tf.gt) all_gt.push_back(l == kBackground ? l : l + offset);
      for (const auto& [p, g] : tf.class_map) all_map[p + offset] = g + offset;
      offset += max_label + 1;
    }
  }
  report.overall = pooled ? framewise_metrics(all_pred, all_gt, all_map).overall : average(task_metrics);
  return report;
}

}  // namespace

MetricsReport unsupervised_protocol(const std::vector<VideoPrediction>& videos, const ProtocolOptions& options) {
  return run_protocol(videos, options.pooled,
                      [&](const std::vector<const VideoPrediction*>& items) { return unsupervised_task(items, options); });
}

MetricsReport zero_shot_protocol(const std::vector<ZeroShotPrediction>& videos, bool pooled) {
  return run_protocol(videos, pooled, [](const std::vector<const ZeroShotPrediction*>& items) {
    TaskFrames tf;
    for (const auto* v : items) {
      if (v->labels.size() != v->gt_labels.size()) throw InvariantError("prediction and gt lengths differ");
      for (std::size_t f = 0; f < v->labels.size(); ++f) {
        const int l = v->labels[f];
        if (l != kBackground && (l < 0 || l >= static_cast<int>(v->step_ids.size())))
          throw InvariantError("zero-shot label outside the step list");
        const int mapped = l == kBackground ? kBackground : v->step_ids[static_cast<std::size_t>(l)];
        tf.pred.push_back(mapped);
        tf.gt.push_back(v->gt_labels[f]);
        if (mapped != kBackground) tf.class_map[mapped] = mapped;
      }
    }
    return tf;
  });
}

std::vector<VideoPrediction> random_segment_predictions(const std::vector<DatasetSample>& samples, int segments,
                                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<VideoPrediction> out;
  for (const auto& s : samples) {
    const int n = static_cast<int>(s.video.length());
    const int m = std::max(1, std::min(segments, n / 2));
    auto cuts = rng.sample_without_replacement(n, 2 * m);
    std::sort(cuts.begin(), cuts.end());
    std::vector<Segment> segs;
    for (int k = 0; k < m; ++k) segs.push_back({k, cuts[static_cast<std::size_t>(2 * k)], cuts[static_cast<std::size_t>(2 * k + 1)]});
    Matrix slots(m, s.video.dim());
    for (Eigen::Index i = 0; i < slots.rows(); ++i)
      for (Eigen::Index j = 0; j < slots.cols(); ++j) slots(i, j) = rng.normal();
    out.push_back({s.task, SegmentLabeling::from_segments(n, std::move(segs)), normalize_rows(slots), gt_frame_labels(s)});
  }
  return out;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"mof", m.mof}, {"iou", m.iou}};
}

}  // namespace

std::string report_json(const MetricsReport& report, const std::string& protocol) {
  nlohmann::json j;
  j["protocol"] = protocol;
  j["overall"] = metrics_json(report.overall);
  j["per_task"] = nlohmann::json::object();
  for (const auto& [task, m] : report.per_task) j["per_task"][task] = metrics_json(m);
  j["support"] = {{"frames", report.support.frames},
                  {"gt_step_frames", report.support.gt_step_frames},
                  {"pred_step_frames", report.support.pred_step_frames},
                  {"correct_step_frames", report.support.correct_step_frames}};
  return j.dump(2) + "\n";
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "task,precision,recall,f1,mof,iou\n";
  auto row = [&](const std::string& name, const Metrics& m) {
    out << name << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.mof << ',' << m.iou << '\n';
  };
  for (const auto& [task, m] : report.per_task) row(task, m);
  row("overall", report.overall);
  return out.str();
}

}  // namespace stepalign
