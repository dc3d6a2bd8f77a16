#include <doctest.h>

#include "stepalign/eval.hpp"
#include "support.hpp"

using namespace stepalign;

namespace {

constexpr int bg = kBackground;

}  // namespace

TEST_CASE("framewise metrics fixtures") {
  SUBCASE("perfect prediction") {
    const std::vector<int> gt{bg, 0, 0, 1, 1, bg, 2};
    const auto r = framewise_metrics(gt, gt);
    CHECK(r.overall.precision == 1.0);
    CHECK(r.overall.recall == 1.0);
    CHECK(r.overall.f1 == 1.0);
    CHECK(r.overall.mof == 1.0);
    CHECK(r.overall.iou == 1.0);
  }
  SUBCASE("five frame hand count") {
    // gt [bg,A,A,bg,B], pred [A,A,bg,B,B]: 4 predicted step frames, 3 gt step
    // frames, 2 correct step frames, 2 of 5 frames correct overall.
    const auto r = framewise_metrics({0, 0, bg, 1, 1}, {bg, 0, 0, bg, 1});
    CHECK(std::abs(r.overall.precision - 2.0 / 4.0) <= 1e-9);
    CHECK(std::abs(r.overall.recall - 2.0 / 3.0) <= 1e-9);
    CHECK(std::abs(r.overall.f1 - 2.0 * 0.5 * (2.0 / 3.0) / (0.5 + 2.0 / 3.0)) <= 1e-9);
    CHECK(r.overall.f1 == doctest::Approx(0.5714).epsilon(1e-4));
    CHECK(std::abs(r.overall.mof - 0.4) <= 1e-9);
    // A: inter 1, union 3; B: inter 1, union 2.
    CHECK(std::abs(r.overall.iou - (1.0 / 3.0 + 1.0 / 2.0) / 2.0) <= 1e-9);
  }
  SUBCASE("all background prediction") {
    const auto r = framewise_metrics({bg, bg, bg, bg}, {bg, 0, 0, bg});
    CHECK(r.overall.precision == 0.0);
    CHECK(r.overall.recall == 0.0);
    CHECK(r.overall.f1 == 0.0);
    CHECK(r.overall.mof == 0.5);
  }
  SUBCASE("class map and unmapped labels") {
    const auto r = framewise_metrics({5, 5, 7, bg}, {0, 0, 1, bg}, {{5, 0}});
    CHECK(r.overall.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r.overall.recall == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(framewise_metrics({5, 6}, {0, 0}, {{5, 0}, {6, 0}}), InvariantError);
    CHECK_THROWS_AS(framewise_metrics({5}, {0, 0}), InvariantError);
  }
}

TEST_CASE("kmeans fixtures") {
  SUBCASE("coincident groups") {
    Matrix pts(6, 2);
    pts << 1, 1, 1, 1, 5, 5, 5, 5, -3, 2, -3, 2;
    const auto r = kmeans(pts, 3, 0);
    CHECK(r.inertia_history.back() == 0.0);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(r.centroids.row(r.assignments[static_cast<std::size_t>(i)]) == pts.row(i));
  }
  SUBCASE("separated blobs") {
    Rng rng(1);
    Matrix pts(40, 3);
    std::vector<int> truth;
    for (int i = 0; i < 40; ++i) {
      const double c = i % 2 == 0 ? 10.0 : -10.0;
      for (int j = 0; j < 3; ++j) pts(i, j) = c + 0.1 * rng.normal();
      truth.push_back(i % 2);
    }
    const auto r = kmeans(pts, 2, 3);
    for (int i = 0; i < 40; ++i)
      CHECK((r.assignments[static_cast<std::size_t>(i)] == r.assignments[0]) == (truth[static_cast<std::size_t>(i)] == 0));
  }
  SUBCASE("determinism and monotone inertia") {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
      const Matrix pts = testsupport::random_matrix(rng, 30, 4);
      const auto a = kmeans(pts, 5, 11);
      const auto b = kmeans(pts, 5, 11);
      CHECK(a.assignments == b.assignments);
      CHECK(a.centroids == b.centroids);
      for (std::size_t k = 1; k < a.inertia_history.size(); ++k)
        CHECK(a.inertia_history[k] <= a.inertia_history[k - 1] + 1e-12);
      CHECK(a.iterations <= 300);
    }
  }
  SUBCASE("bad k") { CHECK_THROWS_AS(kmeans(Matrix::Ones(2, 2), 3, 0), InvariantError); }
}

TEST_CASE("keep_top_fraction") {
  Matrix pts(6, 1);
  pts << 0.0, 3.0, 1.0, 2.0, 4.0, 9.0;
  const std::vector<int> assign{0, 0, 0, 0, 0, 1};
  Matrix centroids(2, 1);
  centroids << 0.0, 9.0;
  const auto keep = keep_top_fraction(pts, assign, centroids);
  CHECK(keep == std::vector<bool>{true, false, true, true, false, true});

  Matrix eq(4, 1);
  eq << 1.0, -1.0, 1.0, -1.0;
  Matrix c0(1, 1);
  c0 << 0.0;
  CHECK(keep_top_fraction(eq, {0, 0, 0, 0}, c0) == std::vector<bool>{true, true, false, false});
}

TEST_CASE("hungarian") {
  Matrix id = Matrix::Ones(3, 3);
  id.diagonal().setZero();
  CHECK(hungarian(id) == std::vector<int>{0, 1, 2});
  CHECK(hungarian(Matrix::Constant(1, 1, 4.0)) == std::vector<int>{0});
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    const Matrix c = testsupport::random_matrix(rng, 5, 5, 0.0, 1.0);
    const auto a = hungarian(c);
    double s = 0.0;
    for (int i = 0; i < 5; ++i) s += c(i, a[static_cast<std::size_t>(i)]);
    CHECK(std::abs(s - testsupport::assignment_oracle(c)) <= 1e-12);
  }
  Matrix tall(3, 2);
  tall << 5, 1, 1, 5, 2, 2;
  const auto a = hungarian(tall);
  CHECK(a == std::vector<int>{1, 0, -1});
  Matrix wide(1, 3);
  wide << 3, 1, 2;
  CHECK(hungarian(wide) == std::vector<int>{1});
}

TEST_CASE("unsupervised protocol") {
  // One video whose detections equal the gt steps; every cluster holds a
  // single detection, so the 60% filter keeps all of them.
  const Matrix slots = Matrix::Identity(3, 3) * 2.0;
  const std::vector<int> g1{bg, 0, 0, 1, 1, bg, 2}, g2{0, bg, 1, 1, 2, 2, bg};
  const std::vector<VideoPrediction> perfect{{"a", SegmentLabeling::from_frame_labels(g1), slots, g1}};
  const auto r = unsupervised_protocol(perfect);
  CHECK(r.overall.precision == 1.0);
  CHECK(r.overall.recall == 1.0);
  CHECK(r.overall.f1 == 1.0);
  CHECK(r.overall.mof == 1.0);
  CHECK(r.overall.iou == 1.0);

  // Relabelling the slots (permuted rows and labels) changes nothing.
  const std::vector<int> perm{2, 0, 1};
  Matrix pslots(3, 3);
  for (int k = 0; k < 3; ++k) pslots.row(perm[static_cast<std::size_t>(k)]) = slots.row(k);
  auto relabel = [&](const std::vector<int>& l) {
    std::vector<int> out;
    for (int v : l) out.push_back(v == bg ? bg : perm[static_cast<std::size_t>(v)]);
    return SegmentLabeling::from_frame_labels(out);
  };
  const std::vector<VideoPrediction> permuted{{"a", relabel(g1), pslots, g1}};
  CHECK(report_json(unsupervised_protocol(permuted), "u") == report_json(r, "u"));

  // Two videos put two detections in each cluster; floor(0.6 * 2) = 1 survives,
  // so the other video's segment becomes background.
  const std::vector<VideoPrediction> shared{{"a", SegmentLabeling::from_frame_labels(g1), slots, g1},
                                            {"a", SegmentLabeling::from_frame_labels(g2), slots, g2}};
  const auto s2 = unsupervised_protocol(shared);
  CHECK(s2.overall.precision == 1.0);
  CHECK(s2.overall.recall < 1.0);
  CHECK(s2.support.pred_step_frames < s2.support.gt_step_frames);

  // Two tasks average; the pooled variant weighs frames.
  std::vector<VideoPrediction> two = perfect;
  two.push_back({"b", SegmentLabeling::from_frame_labels({bg, bg, bg}), slots, {0, 0, bg}});
  const auto avg = unsupervised_protocol(two);
  CHECK(avg.per_task.size() == 2);
  CHECK(avg.overall.recall == doctest::Approx(0.5));
  ProtocolOptions pooled;
  pooled.pooled = true;
  CHECK(unsupervised_protocol(two, pooled).overall.recall == doctest::Approx(5.0 / 7.0));
  CHECK(report_json(unsupervised_protocol(shared), "u") == report_json(s2, "u"));
}

TEST_CASE("zero-shot protocol maps step indices to step ids") {
  // Video steps 3 then 5; labels 0/1 index that list.
  const std::vector<ZeroShotPrediction> v{{"t", {bg, 0, 0, 1, bg}, {3, 5}, {bg, 3, 3, 5, 5}}};
  const auto r = zero_shot_protocol(v);
  CHECK(r.overall.precision == 1.0);
  CHECK(r.overall.recall == doctest::Approx(0.75));
  CHECK(r.overall.iou == doctest::Approx((1.0 + 0.5) / 2.0));
}

TEST_CASE("random segment baseline is seeded") {
  std::vector<DatasetSample> samples;
  samples.push_back({"v", "t", EmbeddingSequence(Matrix::Ones(20, 4), SequenceKind::video),
                     EmbeddingSequence(Matrix::Ones(2, 4), SequenceKind::phrases), {{0, 2, 5}}, std::nullopt,
                     std::nullopt});
  const auto a = random_segment_predictions(samples, 4, 1);
  const auto b = random_segment_predictions(samples, 4, 1);
  CHECK(a[0].labeling == b[0].labeling);
  CHECK(a[0].slots == b[0].slots);
  CHECK(a[0].labeling.segments().size() == 4);
  CHECK(a[0].gt_labels[3] == 0);
}

TEST_CASE("report rendering") {
  MetricsReport r;
  r.overall.f1 = 0.25;
  r.per_task["x"] = r.overall;
  const std::string j = report_json(r, "zeroshot");
  for (const char* key : {"precision", "recall", "f1", "mof", "iou", "zeroshot"}) CHECK(j.find(key) != std::string::npos);
  CHECK(report_csv(r).find("overall,0,0,0.25,0,0") != std::string::npos);
}
