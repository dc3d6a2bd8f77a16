#include <doctest.h>

#include "stepalign/synth.hpp"

using namespace stepalign;

TEST_CASE("clean degenerate dataset") {
  SynthConfig c;
  c.noise_sigma = 0.0;
  c.distractor_phrase_ratio = 0.0;
  c.background_ratio = 0.0;
  c.videos_per_task = 5;
  const auto d = generate(c);
  for (const auto& s : d.samples) {
    const Matrix& protos = d.prototypes[static_cast<std::size_t>(std::stoi(s.task.substr(4)))];
    for (const auto& seg : s.gt_segments)
      for (int f = seg.start; f <= seg.end; ++f) CHECK((s.video.row(f) - protos.row(seg.label)).norm() <= 1e-12);
    REQUIRE(s.phrases.length() == static_cast<Eigen::Index>(s.gt_segments.size()));
    for (std::size_t k = 0; k < s.gt_segments.size(); ++k)
      CHECK((s.phrases.row(static_cast<Eigen::Index>(k)) - protos.row(s.gt_segments[k].label)).norm() <= 1e-12);
    int covered = 0;
    for (const auto& seg : s.gt_segments) covered += seg.length();
    CHECK(covered == s.video.length());
  }
  CHECK(check_invariants(d, c).empty());
}

TEST_CASE("generation is deterministic") {
  SynthConfig c;
  c.videos_per_task = 4;
  const auto a = generate(c);
  const auto b = generate(c);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].video == b.samples[i].video);
    CHECK(a.samples[i].phrases == b.samples[i].phrases);
    CHECK(a.samples[i].gt_segments == b.samples[i].gt_segments);
  }
  SynthConfig other = c;
  other.video_seed = 9;
  const auto o = generate(other);
  CHECK(o.prototypes == a.prototypes);
  CHECK_FALSE(o.samples[0].video == a.samples[0].video);
}

TEST_CASE("default config satisfies the invariants") {
  const SynthConfig c;
  const auto d = generate(c);
  CHECK(d.samples.size() == 120);
  const auto bad = check_invariants(d, c);
  for (const auto& msg : bad) INFO(msg);
  CHECK(bad.empty());
  for (const auto& p : d.prototypes) {
    const Matrix g = p * p.transpose();
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        if (i != j) CHECK(g(i, j) <= 0.3);
  }
  for (const auto& s : d.samples) {
    CHECK(s.video.length() >= 40);
    CHECK(s.video.length() <= 80);
    CHECK(s.phrase_relevance->size() == static_cast<std::size_t>(s.phrases.length()));
  }
  SynthConfig clean = c;
  clean.noise_sigma = 0.0;
  CHECK(check_invariants(generate(clean), clean).empty());
}

TEST_CASE("impossible separation") {
  SynthConfig c;
  c.dim = 2;
  c.background_subspace_dim = 1;
  c.max_attempts = 200;
  try {
    generate(c);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()) == "cannot satisfy separation at this dim");
  }
}

TEST_CASE("config validation") {
  SynthConfig c;
  c.frames_range = {10, 5};
  CHECK_THROWS_AS(c.validate(), InvariantError);
  c = SynthConfig{};
  c.step_presence_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), InvariantError);
}
