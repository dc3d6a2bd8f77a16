#include "stepalign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "stepalign/rng.hpp"

namespace stepalign {

void SynthConfig::validate() const {
  if (dim < 2) throw InvariantError("synth: dim must be >= 2");
  if (num_tasks < 1 || steps_per_task < 1 || videos_per_task < 1)
    throw InvariantError("synth: task, step and video counts must be >= 1");
  if (frames_range.first < 1 || frames_range.first > frames_range.second)
    throw InvariantError("synth: frames_range must be ordered and positive");
  if (step_len_range.first < 1 || step_len_range.first > step_len_range.second)
    throw InvariantError("synth: step_len_range must be ordered and positive");
  for (double p : {background_ratio, distractor_phrase_ratio, step_presence_prob})
    if (!(p >= 0.0 && p <= 1.0)) throw InvariantError("synth: probabilities must lie in [0, 1]");
  if (background_ratio >= 1.0 || distractor_phrase_ratio >= 1.0)
    throw InvariantError("synth: background and distractor ratios must be < 1");
  if (!(noise_sigma >= 0.0)) throw InvariantError("synth: noise_sigma must be >= 0");
  if (background_subspace_dim < 1 || background_subspace_dim > dim)
    throw InvariantError("synth: background subspace must fit in dim");
  if (max_attempts < 1) throw InvariantError("synth: max_attempts must be >= 1");
}

std::string task_name(int task) { return "task" + std::to_string(task); }

namespace {

RowVector random_unit(Rng& rng, int dim) {
  RowVector v(dim);
  do {
    for (int j = 0; j < dim; ++j) v(j) = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

Matrix task_prototypes(Rng& rng, const SynthConfig& cfg) {
  Matrix protos(cfg.steps_per_task, cfg.dim);
  for (int s = 0; s < cfg.steps_per_task; ++s) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const RowVector cand = random_unit(rng, cfg.dim);
      placed = true;
      for (int e = 0; e < s && placed; ++e) placed = cand.dot(protos.row(e)) <= cfg.max_prototype_cosine;
      if (placed) protos.row(s) = cand;
    }
    if (!placed) throw DataError("cannot satisfy separation at this dim");
  }
  return protos;
}

RowVector noisy(const RowVector& clean, double sigma, Rng& rng) {
  RowVector v = clean;
  // Noise is drawn even at sigma 0 so layouts do not depend on sigma.
  for (Eigen::Index j = 0; j < v.size(); ++j) v(j) += sigma * rng.normal();
  const double n = v.norm();
  return n > 0.0 ? RowVector(v / n) : clean;
}

// Split `total` into `parts.size()` positive integers proportional to the
// weights (largest remainder, ties to the lower index).
std::vector<int> apportion(int total, const std::vector<double>& weights, int minimum) {
  const auto k = weights.size();
  std::vector<int> out(k, minimum);
  int rest = total - minimum * static_cast<int>(k);
  if (rest <= 0) return out;
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<std::pair<double, std::size_t>> rem;
  int used = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double share = rest * weights[i] / wsum;
    const int whole = static_cast<int>(std::floor(share));
    out[i] += whole;
    used += whole;
    rem.emplace_back(share - whole, i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; r < rest - used; ++r) ++out[rem[static_cast<std::size_t>(r) % k].second];
  return out;
}

DatasetSample make_video(const std::string& id, int task, const Matrix& protos, const Matrix& bg_basis,
                         const SynthConfig& cfg, Rng& rng) {
  std::vector<int> present;
  for (int s = 0; s < cfg.steps_per_task; ++s)
    if (rng.bernoulli(cfg.step_presence_prob)) present.push_back(s);
  if (present.empty()) present.push_back(rng.between(0, cfg.steps_per_task - 1));
  const int m = static_cast<int>(present.size());

  int n = rng.between(cfg.frames_range.first, cfg.frames_range.second);
  n = std::max(n, m);
  int bg_total = static_cast<int>(std::lround(cfg.background_ratio * n));
  bg_total = std::min(bg_total, n - m);
  std::vector<double> step_w, gap_w;
  for (int k = 0; k < m; ++k) step_w.push_back(rng.uniform(cfg.step_len_range.first, cfg.step_len_range.second));
  for (int k = 0; k <= m; ++k) gap_w.push_back(rng.uniform(0.5, 1.5));
  const auto step_len = apportion(n - bg_total, step_w, 1);
  const auto gap_len = apportion(bg_total, gap_w, 0);

  Matrix video(n, cfg.dim);
  std::vector<Segment> segs;
  int f = 0;
  auto background_frame = [&]() {
    RowVector z(bg_basis.rows());
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
    RowVector v = z * bg_basis;
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) += 0.1 * rng.normal();
    return RowVector(v / v.norm());
  };
  for (int k = 0; k <= m; ++k) {
    for (int g = 0; g < gap_len[static_cast<std::size_t>(k)]; ++g) video.row(f++) = background_frame();
    if (k == m) break;
    const int start = f;
    for (int l = 0; l < step_len[static_cast<std::size_t>(k)]; ++l)
      video.row(f++) = noisy(protos.row(present[static_cast<std::size_t>(k)]), cfg.noise_sigma, rng);
    segs.push_back({present[static_cast<std::size_t>(k)], start, f - 1});
  }

  // Distractors make up distractor_phrase_ratio of the phrase list.
  const int distractors = static_cast<int>(
      std::lround(m * cfg.distractor_phrase_ratio / (1.0 - cfg.distractor_phrase_ratio)));
  std::vector<bool> relevant(static_cast<std::size_t>(m + distractors), false);
  for (int idx : rng.sample_without_replacement(m + distractors, m)) relevant[static_cast<std::size_t>(idx)] = true;
  Matrix phrases(m + distractors, cfg.dim);
  int next_step = 0;
  for (int p = 0; p < m + distractors; ++p) {
    if (relevant[static_cast<std::size_t>(p)])
      phrases.row(p) = noisy(protos.row(present[static_cast<std::size_t>(next_step++)]), cfg.noise_sigma, rng);
    else
      phrases.row(p) = random_unit(rng, cfg.dim);
  }

  Matrix steps(m, cfg.dim);
  for (int k = 0; k < m; ++k) steps.row(k) = protos.row(present[static_cast<std::size_t>(k)]);

  DatasetSample s{id,
                  task_name(task),
                  EmbeddingSequence(std::move(video), SequenceKind::video),
                  EmbeddingSequence(std::move(phrases), SequenceKind::phrases),
                  std::move(segs),
                  EmbeddingSequence(std::move(steps), SequenceKind::step_texts),
                  std::move(relevant)};
  s.validate();
  return s;
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset out;
  Rng proto_rng(cfg.seed);
  for (int t = 0; t < cfg.num_tasks; ++t) out.prototypes.push_back(task_prototypes(proto_rng, cfg));
  Matrix basis(cfg.background_subspace_dim, cfg.dim);
  for (int r = 0; r < cfg.background_subspace_dim; ++r)
    for (int c = 0; c < cfg.dim; ++c) basis(r, c) = proto_rng.normal();
  Eigen::HouseholderQR<Matrix> qr(basis.transpose());
  out.background_basis = Matrix(qr.householderQ() * Matrix::Identity(cfg.dim, cfg.background_subspace_dim)).transpose();

  Rng video_rng(cfg.video_seed);
  char id[64];
  for (int t = 0; t < cfg.num_tasks; ++t) {
    for (int v = 0; v < cfg.videos_per_task; ++v) {
      std::snprintf(id, sizeof id, "t%d_v%03d", t, v);
      out.samples.push_back(make_video(id, t, out.prototypes[static_cast<std::size_t>(t)], out.background_basis, cfg, video_rng));
    }
  }
  return out;
}

std::vector<std::string> check_invariants(const SynthDataset& data, const SynthConfig& cfg) {
  std::vector<std::string> bad;
  long frames = 0, background = 0;
  constexpr double tol = 1e-9;
  for (const auto& s : data.samples) {
    const int n = static_cast<int>(s.video.length());
    frames += n;
    int prev_end = -1;
    std::vector<int> covered(static_cast<std::size_t>(n), 0);
    for (const auto& seg : s.gt_segments) {
      if (seg.start <= prev_end || seg.start > seg.end || seg.end >= n)
        bad.push_back(s.id + ": gt segments unordered, overlapping or out of range");
      prev_end = seg.end;
      for (int f = std::max(seg.start, 0); f <= std::min(seg.end, n - 1); ++f) covered[static_cast<std::size_t>(f)] = 1;
    }
    for (int c : covered) background += c == 0;

    const int task = std::stoi(s.task.substr(4));
    const Matrix& protos = data.prototypes.at(static_cast<std::size_t>(task));
    if (!s.phrase_relevance || !s.gt_step_texts) {
      bad.push_back(s.id + ": missing phrase relevance or step texts");
      continue;
    }
    // Relevant phrases must follow gt step order.
    std::vector<int> phrase_steps;
    for (Eigen::Index p = 0; p < s.phrases.length(); ++p) {
      if (!(*s.phrase_relevance)[static_cast<std::size_t>(p)]) continue;
      Eigen::Index best;
      (protos * s.phrases.row(p).transpose()).maxCoeff(&best);
      phrase_steps.push_back(static_cast<int>(best));
    }
    std::vector<int> gt_steps;
    for (const auto& seg : s.gt_segments) gt_steps.push_back(seg.label);
    if (cfg.noise_sigma == 0.0 && phrase_steps != gt_steps) bad.push_back(s.id + ": relevant phrase order differs from gt");
    if (phrase_steps.size() != gt_steps.size()) bad.push_back(s.id + ": relevant phrase count differs from gt");

    if (cfg.noise_sigma == 0.0) {
      for (const auto& seg : s.gt_segments) {
        for (int f = seg.start; f <= seg.end; ++f) {
          const RowVector c = protos * s.video.row(f).transpose();
          for (Eigen::Index k = 0; k < protos.rows(); ++k) {
            if (k == seg.label && std::abs(c(k) - 1.0) > tol) bad.push_back(s.id + ": frame differs from its prototype");
            if (k != seg.label && c(k) > cfg.max_prototype_cosine + tol)
              bad.push_back(s.id + ": frame too close to another prototype");
          }
        }
      }
    }
  }
  const double ratio = frames > 0 ? static_cast<double>(background) / static_cast<double>(frames) : 0.0;
  if (std::abs(ratio - cfg.background_ratio) > 0.1)
    bad.push_back("background fraction " + std::to_string(ratio) + " is off the configured ratio");
  return bad;
}

}  // namespace stepalign
