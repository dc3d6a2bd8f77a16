#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stepalign/core.hpp"

namespace stepalign {

struct SynthConfig {
  int dim = 32;
  int num_tasks = 4;
  int steps_per_task = 6;
  int videos_per_task = 30;
  std::pair<int, int> frames_range{40, 80};
  std::pair<int, int> step_len_range{4, 12};
  double background_ratio = 0.5;
  double distractor_phrase_ratio = 0.5;
  double noise_sigma = 0.1;
  double step_presence_prob = 0.85;
  std::uint64_t seed = 0;
  // Video layouts and noise; prototypes depend on `seed` alone, so two
  // configs sharing `seed` describe the same tasks.
  std::uint64_t video_seed = 1;
  double max_prototype_cosine = 0.3;
  int background_subspace_dim = 4;
  int max_attempts = 10000;

  void validate() const;
};

struct SynthDataset {
  std::vector<DatasetSample> samples;
  std::vector<Matrix> prototypes;  // per task, steps_per_task x dim, unit rows
  Matrix background_basis;         // orthonormal rows spanning the background subspace
};

/// Deterministic given the config. Throws DataError("cannot satisfy
/// separation at this dim") when prototype rejection sampling gives up.
SynthDataset generate(const SynthConfig& cfg);

/// Violated generation invariants, one message each; empty when all hold.
std::vector<std::string> check_invariants(const SynthDataset& data, const SynthConfig& cfg);

std::string task_name(int task);

}  // namespace stepalign
