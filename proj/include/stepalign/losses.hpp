#pragma once

#include <span>
#include <vector>

#include "stepalign/align.hpp"
#include "stepalign/autodiff.hpp"
#include "stepalign/core.hpp"
#include "stepalign/rng.hpp"

namespace stepalign {

struct ContrastiveConfig {
  double gamma_contrastive = 0.03;  // temperature of the seq/global terms
  double gamma_attention = 0.03;    // temperature of the attention softmax and smoothness term
  double alpha = 0.3;
  double beta = 0.02;
  int neighborhood = 3;   // M: frames within this distance are positives
  int sample_count = 64;  // sampled frames per video, capped at N

  void validate() const;
};

struct LossBreakdown {
  double seq = 0.0;
  double glob = 0.0;
  double div = 0.0;
  double smooth = 0.0;
  double total = 0.0;
  int matched_pairs = 0;
};

/// total = seq + glob + alpha * div + beta * smooth; throws NumericalError
/// naming the first non-finite part.
LossBreakdown total_loss(double seq, double glob, double div, double smooth, double alpha, double beta,
                         int matched_pairs = 0);

/// One-to-one Drop-DTW between slots (rows) and phrases (columns) with both
/// drop costs at the given percentile of the -cos matrix.
Correspondence seq_correspondence(const Matrix& slots, const Matrix& phrases, double drop_percentile);

/// Frames sampled for the smoothness term: min(sample_count, N) distinct
/// indices, uniformly without replacement, sorted ascending.
std::vector<int> sample_smoothness_frames(int num_frames, int sample_count, Rng& rng);

// Differentiable forms. Each records onto the tape of its inputs.
namespace graph {

ad::Var info_nce(ad::Var anchor, ad::Var candidates, int positive_index, double gamma);
/// The correspondence is a constant selector: no gradient flows through it.
ad::Var seq_loss(ad::Var slots, ad::Var phrases, const Correspondence& correspondence, double gamma);
ad::Var global_loss(std::span<const ad::Var> batch_slots, std::span<const ad::Var> batch_phrases, double gamma);
ad::Var diversity_reg(ad::Var slots);
/// `sampled` must be sorted; anchors without positives are skipped.
ad::Var smoothness_reg(ad::Var attention, std::span<const int> sampled, int neighborhood, double gamma);

}  // namespace graph

// Value-only forms, evaluated through the same arithmetic as graph::.
double info_nce(const RowVector& anchor, const Matrix& candidates, int positive_index, double gamma);

struct SeqLossResult {
  double loss;
  Correspondence correspondence;
};
SeqLossResult seq_loss(const Matrix& slots, const Matrix& phrases, double gamma,
                       double drop_percentile = kDefaultDropPercentile);

double global_loss(std::span<const Matrix> batch_slots, std::span<const Matrix> batch_phrases, double gamma);
double diversity_reg(const Matrix& slots);
double smoothness_reg(const Matrix& attention, int neighborhood, int sample_count, double gamma, Rng& rng);
double smoothness_reg(const Matrix& attention, std::span<const int> sampled, int neighborhood, double gamma);

}  // namespace stepalign
