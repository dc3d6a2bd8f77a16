#include "stepalign/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "stepalign/log.hpp"

namespace stepalign {

void ContrastiveConfig::validate() const {
  if (!(gamma_contrastive > 0.0) || !(gamma_attention > 0.0)) throw InvariantError("temperatures must be positive");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InvariantError("loss weights must be non-negative");
  if (neighborhood < 1) throw InvariantError("smoothness neighborhood must be >= 1");
  if (sample_count < 2) throw InvariantError("smoothness sample count must be >= 2");
}

LossBreakdown total_loss(double seq, double glob, double div, double smooth, double alpha, double beta,
                         int matched_pairs) {
  const std::pair<const char*, double> parts[] = {{"seq", seq}, {"glob", glob}, {"div", div}, {"smooth", smooth}};
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite loss term: ") + name);
  LossBreakdown b{seq, glob, div, smooth, 0.0, matched_pairs};
  b.total = seq + glob + div * alpha + smooth * beta;
  return b;
}

Correspondence seq_correspondence(const Matrix& slots, const Matrix& phrases, double drop_percentile) {
  return drop_dtw(percentile_cost_spec(match_cost_matrix(slots, phrases), drop_percentile), MatchMode::one_to_one);
}

std::vector<int> sample_smoothness_frames(int num_frames, int sample_count, Rng& rng) {
  auto idx = rng.sample_without_replacement(num_frames, std::min(sample_count, num_frames));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace graph {

namespace {

// -log of the mean over anchors of exp(r_i), where r_i is a log-ratio column.
ad::Var neg_log_mean_exp(ad::Var log_ratios) {
  const double log_count = std::log(static_cast<double>(log_ratios.rows()));
  return ad::add_scalar(ad::scale(ad::logsumexp_rows(ad::transpose(log_ratios)), -1.0), log_count);
}

// MIL-NCE over rows of a logit matrix: numerator over `positives`, denominator
// over every entry of the row.
ad::Var mil_nce(ad::Var logits, const MaskMatrix& positives) {
  ad::Var r = ad::sub(ad::logsumexp_rows(logits, positives), ad::logsumexp_rows(logits));
  return neg_log_mean_exp(r);
}

}  // namespace

ad::Var info_nce(ad::Var anchor, ad::Var candidates, int positive_index, double gamma) {
  if (!(gamma > 0.0)) throw InvariantError("info_nce temperature must be positive");
  if (anchor.rows() != 1) throw InvariantError("info_nce anchor must be a single row");
  if (positive_index < 0 || positive_index >= candidates.rows())
    throw InvariantError("info_nce positive index out of range");
  ad::Var logits = ad::scale(ad::cosine(anchor, candidates), 1.0 / gamma);
  Matrix pick = Matrix::Zero(1, logits.cols());
  pick(0, positive_index) = 1.0;
  return ad::sub(ad::logsumexp_rows(logits), ad::weighted_sum(logits, pick));
}

ad::Var seq_loss(ad::Var slots, ad::Var phrases, const Correspondence& corr, double gamma) {
  if (!(gamma > 0.0)) throw InvariantError("seq_loss temperature must be positive");
  if (corr.mode() != MatchMode::one_to_one) throw InvariantError("seq_loss needs a one_to_one correspondence");
  if (corr.rows() != slots.rows() || corr.cols() != phrases.rows())
    throw InvariantError("correspondence shape does not match slots x phrases");
  const auto pairs = corr.matched_pairs();
  if (pairs.empty()) {
    log::info("seq_loss: every slot and phrase was dropped; term is 0");
    return slots.tape()->constant(Matrix::Zero(1, 1));
  }
  const double w = 1.0 / static_cast<double>(pairs.size());
  const Eigen::Index k = slots.rows(), l = phrases.rows();
  Matrix pick = Matrix::Zero(k, l);
  Matrix row_w = Matrix::Zero(k, 1), col_w = Matrix::Zero(l, 1);
  for (const auto& [i, j] : pairs) {
    pick(i, j) = w;
    row_w(i, 0) = w;
    col_w(j, 0) = w;
  }
  ad::Var logits = ad::scale(ad::cosine(slots, phrases), 1.0 / gamma);
  ad::Var logits_t = ad::transpose(logits);
  ad::Var slot_term = ad::sub(ad::weighted_sum(ad::logsumexp_rows(logits), row_w), ad::weighted_sum(logits, pick));
  ad::Var phrase_term =
      ad::sub(ad::weighted_sum(ad::logsumexp_rows(logits_t), col_w), ad::weighted_sum(logits_t, pick.transpose()));
  return ad::add(slot_term, phrase_term);
}

ad::Var global_loss(std::span<const ad::Var> batch_slots, std::span<const ad::Var> batch_phrases, double gamma) {
  if (batch_slots.empty()) throw InvariantError("global_loss of an empty batch");
  if (batch_slots.size() != batch_phrases.size()) throw InvariantError("global_loss: batch size mismatch");
  if (!(gamma > 0.0)) throw InvariantError("global_loss temperature must be positive");
  ad::Var slots = batch_slots.size() == 1 ? batch_slots[0] : ad::concat_rows(batch_slots);
  ad::Var phrases = batch_phrases.size() == 1 ? batch_phrases[0] : ad::concat_rows(batch_phrases);
  MaskMatrix same_video = MaskMatrix::Zero(slots.rows(), phrases.rows());
  Eigen::Index r0 = 0, c0 = 0;
  for (std::size_t b = 0; b < batch_slots.size(); ++b) {
    same_video.block(r0, c0, batch_slots[b].rows(), batch_phrases[b].rows()).setOnes();
    r0 += batch_slots[b].rows();
    c0 += batch_phrases[b].rows();
  }
  return mil_nce(ad::scale(ad::cosine(slots, phrases), 1.0 / gamma), same_video);
}

ad::Var diversity_reg(ad::Var slots) {
  const Eigen::Index k = slots.rows();
  if (k < 2) {
    log::info("diversity_reg: fewer than two slots; term is 0");
    return slots.tape()->constant(Matrix::Zero(1, 1));
  }
  Matrix w = Matrix::Constant(k, k, 1.0 / static_cast<double>(k * (k - 1)));
  w.diagonal().setZero();
  return ad::weighted_sum(ad::cosine(slots, slots), w);
}

ad::Var smoothness_reg(ad::Var attention, std::span<const int> sampled, int neighborhood, double gamma) {
  if (!(gamma > 0.0)) throw InvariantError("smoothness temperature must be positive");
  if (!std::is_sorted(sampled.begin(), sampled.end())) throw InvariantError("sampled frames must be sorted");
  const auto n = static_cast<Eigen::Index>(sampled.size());
  MaskMatrix positives = MaskMatrix::Zero(n, n);
  std::vector<int> anchors;
  for (Eigen::Index a = 0; a < n; ++a) {
    bool any = false;
    for (Eigen::Index b = 0; b < n; ++b) {
      if (a != b && std::abs(sampled[a] - sampled[b]) <= neighborhood) {
        positives(a, b) = 1;
        any = true;
      }
    }
    if (any) anchors.push_back(static_cast<int>(a));
  }
  if (anchors.empty()) {
    log::info("smoothness_reg: no sampled frame has a positive neighbour; term is 0");
    return attention.tape()->constant(Matrix::Zero(1, 1));
  }
  ad::Var rows = ad::gather_rows(attention, sampled);
  ad::Var logits = ad::scale(ad::cosine(rows, rows), 1.0 / gamma);
  MaskMatrix anchor_pos(static_cast<Eigen::Index>(anchors.size()), n);
  for (std::size_t a = 0; a < anchors.size(); ++a) anchor_pos.row(static_cast<Eigen::Index>(a)) = positives.row(anchors[a]);
  return mil_nce(ad::gather_rows(logits, anchors), anchor_pos);
}

}  // namespace graph

double info_nce(const RowVector& anchor, const Matrix& candidates, int positive_index, double gamma) {
  ad::Tape tape;
  return graph::info_nce(tape.constant(anchor), tape.constant(candidates), positive_index, gamma).scalar();
}

SeqLossResult seq_loss(const Matrix& slots, const Matrix& phrases, double gamma, double drop_percentile) {
  Correspondence corr = seq_correspondence(slots, phrases, drop_percentile);
  ad::Tape tape;
  const double v = graph::seq_loss(tape.constant(slots), tape.constant(phrases), corr, gamma).scalar();
  return {v, std::move(corr)};
}

double global_loss(std::span<const Matrix> batch_slots, std::span<const Matrix> batch_phrases, double gamma) {
  ad::Tape tape;
  std::vector<ad::Var> s, p;
  for (const auto& m : batch_slots) s.push_back(tape.constant(m));
  for (const auto& m : batch_phrases) p.push_back(tape.constant(m));
  return graph::global_loss(s, p, gamma).scalar();
}

double diversity_reg(const Matrix& slots) {
  ad::Tape tape;
  return graph::diversity_reg(tape.constant(slots)).scalar();
}

double smoothness_reg(const Matrix& attention, std::span<const int> sampled, int neighborhood, double gamma) {
  ad::Tape tape;
  return graph::smoothness_reg(tape.constant(attention), sampled, neighborhood, gamma).scalar();
}

double smoothness_reg(const Matrix& attention, int neighborhood, int sample_count, double gamma, Rng& rng) {
  const int n = static_cast<int>(attention.rows());
  if (n <= 2 * neighborhood) throw InvariantError("smoothness_reg needs more than 2M frames");
  const auto sampled = sample_smoothness_frames(n, sample_count, rng);
  return smoothness_reg(attention, sampled, neighborhood, gamma);
}

}  // namespace stepalign
