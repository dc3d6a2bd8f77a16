#include "stepalign/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "stepalign/log.hpp"

namespace stepalign {

void TrainConfig::validate() const {
  if (epochs < 1) throw InvariantError("epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw InvariantError("warmup_epochs must be < epochs");
  if (!(peak_lr > final_lr && final_lr > 0.0)) throw InvariantError("need peak_lr > final_lr > 0");
  if (!(weight_decay >= 0.0)) throw InvariantError("weight_decay must be non-negative");
  if (batch_size < 1) throw InvariantError("batch_size must be >= 1");
  if (!(drop_percentile > 0.0 && drop_percentile <= 1.0)) throw InvariantError("drop_percentile must lie in (0, 1]");
  contrastive.validate();
  model.validate();
}

TrainConfig TrainConfig::full_scale_defaults(int dim) {
  TrainConfig c;
  c.epochs = 60;
  c.warmup_epochs = 3;
  c.peak_lr = 3e-4;
  c.final_lr = 1e-6;
  c.weight_decay = 1e-4;
  c.model = ModelConfig::full_scale(dim);
  return c;
}

double lr_at(std::int64_t step, std::int64_t steps_per_epoch, const TrainConfig& cfg) {
  const std::int64_t warm = static_cast<std::int64_t>(cfg.warmup_epochs) * steps_per_epoch;
  const std::int64_t total = static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch;
  if (step < warm) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  const std::int64_t span = total - 1 - warm;
  const double progress = span <= 0 ? 1.0 : std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(span));
  return cfg.final_lr + (cfg.peak_lr - cfg.final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::string to_json_line(const StepLog& e) {
  const nlohmann::json j = {{"step", e.step},     {"seq", e.loss.seq},       {"glob", e.loss.glob},
                            {"div", e.loss.div},  {"smooth", e.loss.smooth}, {"total", e.loss.total},
                            {"matched_pairs", e.loss.matched_pairs},         {"lr", e.lr}};
  return j.dump();
}

AdamW::AdamW(const ModelParams& params, double weight_decay) : weight_decay_(weight_decay) {
  for (const auto& t : params.tensors()) {
    m_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
    v_.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  }
}

void AdamW::step(ModelParams& params, const std::vector<Matrix>& grads, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  auto& tensors = params.tensors();
  if (grads.size() != tensors.size()) throw InvariantError("gradient count does not match parameter count");
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const Matrix& g = grads[k];
    m_[k] = b1 * m_[k] + (1.0 - b1) * g;
    v_[k] = b2 * v_[k] + (1.0 - b2) * g.cwiseProduct(g);
    Matrix& p = tensors[k].value;
    if (weight_decay_ > 0.0) p *= 1.0 - lr * weight_decay_;
    const Matrix update = (m_[k] / c1).array() / ((v_[k] / c2).array().sqrt() + eps);
    p -= lr * update;
  }
}

namespace {

struct BatchObjective {
  ad::Var total;
  LossBreakdown parts;
};

// Per-video terms are averaged over the batch; the global term couples the
// batch members.
BatchObjective batch_objective(ad::Tape& tape, const ParamVars& vars, const std::vector<const DatasetSample*>& batch,
                               const TrainConfig& cfg, bool training, Rng& rng) {
  const auto& cc = cfg.contrastive;
  std::vector<ad::Var> slots, phrases, seq_terms, div_terms, smooth_terms;
  int matched = 0;
  for (const DatasetSample* s : batch) {
    ad::Var sl = forward_graph(tape, vars, cfg.model, s->video.data(), training, &rng);
    ad::Var ph = tape.constant(s->phrases.data());
    const Correspondence corr = seq_correspondence(sl.value(), s->phrases.data(), cfg.drop_percentile);
    matched += corr.num_matches();
    seq_terms.push_back(graph::seq_loss(sl, ph, corr, cc.gamma_contrastive));
    div_terms.push_back(graph::diversity_reg(sl));
    ad::Var att = attention_map(tape.constant(s->video.data()), sl, cc.gamma_attention);
    const auto sampled = sample_smoothness_frames(static_cast<int>(s->video.length()), cc.sample_count, rng);
    smooth_terms.push_back(graph::smoothness_reg(att, sampled, cc.neighborhood, cc.gamma_attention));
    slots.push_back(sl);
    phrases.push_back(ph);
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  auto mean = [&](const std::vector<ad::Var>& terms) {
    return ad::scale(ad::sum(terms.size() == 1 ? terms[0] : ad::concat_rows(terms)), inv_b);
  };
  ad::Var seq = mean(seq_terms);
  ad::Var glob = graph::global_loss(slots, phrases, cc.gamma_contrastive);
  ad::Var div = mean(div_terms);
  ad::Var smooth = mean(smooth_terms);

  const LossBreakdown parts =
      total_loss(seq.scalar(), glob.scalar(), div.scalar(), smooth.scalar(), cc.alpha, cc.beta, matched);

  std::vector<ad::Var> active;
  if (cfg.terms.seq) active.push_back(seq);
  if (cfg.terms.glob) active.push_back(glob);
  if (cfg.terms.div) active.push_back(ad::scale(div, cc.alpha));
  if (cfg.terms.smooth) active.push_back(ad::scale(smooth, cc.beta));
  if (active.empty()) throw InvariantError("every loss term is disabled");
  ad::Var total = active[0];
  for (std::size_t k = 1; k < active.size(); ++k) total = ad::add(total, active[k]);
  return {total, parts};
}

std::vector<std::vector<const DatasetSample*>> make_batches(const std::vector<DatasetSample>& dataset,
                                                            const std::vector<std::size_t>& order, int batch_size) {
  std::vector<std::vector<const DatasetSample*>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<const DatasetSample*> b;
    for (std::size_t k = i; k < std::min(order.size(), i + static_cast<std::size_t>(batch_size)); ++k)
      b.push_back(&dataset[order[k]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

void check_dataset(const std::vector<DatasetSample>& dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw DataError("training dataset is empty");
  for (const auto& s : dataset) {
    if (s.video.dim() != cfg.model.dim)
      throw DataError(s.id + ": embedding dim " + std::to_string(s.video.dim()) + " does not match model dim " +
                      std::to_string(cfg.model.dim));
  }
}

}  // namespace

TrainResult train(const std::vector<DatasetSample>& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch_end) {
  cfg.validate();
  check_dataset(dataset, cfg);
  TrainResult result{ModelParams::initialize(cfg.model, cfg.seed), {}};
  AdamW opt(result.params, cfg.weight_decay);
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const auto steps_per_epoch =
      static_cast<std::int64_t>((dataset.size() + static_cast<std::size_t>(cfg.batch_size) - 1) / cfg.batch_size);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (const auto& batch : make_batches(dataset, order, cfg.batch_size)) {
      ad::Tape tape;
      const ParamVars vars = ParamVars::on_tape(tape, result.params);
      const BatchObjective obj = batch_objective(tape, vars, batch, cfg, true, rng);
      tape.backward(obj.total);
      const double lr = lr_at(step, steps_per_epoch, cfg);
      opt.step(result.params, vars.gradients(), lr);
      if (!result.params.all_finite()) throw NumericalError("parameters became non-finite at step " + std::to_string(step));
      result.log.push_back({step, obj.parts, lr});
      ++step;
    }
    log::info("epoch " + std::to_string(epoch + 1) + " done, last total " + std::to_string(result.log.back().loss.total));
    if (on_epoch_end) on_epoch_end(epoch + 1, result.params, step);
  }
  return result;
}

LossBreakdown evaluate_objective(const ModelParams& params, const std::vector<DatasetSample>& dataset,
                                 const TrainConfig& cfg, std::uint64_t seed) {
  check_dataset(dataset, cfg);
  Rng rng(seed);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  LossBreakdown acc;
  double batches = 0.0;
  for (const auto& batch : make_batches(dataset, order, cfg.batch_size)) {
    ad::Tape tape;
    ParamVars vars;
    for (const auto& t : params.tensors()) vars.vars.push_back(tape.constant(t.value));
    const LossBreakdown b = batch_objective(tape, vars, batch, cfg, false, rng).parts;
    acc.seq += b.seq;
    acc.glob += b.glob;
    acc.div += b.div;
    acc.smooth += b.smooth;
    acc.matched_pairs += b.matched_pairs;
    batches += 1.0;
  }
  const auto& cc = cfg.contrastive;
  return total_loss(acc.seq / batches, acc.glob / batches, acc.div / batches, acc.smooth / batches, cc.alpha, cc.beta,
                    acc.matched_pairs);
}

}  // namespace stepalign
