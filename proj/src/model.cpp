#include "stepalign/model.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace stepalign {

namespace {

struct TensorShape {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
  enum class Init { normal, ones, zeros } init;
};

void add_attention(std::vector<TensorShape>& out, const std::string& prefix, Eigen::Index d) {
  using I = TensorShape::Init;
  for (const char* proj : {"q", "k", "v", "o"}) {
    out.push_back({prefix + ".w" + proj, d, d, I::normal});
    out.push_back({prefix + ".b" + proj, 1, d, I::zeros});
  }
}

void add_norm(std::vector<TensorShape>& out, const std::string& prefix, Eigen::Index d) {
  out.push_back({prefix + ".gain", 1, d, TensorShape::Init::ones});
  out.push_back({prefix + ".bias", 1, d, TensorShape::Init::zeros});
}

// Tensor order consumed by forward_graph.
std::vector<TensorShape> layout(const ModelConfig& c) {
  using I = TensorShape::Init;
  const Eigen::Index d = c.dim;
  const Eigen::Index ff = static_cast<Eigen::Index>(c.dim) * c.ff_multiplier;
  std::vector<TensorShape> out;
  out.push_back({"queries", c.num_slots, d, I::normal});
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l);
    add_norm(out, p + ".norm1", d);
    add_attention(out, p + ".self_attn", d);
    add_norm(out, p + ".norm2", d);
    add_attention(out, p + ".cross_attn", d);
    add_norm(out, p + ".norm3", d);
    out.push_back({p + ".ff.w1", d, ff, I::normal});
    out.push_back({p + ".ff.b1", 1, ff, I::zeros});
    out.push_back({p + ".ff.w2", ff, d, I::normal});
    out.push_back({p + ".ff.b2", 1, d, I::zeros});
  }
  add_norm(out, "final_norm", d);
  return out;
}

class Cursor {
 public:
  explicit Cursor(const ParamVars& vars) : vars_(vars) {}
  ad::Var next() {
    if (pos_ >= vars_.vars.size()) throw InvariantError("parameter list shorter than the model layout");
    return vars_.vars[pos_++];
  }
  [[nodiscard]] bool done() const { return pos_ == vars_.vars.size(); }

 private:
  const ParamVars& vars_;
  std::size_t pos_ = 0;
};

ad::Var dropout(ad::Var x, double rate, bool training, Rng* rng) {
  if (!training || rate <= 0.0) return x;
  const double keep = 1.0 - rate;
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  return ad::mul_const(x, mask);
}

ad::Var layer_norm(Cursor& p, ad::Var x) {
  ad::Var gain = p.next();
  ad::Var bias = p.next();
  return ad::layer_norm(x, gain, bias);
}

ad::Var linear(ad::Var x, ad::Var w, ad::Var b) { return ad::add_row(ad::matmul(x, w), b); }

ad::Var multi_head_attention(Cursor& p, ad::Var query_in, ad::Var key_in, ad::Var value_in, int heads) {
  ad::Var wq = p.next(), bq = p.next(), wk = p.next(), bk = p.next();
  ad::Var wv = p.next(), bv = p.next(), wo = p.next(), bo = p.next();
  ad::Var q = linear(query_in, wq, bq);
  ad::Var k = linear(key_in, wk, bk);
  ad::Var v = linear(value_in, wv, bv);
  const Eigen::Index head_dim = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    ad::Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    ad::Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
    outs.push_back(ad::matmul(weights, vh));
  }
  ad::Var merged = heads == 1 ? outs.front() : ad::concat_cols(outs);
  return linear(merged, wo, bo);
}

}  // namespace

void ModelConfig::validate() const {
  if (dim < 1 || num_slots < 1 || num_layers < 1 || num_heads < 1 || ff_multiplier < 1)
    throw InvariantError("model sizes must be positive");
  if (dim % num_heads != 0) throw InvariantError("dim must be divisible by num_heads");
  if (dim % 2 != 0) throw InvariantError("dim must be even for sinusoidal positional embeddings");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvariantError("dropout_rate must lie in [0, 1)");
}

ModelConfig ModelConfig::full_scale(int dim) {
  ModelConfig c;
  c.dim = dim;
  c.num_slots = 32;
  c.num_layers = 6;
  c.num_heads = 8;
  return c;
}

ModelParams::ModelParams(ModelConfig config) : config_(config) {}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  ModelParams p(config);
  for (const auto& t : layout(config)) p.tensors_.push_back({t.name, Matrix::Zero(t.rows, t.cols)});
  return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams p(config);
  for (const auto& t : layout(config)) {
    Matrix m(t.rows, t.cols);
    switch (t.init) {
      case TensorShape::Init::normal:
        for (Eigen::Index i = 0; i < m.rows(); ++i)
          for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = 0.02 * rng.normal();
        break;
      case TensorShape::Init::ones: m.setOnes(); break;
      case TensorShape::Init::zeros: m.setZero(); break;
    }
    p.tensors_.push_back({t.name, std::move(m)});
  }
  return p;
}

const Matrix& ModelParams::get(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t.value;
  throw InvariantError("no parameter named " + name);
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_)
    if (!t.value.allFinite()) return false;
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.config_ == b.config_) || a.tensors_.size() != b.tensors_.size()) return false;
  for (std::size_t k = 0; k < a.tensors_.size(); ++k)
    if (a.tensors_[k].name != b.tensors_[k].name || a.tensors_[k].value != b.tensors_[k].value) return false;
  return true;
}

Matrix sinusoidal_pe(int length, int dim) {
  if (dim % 2 != 0) throw InvariantError("sinusoidal_pe requires an even dim");
  Matrix pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim / 2; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / dim);
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

ParamVars ParamVars::on_tape(ad::Tape& tape, const ModelParams& params) {
  ParamVars pv;
  pv.vars.reserve(params.tensors().size());
  for (const auto& t : params.tensors()) pv.vars.push_back(tape.leaf(t.value));
  return pv;
}

std::vector<Matrix> ParamVars::gradients() const {
  std::vector<Matrix> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.grad());
  return out;
}

// Pre-normalization decoder: each sublayer normalizes its input and adds its
// (dropped-out) output back onto the residual stream. Positional embeddings
// enter the cross-attention keys only.
ad::Var forward_graph(ad::Tape& tape, const ParamVars& vars, const ModelConfig& config, const Matrix& video,
                      bool training, Rng* rng) {
  if (video.cols() != config.dim)
    throw InvariantError("video dim " + std::to_string(video.cols()) + " does not match model dim " +
                         std::to_string(config.dim));
  if (video.rows() < 1) throw InvariantError("empty video");
  if (training && config.dropout_rate > 0.0 && rng == nullptr)
    throw InvariantError("training forward needs a random source");

  Cursor p(vars);
  ad::Var x = p.next();
  ad::Var memory = tape.constant(video);
  ad::Var keys = tape.constant(video + sinusoidal_pe(static_cast<int>(video.rows()), config.dim));
  const double rate = config.dropout_rate;

  for (int l = 0; l < config.num_layers; ++l) {
    ad::Var h = layer_norm(p, x);
    x = ad::add(x, dropout(multi_head_attention(p, h, h, h, config.num_heads), rate, training, rng));
    h = layer_norm(p, x);
    x = ad::add(x, dropout(multi_head_attention(p, h, keys, memory, config.num_heads), rate, training, rng));
    h = layer_norm(p, x);
    ad::Var w1 = p.next(), b1 = p.next(), w2 = p.next(), b2 = p.next();
    ad::Var ff = linear(ad::gelu(linear(h, w1, b1)), w2, b2);
    x = ad::add(x, dropout(ff, rate, training, rng));
  }
  ad::Var out = layer_norm(p, x);
  if (!p.done()) throw InvariantError("parameter list longer than the model layout");
  if (!out.value().allFinite()) throw NumericalError("non-finite activation in decoder output");
  return out;
}

EmbeddingSequence forward(const ModelParams& params, const EmbeddingSequence& video, bool training, Rng* rng) {
  ad::Tape tape;
  // Constants are enough for inference; gradients are never requested.
  ParamVars pv;
  for (const auto& t : params.tensors()) pv.vars.push_back(tape.constant(t.value));
  ad::Var slots = forward_graph(tape, pv, params.config(), video.data(), training, rng);
  return {slots.value(), SequenceKind::slots};
}

ad::Var attention_map(ad::Var video, ad::Var slots, double temperature) {
  if (!(temperature > 0.0)) throw InvariantError("attention temperature must be positive");
  return ad::softmax_rows(ad::scale(ad::cosine(video, slots), 1.0 / temperature));
}

Matrix attention_map(const Matrix& video, const Matrix& slots, double temperature) {
  ad::Tape tape;
  return attention_map(tape.constant(video), tape.constant(slots), temperature).value();
}

}  // namespace stepalign
