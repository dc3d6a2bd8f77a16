#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stepalign/autodiff.hpp"
#include "stepalign/core.hpp"
#include "stepalign/rng.hpp"

namespace stepalign {

inline constexpr double kDefaultAttentionTemperature = 0.03;

struct ModelConfig {
  int dim = 32;
  int num_slots = 8;
  int num_layers = 2;
  int num_heads = 4;
  int ff_multiplier = 4;
  double dropout_rate = 0.1;

  void validate() const;
  /// Six layers and 32 slots at the given embedding width.
  static ModelConfig full_scale(int dim);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamTensor {
  std::string name;
  Matrix value;
};

/// Learnable queries plus every decoder weight, stored as an ordered list of
/// named tensors. The order is fixed by the config and is the checkpoint order.
class ModelParams {
 public:
  /// Normal(0, 0.02) weights, unit norm gains, zero biases.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);
  /// All tensors zero-filled, shapes from the config.
  static ModelParams zeros(const ModelConfig& config);

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::vector<ParamTensor>& tensors() noexcept { return tensors_; }
  [[nodiscard]] const std::vector<ParamTensor>& tensors() const noexcept { return tensors_; }
  [[nodiscard]] const Matrix& get(const std::string& name) const;
  [[nodiscard]] const Matrix& queries() const { return tensors_.front().value; }
  [[nodiscard]] std::size_t num_scalars() const;
  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&);

 private:
  explicit ModelParams(ModelConfig config);
  ModelConfig config_;
  std::vector<ParamTensor> tensors_;
};

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
Matrix sinusoidal_pe(int length, int dim);

/// Parameters placed on a tape as leaves, index-aligned with
/// ModelParams::tensors().
struct ParamVars {
  std::vector<ad::Var> vars;

  static ParamVars on_tape(ad::Tape& tape, const ModelParams& params);
  /// Gradients after Tape::backward, in tensor order.
  [[nodiscard]] std::vector<Matrix> gradients() const;
};

/// Records the decoder on `tape` and returns the K x d slot node. `rng` must
/// be non-null when training (dropout masks are drawn from it).
ad::Var forward_graph(ad::Tape& tape, const ParamVars& vars, const ModelConfig& config, const Matrix& video,
                      bool training, Rng* rng);

/// Inference helper: runs forward_graph on a private tape.
EmbeddingSequence forward(const ModelParams& params, const EmbeddingSequence& video, bool training = false,
                          Rng* rng = nullptr);

/// a = softmax over slots of cos(v_i, s_k) / temperature; N x K.
Matrix attention_map(const Matrix& video, const Matrix& slots, double temperature = kDefaultAttentionTemperature);
ad::Var attention_map(ad::Var video, ad::Var slots, double temperature = kDefaultAttentionTemperature);

}  // namespace stepalign
