#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pidaudit/autodiff.hpp"
#include "pidaudit/market_data.hpp"
#include "pidaudit/optim.hpp"

namespace pidaudit {

struct ModelConfig {
  int embed_dim = 256;
  int heads = 8;
  int layers = 4;
  int context = 64;
  int input_dim = 5;
  int out_bins = 64;
  double dropout = 0.1;
  bool ffn_enabled = true;
  int ffn_mult = 4;
  double rope_base = 10000.0;

  [[nodiscard]] int head_dim() const { return embed_dim / heads; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  AdamConfig adam;
  int batch = 32;
  int epochs = 30;
  double val_fraction = 0.2;
  int window_stride = 1;
  double grad_clip = 1.0;
  std::int64_t max_steps = 0;  // 0: run all epochs
};

struct BlockVars {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
  Var ln1_gain, ln1_bias;
  Var w1, b1, w2, b2;  // unset when the feed-forward sublayer is off
  Var ln2_gain, ln2_bias;
};

struct ModelVars {
  Var embed_w, embed_b;
  std::vector<BlockVars> blocks;
  Var head_w, head_b;
};

/// Autoregressive return model: linear input embedding, post-norm causal
/// attention blocks with RoPE, linear head over the return bins.
class Model {
 public:
  /// Weights ~ N(0, 0.02^2), biases zero, layer-norm gains one.
  Model(const ModelConfig& config, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::span<Parameter> params() { return params_; }
  [[nodiscard]] std::span<const Parameter> params() const { return params_; }
  [[nodiscard]] const Parameter& param(std::string_view name) const;
  Parameter& param(std::string_view name);
  [[nodiscard]] const ad::RopeCache& rope_cache() const { return rope_; }
  [[nodiscard]] std::size_t parameter_count() const;

  /// Per-feature standardisation applied to raw returns before embedding.
  std::vector<double> input_center;
  std::vector<double> input_scale;

  /// Binds parameters as gradient-tracked leaves.
  ModelVars bind(Tape& tape);
  /// Binds parameters as constants (inference).
  [[nodiscard]] ModelVars bind(Tape& tape) const;

  /// Rounds every parameter and the input standardisation to float32, the
  /// checkpoint storage precision.
  void round_to_float32();

 private:
  friend class CheckpointAccess;
  ModelConfig config_;
  std::uint64_t seed_;
  std::vector<Parameter> params_;
  ad::RopeCache rope_;
};

struct ForwardOptions {
  bool training = false;
  CounterRng rng{};
};

/// Pre-projection concatenated head outputs of one block.
Var attention_heads(Var x, const BlockVars& block, const ModelConfig& cfg, std::size_t seq_len,
                    const ad::RopeCache& rope, const ForwardOptions& opt);

/// One full block: attention + add&norm, then optional FFN + add&norm.
Var attention_layer(Var x, const BlockVars& block, const ModelConfig& cfg, std::size_t seq_len,
                    const ad::RopeCache& rope, const ForwardOptions& opt);

/// `inputs` holds stacked windows of raw returns, [windows*seq_len x input_dim].
/// Returns logits [windows*seq_len x out_bins]; row t predicts step t+1.
Var forward(Tape& tape, const ModelVars& vars, const Model& model, const Tensor& inputs, std::size_t seq_len,
            const ForwardOptions& opt = {});

/// Eval-mode logits for one window [N x input_dim].
Tensor forward_logits(const Model& model, const Tensor& window);

/// Softmax of the last-position logits (eval mode).
std::vector<double> predict_dist(const Model& model, const Tensor& window);

/// predict_dist for the windows ending at each row in `ends` (each >= N-1).
/// Windows are independent and evaluated in parallel when enabled.
std::vector<std::vector<double>> predict_dists(const Model& model, const AlignedPanel& panel,
                                               std::span<const std::size_t> ends);

/// Window of N rows ending at `end` (inclusive), raw returns.
Tensor window_at(const AlignedPanel& panel, std::size_t end, std::size_t seq_len);

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochLoss> history;
  std::vector<double> step_losses;
  std::size_t train_windows = 0;
  std::size_t val_windows = 0;
};

/// Sliding windows with next-step target-bin labels at every position,
/// chronological train/validation split, windows shuffled within the
/// training split, Adam. Parameters end rounded to float32.
TrainResult train(Model& model, const AlignedPanel& panel, const TrainConfig& cfg, const QuantizerSpec& quantizer);

/// Mean cross-entropy of eval-mode predictions over windows starting at `starts`.
double evaluate_loss(const Model& model, const AlignedPanel& panel, std::span<const std::size_t> starts,
                     const QuantizerSpec& quantizer, int batch = 32);

}  // namespace pidaudit
