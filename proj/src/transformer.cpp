#include "pidaudit/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "pidaudit/error.hpp"
#include "pidaudit/log.hpp"

namespace pidaudit {
namespace {

// RNG stream identifiers under the model seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kDropoutStream = 3;

constexpr double kInitStd = 0.02;

enum class Init { kNormal, kZero, kOne };

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

std::string block_name(int l, const char* leaf) { return "blocks." + std::to_string(l) + "." + leaf; }

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) throw ConfigError("model: embed_dim must be divisible by heads");
  if (head_dim() % 2 != 0) throw ConfigError("model: head_dim must be even for RoPE");
  if (layers < 0) throw ConfigError("model: layers must be >= 0");
  if (context < 1) throw ConfigError("model: context must be >= 1");
  if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
  if (out_bins < 2) throw ConfigError("model: out_bins must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must be in [0, 1)");
  if (ffn_enabled && ffn_mult < 1) throw ConfigError("model: ffn_mult must be >= 1");
  if (!(rope_base > 1.0)) throw ConfigError("model: rope_base must be > 1");
}

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : input_center(sz(config.input_dim), 0.0),
      input_scale(sz(config.input_dim), 1.0),
      config_(config),
      seed_(seed),
      rope_(sz(config.context), sz(config.head_dim()), config.rope_base) {
  config_.validate();
  const std::size_t C = sz(config.embed_dim), F = sz(config.ffn_mult) * C;
  std::vector<Init> kinds;
  auto add = [&](std::string name, std::vector<std::size_t> shape, Init kind) {
    params_.push_back(Parameter{std::move(name), Tensor(std::move(shape)), {}});
    kinds.push_back(kind);
  };
  add("embed.w", {sz(config.input_dim), C}, Init::kNormal);
  add("embed.b", {C}, Init::kZero);
  for (int l = 0; l < config.layers; ++l) {
    for (const char* m : {"wq", "wk", "wv", "wo"}) {
      add(block_name(l, m), {C, C}, Init::kNormal);
      std::string b = m;
      b[0] = 'b';
      add(block_name(l, b.c_str()), {C}, Init::kZero);
    }
    add(block_name(l, "ln1.gain"), {C}, Init::kOne);
    add(block_name(l, "ln1.bias"), {C}, Init::kZero);
    if (config.ffn_enabled) {
      add(block_name(l, "w1"), {C, F}, Init::kNormal);
      add(block_name(l, "b1"), {F}, Init::kZero);
      add(block_name(l, "w2"), {F, C}, Init::kNormal);
      add(block_name(l, "b2"), {C}, Init::kZero);
      add(block_name(l, "ln2.gain"), {C}, Init::kOne);
      add(block_name(l, "ln2.bias"), {C}, Init::kZero);
    }
  }
  add("head.w", {C, sz(config.out_bins)}, Init::kNormal);
  add("head.b", {sz(config.out_bins)}, Init::kZero);

  const CounterRng init = CounterRng(seed).split(kInitStream);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& v = params_[i].value;
    if (kinds[i] == Init::kOne) v.fill(1.0);
    if (kinds[i] != Init::kNormal) continue;
    const CounterRng stream = init.split(i);
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = kInitStd * stream.normal_at(j);
  }
}

const Parameter& Model::param(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

Parameter& Model::param(std::string_view name) {
  return const_cast<Parameter&>(std::as_const(*this).param(name));
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void Model::round_to_float32() {
  auto round = [](double& v) { v = static_cast<double>(static_cast<float>(v)); };
  for (auto& p : params_)
    for (double& v : p.value.values()) round(v);
  for (double& v : input_center) round(v);
  for (double& v : input_scale) round(v);
}

namespace {

template <class BindFn>
ModelVars bind_all(const ModelConfig& cfg, BindFn&& bind) {
  std::size_t i = 0;
  auto next = [&] { return bind(i++); };
  ModelVars mv;
  mv.embed_w = next();
  mv.embed_b = next();
  for (int l = 0; l < cfg.layers; ++l) {
    BlockVars b;
    b.wq = next(), b.bq = next(), b.wk = next(), b.bk = next();
    b.wv = next(), b.bv = next(), b.wo = next(), b.bo = next();
    b.ln1_gain = next(), b.ln1_bias = next();
    if (cfg.ffn_enabled) {
      b.w1 = next(), b.b1 = next(), b.w2 = next(), b.b2 = next();
      b.ln2_gain = next(), b.ln2_bias = next();
    }
    mv.blocks.push_back(b);
  }
  mv.head_w = next();
  mv.head_b = next();
  return mv;
}

}  // namespace

ModelVars Model::bind(Tape& tape) {
  return bind_all(config_, [&](std::size_t i) { return tape.param(params_[i]); });
}

ModelVars Model::bind(Tape& tape) const {
  return bind_all(config_, [&](std::size_t i) { return tape.constant(params_[i].value); });
}

Var attention_heads(Var x, const BlockVars& block, const ModelConfig& cfg, std::size_t seq_len,
                    const ad::RopeCache& rope, const ForwardOptions& opt) {
  if (x.value().cols() != sz(cfg.embed_dim) || x.value().rows() % seq_len != 0) {
    throw std::invalid_argument("attention layer: input must be [windows*N x C]");
  }
  const auto heads = sz(cfg.heads);
  Var q = ad::rope(ad::linear(x, block.wq, block.bq), heads, seq_len, rope);
  Var k = ad::rope(ad::linear(x, block.wk, block.bk), heads, seq_len, rope);
  Var v = ad::linear(x, block.wv, block.bv);
  ad::AttentionOptions ao;
  ao.heads = heads;
  ao.seq_len = seq_len;
  ao.dropout = cfg.dropout;
  ao.training = opt.training;
  ao.rng = opt.rng.split(0);
  return ad::causal_attention(q, k, v, ao);
}

Var attention_layer(Var x, const BlockVars& block, const ModelConfig& cfg, std::size_t seq_len,
                    const ad::RopeCache& rope, const ForwardOptions& opt) {
  Var att = ad::linear(attention_heads(x, block, cfg, seq_len, rope, opt), block.wo, block.bo);
  att = ad::dropout(att, cfg.dropout, opt.rng.split(1), opt.training);
  Var h = ad::layer_norm(ad::add(x, att), block.ln1_gain, block.ln1_bias);
  if (!cfg.ffn_enabled) return h;
  Var f = ad::linear(ad::gelu(ad::linear(h, block.w1, block.b1)), block.w2, block.b2);
  f = ad::dropout(f, cfg.dropout, opt.rng.split(2), opt.training);
  return ad::layer_norm(ad::add(h, f), block.ln2_gain, block.ln2_bias);
}

Var forward(Tape& tape, const ModelVars& vars, const Model& model, const Tensor& inputs, std::size_t seq_len,
            const ForwardOptions& opt) {
  const auto& cfg = model.config();
  if (inputs.cols() != sz(cfg.input_dim)) throw std::invalid_argument("forward: input width != input_dim");
  if (seq_len == 0 || seq_len > sz(cfg.context) || inputs.rows() % seq_len != 0) {
    throw std::invalid_argument("forward: rows must be a multiple of a sequence length <= context");
  }
  Tensor x = inputs;
  const std::size_t D = inputs.cols();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - model.input_center[i % D]) / model.input_scale[i % D];

  Var h = ad::linear(tape.constant(std::move(x)), vars.embed_w, vars.embed_b);
  for (std::size_t l = 0; l < vars.blocks.size(); ++l) {
    ForwardOptions lo{opt.training, opt.rng.split(l)};
    h = attention_layer(h, vars.blocks[l], cfg, seq_len, model.rope_cache(), lo);
  }
  return ad::linear(h, vars.head_w, vars.head_b);
}

Tensor forward_logits(const Model& model, const Tensor& window) {
  Tape tape(false);
  const ModelVars vars = model.bind(tape);
  return forward(tape, vars, model, window, window.rows()).value();
}

std::vector<double> predict_dist(const Model& model, const Tensor& window) {
  const Tensor logits = forward_logits(model, window);
  const std::size_t C = logits.cols(), last = logits.rows() - 1;
  std::vector<double> p(C);
  kernels::softmax_rows(logits.data().subspan(last * C, C), p, 1, C);
  return p;
}

Tensor window_at(const AlignedPanel& panel, std::size_t end, std::size_t seq_len) {
  if (end + 1 < seq_len || end >= panel.rows()) throw std::out_of_range("window_at: window outside panel");
  const std::size_t S = panel.cols();
  const std::size_t start = end + 1 - seq_len;
  std::vector<double> v(panel.returns.begin() + static_cast<std::ptrdiff_t>(start * S),
                        panel.returns.begin() + static_cast<std::ptrdiff_t>((end + 1) * S));
  return Tensor::matrix(seq_len, S, std::move(v));
}

namespace {

constexpr std::size_t kInferBatch = 32;

Tensor stack_windows(const AlignedPanel& panel, std::span<const std::size_t> starts, std::size_t seq_len) {
  const std::size_t S = panel.cols();
  Tensor out({starts.size() * seq_len, S});
  for (std::size_t w = 0; w < starts.size(); ++w)
    std::copy_n(panel.returns.begin() + static_cast<std::ptrdiff_t>(starts[w] * S), seq_len * S,
                out.data().begin() + static_cast<std::ptrdiff_t>(w * seq_len * S));
  return out;
}

std::vector<int> window_labels(std::span<const int> labels, std::span<const std::size_t> starts, std::size_t seq_len) {
  std::vector<int> out;
  out.reserve(starts.size() * seq_len);
  for (auto s : starts)
    for (std::size_t j = 0; j < seq_len; ++j) out.push_back(labels[s + j]);
  return out;
}

// label[t] is the bin of the target's return at t+1.
std::vector<int> next_step_labels(const AlignedPanel& panel, const QuantizerSpec& q) {
  std::vector<int> labels(panel.rows() > 0 ? panel.rows() - 1 : 0);
  for (std::size_t t = 0; t + 1 < panel.rows(); ++t) labels[t] = quantize(panel.at(t + 1, 0), q);
  return labels;
}

}  // namespace

std::vector<std::vector<double>> predict_dists(const Model& model, const AlignedPanel& panel,
                                               std::span<const std::size_t> ends) {
  const std::size_t N = sz(model.config().context);
  const std::size_t bins = sz(model.config().out_bins);
  std::vector<std::size_t> starts(ends.size());
  for (std::size_t i = 0; i < ends.size(); ++i) {
    if (ends[i] + 1 < N || ends[i] >= panel.rows()) throw std::out_of_range("predict_dists: window outside panel");
    starts[i] = ends[i] + 1 - N;
  }
  std::vector<std::vector<double>> out(ends.size());
  const auto batches = static_cast<std::ptrdiff_t>((ends.size() + kInferBatch - 1) / kInferBatch);
  const int nt = kernels::max_threads();
#pragma omp parallel for schedule(static) if (nt > 1 && batches > 1) num_threads(nt)
  for (std::ptrdiff_t b = 0; b < batches; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kInferBatch;
    const std::size_t hi = std::min(lo + kInferBatch, ends.size());
    const auto part = std::span<const std::size_t>(starts).subspan(lo, hi - lo);
    Tape tape(false);
    const ModelVars vars = model.bind(tape);
    const Tensor& logits = forward(tape, vars, model, stack_windows(panel, part, N), N).value();
    for (std::size_t w = 0; w < part.size(); ++w) {
      out[lo + w].resize(bins);
      kernels::softmax_rows(logits.data().subspan(((w + 1) * N - 1) * bins, bins), out[lo + w], 1, bins);
    }
  }
  return out;
}

double evaluate_loss(const Model& model, const AlignedPanel& panel, std::span<const std::size_t> starts,
                     const QuantizerSpec& quantizer, int batch) {
  if (starts.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t N = sz(model.config().context);
  const auto labels = next_step_labels(panel, quantizer);
  double total = 0.0;
  const std::size_t B = sz(std::max(batch, 1));
  for (std::size_t lo = 0; lo < starts.size(); lo += B) {
    const auto part = starts.subspan(lo, std::min(B, starts.size() - lo));
    Tape tape(false);
    const ModelVars vars = model.bind(tape);
    Var logits = forward(tape, vars, model, stack_windows(panel, part, N), N);
    const auto tgt = window_labels(labels, part, N);
    total += ad::cross_entropy(logits, tgt).value()[0] * static_cast<double>(part.size());
  }
  return total / static_cast<double>(starts.size());
}

TrainResult train(Model& model, const AlignedPanel& panel, const TrainConfig& cfg, const QuantizerSpec& quantizer) {
  const auto& mc = model.config();
  const std::size_t N = sz(mc.context);
  const std::size_t T = panel.rows();
  if (panel.cols() != sz(mc.input_dim)) throw ConfigError("train: panel has " + std::to_string(panel.cols()) +
                                                          " columns but model input_dim is " + std::to_string(mc.input_dim));
  if (quantizer.bins != mc.out_bins) throw ConfigError("train: quantizer bins must equal model out_bins");
  if (T < N + 1) throw DataError("train: panel has " + std::to_string(T) + " rows, need at least context + 1");
  if (cfg.batch < 1 || cfg.epochs < 0 || cfg.window_stride < 1) throw ConfigError("train: invalid batch/epochs/stride");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) throw ConfigError("train: val_fraction must be in [0, 1)");

  const auto split_row = static_cast<std::size_t>(std::floor((1.0 - cfg.val_fraction) * static_cast<double>(T)));
  const auto stride = sz(cfg.window_stride);
  std::vector<std::size_t> train_starts, val_starts;
  // Training labels stay strictly before split_row; validation labels at or after it.
  for (std::size_t s = 0; s + N + 1 <= split_row; s += stride) train_starts.push_back(s);
  for (std::size_t s = split_row > 0 ? split_row - 1 : 0; s + N + 1 <= T; s += stride) val_starts.push_back(s);
  if (train_starts.empty()) throw DataError("train: panel too short for a single training window");

  // Standardise inputs with training-split statistics.
  const std::size_t S = panel.cols();
  for (std::size_t c = 0; c < S; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t t = 0; t < split_row; ++t) mean += panel.at(t, c);
    mean /= static_cast<double>(split_row);
    for (std::size_t t = 0; t < split_row; ++t) sq += (panel.at(t, c) - mean) * (panel.at(t, c) - mean);
    const double sd = std::sqrt(sq / static_cast<double>(split_row));
    model.input_center[c] = static_cast<float>(mean);
    model.input_scale[c] = sd > 1e-12 ? static_cast<float>(sd) : 1.0;
  }

  const auto labels = next_step_labels(panel, quantizer);
  const CounterRng root(model.seed());
  AdamState adam(cfg.adam, model.params());
  TrainResult result;
  result.train_windows = train_starts.size();
  result.val_windows = val_starts.size();

  std::ostringstream msg;
  msg << "params=" << model.parameter_count() << " train_windows=" << train_starts.size()
      << " val_windows=" << val_starts.size();
  log::info("train", msg.str());

  std::int64_t step = 0;
  const std::size_t B = sz(cfg.batch);
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order = train_starts;
    CounterRng shuffle = root.split(kShuffleStream).split(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += B) {
      const auto part = std::span<const std::size_t>(order).subspan(lo, std::min(B, order.size() - lo));
      for (auto& p : model.params()) p.zero_grad();
      Tape tape(true);
      const ModelVars vars = model.bind(tape);
      ForwardOptions fo{true, root.split(kDropoutStream).split(static_cast<std::uint64_t>(step))};
      Var logits = forward(tape, vars, model, stack_windows(panel, part, N), N, fo);
      const auto tgt = window_labels(labels, part, N);
      Var loss = ad::cross_entropy(logits, tgt);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) throw NumericalError("train: non-finite loss at step " + std::to_string(step));
      tape.backward(loss);
      clip_grad_norm(model.params(), cfg.grad_clip);
      adam_step(model.params(), adam);
      result.step_losses.push_back(lv);
      epoch_loss += lv;
      ++epoch_batches;
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    EpochLoss rec{epoch, epoch_loss / static_cast<double>(std::max<std::size_t>(epoch_batches, 1)),
                  evaluate_loss(model, panel, val_starts, quantizer, cfg.batch)};
    result.history.push_back(rec);
    std::ostringstream line;
    line << "epoch " << epoch << " train_loss=" << rec.train_loss << " val_loss=" << rec.val_loss;
    log::info("train", line.str());
  }
  model.round_to_float32();
  return result;
}

}  // namespace pidaudit
