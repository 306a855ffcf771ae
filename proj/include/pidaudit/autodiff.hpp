#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pidaudit/kernels.hpp"
#include "pidaudit/rng.hpp"
#include "pidaudit/tensor.hpp"

namespace pidaudit {

/// Trainable array with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const std::vector<std::size_t>& shape() const { return value().shape(); }
};

/// Records executed ops in creation order, which is already topological;
/// backward walks it once in reverse.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  /// With recording off, ops only compute values (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `p`; backward accumulates into p.grad.
  Var param(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 and propagates. The tape is consumed: a second
  /// call without reset() throws.
  void backward(Var loss);
  void reset();

  [[nodiscard]] bool recording() const { return record_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Adds `g` into the gradient slot of node `id` (allocating on first use).
  void accumulate(std::size_t id, const Tensor& g);
  /// Mutable gradient slot, zero-initialised on first access.
  Tensor& grad_slot(std::size_t id);

  /// Registers an op result. `backward` is dropped when not recording or
  /// when no input needs a gradient.
  Var push(Tensor value, std::vector<std::size_t> inputs, Backward backward);

  /// Debug builds verify every op output is finite.
  static void set_finite_checks(bool on);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  bool record_;
  bool consumed_ = false;
  std::deque<Node> nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// x[R x C] + b[C] broadcast over rows.
Var add_row(Var x, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var transpose(Var a);
Var reshape(Var a, std::vector<std::size_t> shape);
Var concat_last_axis(std::span<const Var> parts);
Var slice_last_axis(Var a, std::size_t begin, std::size_t width);
Var softmax_lastaxis(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var x);
/// Inverted dropout; identity when !training or p == 0.
Var dropout(Var x, double p, const CounterRng& rng, bool training);
/// Mean over rows of -log softmax(logits)[target]; returns shape [1].
Var cross_entropy(Var logits, std::span<const int> targets);
Var sum(Var x);
inline Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

/// Rotary tables: cos/sin for `positions` rows and head_dim/2 frequency pairs.
struct RopeCache {
  std::size_t positions = 0;
  std::size_t head_dim = 0;
  std::vector<double> cos;
  std::vector<double> sin;

  RopeCache() = default;
  RopeCache(std::size_t positions, std::size_t head_dim, double base);
};

/// Rotates consecutive feature pairs of every head. Row r of x is at position
/// r % seq_len. The cache must outlive the tape's backward pass.
Var rope(Var x, std::size_t heads, std::size_t seq_len, const RopeCache& cache);

struct AttentionOptions {
  std::size_t heads = 1;
  std::size_t seq_len = 1;
  double dropout = 0.0;
  bool training = false;
  CounterRng rng{};
};

/// Causal scaled dot-product attention on stacked windows; returns the
/// concatenated head outputs (before the output projection).
Var causal_attention(Var q, Var k, Var v, const AttentionOptions& opt);

}  // namespace ad
}  // namespace pidaudit
