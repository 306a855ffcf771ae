#include "pidaudit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

#include "pidaudit/error.hpp"

namespace pidaudit {
namespace {

#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void add_into(Tensor& dst, std::span<const double> src) {
  auto d = dst.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

void Tape::set_finite_checks(bool on) { g_finite_checks = on; }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, nullptr, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, false, record_, record_ ? &p : nullptr, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, Backward backward) {
  if (g_finite_checks && !value.all_finite()) throw NumericalError("non-finite value produced by tensor op");
  bool needs = false;
  if (record_)
    for (auto id : inputs) needs = needs || nodes_[id].needs_grad;
  nodes_.push_back(Node{std::move(value), {}, false, needs, nullptr, needs ? std::move(backward) : Backward{}});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].needs_grad) return;
  add_into(grad_slot(id), g.data());
}

void Tape::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  if (consumed_) throw std::logic_error("tape already consumed; call reset()");
  if (loss.value().size() != 1) throw std::invalid_argument("backward needs a scalar loss");
  consumed_ = true;
  grad_slot(loss.id).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      if (n.param->grad.size() != n.param->value.size()) n.param->zero_grad();
      add_into(n.param->grad, n.grad.data());
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

namespace ad {

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(B.rank() == 2 && A.cols() == B.shape()[0], "matmul: shape mismatch");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  kernels::matmul(A.data(), B.data(), out.data(), m, k, n);
  return a.tape->push(std::move(out), {a.id, b.id}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    if (t.needs_grad(a.id))
      kernels::matmul_nt(g.data(), t.value(b.id).data(), t.grad_slot(a.id).data(), m, n, k, true);
    if (t.needs_grad(b.id))
      kernels::matmul_tn(t.value(a.id).data(), g.data(), t.grad_slot(b.id).data(), k, m, n, true);
  });
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.shape() == B.shape(), "add: shape mismatch");
  Tensor out = A;
  add_into(out, B.data());
  return a.tape->push(std::move(out), {a.id, b.id}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var add_row(Var x, Var b) {
  const Tensor& X = x.value();
  const Tensor& B = b.value();
  require(B.size() == X.cols(), "add_row: bias length mismatch");
  Tensor out = X;
  const std::size_t R = X.rows(), C = X.cols();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] += B[c];
  return x.tape->push(std::move(out), {x.id, b.id}, [x, b, R, C](Tape& t, const Tensor& g) {
    t.accumulate(x.id, g);
    if (t.needs_grad(b.id)) {
      Tensor& db = t.grad_slot(b.id);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) db[c] += g[r * C + c];
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.shape() == B.shape(), "mul: shape mismatch");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return a.tape->push(std::move(out), {a.id, b.id}, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a.id)) {
      Tensor& da = t.grad_slot(a.id);
      const Tensor& B = t.value(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * B[i];
    }
    if (t.needs_grad(b.id)) {
      Tensor& db = t.grad_slot(b.id);
      const Tensor& A = t.value(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * A[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return a.tape->push(std::move(out), {a.id}, [a, s](Tape& t, const Tensor& g) {
    Tensor& da = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += s * g[i];
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  require(A.rank() == 2, "transpose: rank-2 tensor required");
  const std::size_t R = A.shape()[0], C = A.shape()[1];
  Tensor out({C, R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = A[r * C + c];
  return a.tape->push(std::move(out), {a.id}, [a, R, C](Tape& t, const Tensor& g) {
    Tensor& da = t.grad_slot(a.id);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) da[r * C + c] += g[c * R + r];
  });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape->push(std::move(out), {a.id},
                      [a](Tape& t, const Tensor& g) { add_into(t.grad_slot(a.id), g.data()); });
}

Var concat_last_axis(std::span<const Var> parts) {
  require(!parts.empty(), "concat_last_axis: no inputs");
  const std::size_t R = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.value().rows() == R && p.value().rank() == parts[0].value().rank(), "concat_last_axis: row mismatch");
    widths.push_back(p.value().cols());
    ids.push_back(p.id);
    total += p.value().cols();
  }
  auto shape = parts[0].value().shape();
  shape.back() = total;
  Tensor out(shape);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& P = parts[i].value();
    for (std::size_t r = 0; r < R; ++r)
      std::copy_n(P.data().begin() + r * widths[i], widths[i], out.data().begin() + r * total + offset);
    offset += widths[i];
  }
  return parts[0].tape->push(std::move(out), ids, [ids, widths, R, total](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.needs_grad(ids[i])) {
        Tensor& d = t.grad_slot(ids[i]);
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < widths[i]; ++c) d[r * widths[i] + c] += g[r * total + off + c];
      }
      off += widths[i];
    }
  });
}

Var slice_last_axis(Var a, std::size_t begin, std::size_t width) {
  const Tensor& A = a.value();
  require(width > 0 && begin + width <= A.cols(), "slice_last_axis: out of range");
  const std::size_t R = A.rows(), C = A.cols();
  auto shape = A.shape();
  shape.back() = width;
  Tensor out(shape);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = A[r * C + begin + c];
  return a.tape->push(std::move(out), {a.id}, [a, R, C, begin, width](Tape& t, const Tensor& g) {
    Tensor& da = t.grad_slot(a.id);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < width; ++c) da[r * C + begin + c] += g[r * width + c];
  });
}

Var softmax_lastaxis(Var x) {
  const Tensor& X = x.value();
  const std::size_t R = X.rows(), C = X.cols();
  Tensor out(X.shape());
  kernels::softmax_rows(X.data(), out.data(), R, C);
  const std::size_t out_id = x.tape->size();
  return x.tape->push(std::move(out), {x.id}, [x, out_id, R, C](Tape& t, const Tensor& g) {
    const Tensor& Y = t.value(out_id);
    Tensor& dx = t.grad_slot(x.id);
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += g[r * C + c] * Y[r * C + c];
      for (std::size_t c = 0; c < C; ++c) dx[r * C + c] += Y[r * C + c] * (g[r * C + c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& X = x.value();
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  const std::size_t R = X.rows(), C = X.cols();
  require(G.size() == C && B.size() == C, "layer_norm: parameter length mismatch");
  auto xhat = std::make_shared<std::vector<double>>(X.size());
  auto rstd = std::make_shared<std::vector<double>>(R);
  Tensor out(X.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = X.data().data() + r * C;
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += row[c];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(C);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (row[c] - mean) * rs;
      (*xhat)[r * C + c] = h;
      out[r * C + c] = h * G[c] + B[c];
    }
  }
  return x.tape->push(std::move(out), {x.id, gain.id, bias.id},
                      [x, gain, bias, xhat, rstd, R, C](Tape& t, const Tensor& g) {
                        const Tensor& G = t.value(gain.id);
                        if (t.needs_grad(gain.id)) {
                          Tensor& dg = t.grad_slot(gain.id);
                          for (std::size_t i = 0; i < g.size(); ++i) dg[i % C] += g[i] * (*xhat)[i];
                        }
                        if (t.needs_grad(bias.id)) {
                          Tensor& db = t.grad_slot(bias.id);
                          for (std::size_t i = 0; i < g.size(); ++i) db[i % C] += g[i];
                        }
                        if (!t.needs_grad(x.id)) return;
                        Tensor& dx = t.grad_slot(x.id);
                        const double invC = 1.0 / static_cast<double>(C);
                        for (std::size_t r = 0; r < R; ++r) {
                          double m1 = 0.0, m2 = 0.0;
                          for (std::size_t c = 0; c < C; ++c) {
                            const double dh = g[r * C + c] * G[c];
                            m1 += dh;
                            m2 += dh * (*xhat)[r * C + c];
                          }
                          m1 *= invC;
                          m2 *= invC;
                          for (std::size_t c = 0; c < C; ++c) {
                            const double dh = g[r * C + c] * G[c];
                            dx[r * C + c] += (*rstd)[r] * (dh - m1 - (*xhat)[r * C + c] * m2);
                          }
                        }
                      });
}

Var gelu(Var x) {
  constexpr double kA = 0.044715;
  const double kS = std::sqrt(2.0 / std::numbers::pi);
  Tensor out = x.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::tanh(kS * (v + kA * v * v * v)));
  return x.tape->push(std::move(out), {x.id}, [x, kS](Tape& t, const Tensor& g) {
    const Tensor& X = t.value(x.id);
    Tensor& dx = t.grad_slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = X[i];
      const double th = std::tanh(kS * (v + kA * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kS * (1.0 + 3.0 * kA * v * v);
      dx[i] += g[i] * d;
    }
  });
}

Var dropout(Var x, double p, const CounterRng& rng, bool training) {
  require(p >= 0.0 && p < 1.0, "dropout: rate must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform_at(i) < p ? 0.0 : keep_scale;
    out[i] *= (*mask)[i];
  }
  return x.tape->push(std::move(out), {x.id}, [x, mask](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*mask)[i];
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& L = logits.value();
  const std::size_t R = L.rows(), C = L.cols();
  require(targets.size() == R, "cross_entropy: one target per row required");
  auto probs = std::make_shared<std::vector<double>>(L.size());
  kernels::softmax_rows(L.data(), *probs, R, C);
  std::vector<int> tgt(targets.begin(), targets.end());
  double loss = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    require(tgt[r] >= 0 && static_cast<std::size_t>(tgt[r]) < C, "cross_entropy: target out of range");
    // log-softmax directly from logits to keep saturated rows exact.
    const double* row = L.data().data() + r * C;
    const double mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
    loss += mx + std::log(z) - row[tgt[r]];
  }
  loss /= static_cast<double>(R);
  return logits.tape->push(Tensor({1}, {loss}), {logits.id},
                           [logits, probs, tgt = std::move(tgt), R, C](Tape& t, const Tensor& g) {
                             Tensor& dl = t.grad_slot(logits.id);
                             const double s = g[0] / static_cast<double>(R);
                             for (std::size_t r = 0; r < R; ++r) {
                               for (std::size_t c = 0; c < C; ++c) dl[r * C + c] += s * (*probs)[r * C + c];
                               dl[r * C + static_cast<std::size_t>(tgt[r])] -= s;
                             }
                           });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape->push(Tensor({1}, {s}), {x.id}, [x](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_slot(x.id);
    for (double& v : dx.values()) v += g[0];
  });
}

RopeCache::RopeCache(std::size_t positions_, std::size_t head_dim_, double base)
    : positions(positions_), head_dim(head_dim_) {
  require(head_dim % 2 == 0, "rope: head_dim must be even");
  const std::size_t pairs = head_dim / 2;
  cos.resize(positions * pairs);
  sin.resize(positions * pairs);
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t j = 0; j < pairs; ++j) {
      const double freq = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(head_dim));
      const double angle = static_cast<double>(p) * freq;
      cos[p * pairs + j] = std::cos(angle);
      sin[p * pairs + j] = std::sin(angle);
    }
}

Var rope(Var x, std::size_t heads, std::size_t seq_len, const RopeCache& cache) {
  const Tensor& X = x.value();
  const std::size_t R = X.rows(), C = X.cols();
  const std::size_t D = cache.head_dim, pairs = D / 2;
  require(heads * D == C, "rope: width must equal heads * head_dim");
  require(seq_len <= cache.positions && R % seq_len == 0, "rope: cache too short or ragged windows");
  Tensor out(X.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t pos = r % seq_len;
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t j = 0; j < pairs; ++j) {
        const double c = cache.cos[pos * pairs + j], s = cache.sin[pos * pairs + j];
        const std::size_t i0 = r * C + h * D + 2 * j;
        const double x0 = X[i0], x1 = X[i0 + 1];
        out[i0] = x0 * c - x1 * s;
        out[i0 + 1] = x0 * s + x1 * c;
      }
  }
  const RopeCache* tables = &cache;
  return x.tape->push(std::move(out), {x.id}, [x, heads, seq_len, D, C, R, pairs, tables](Tape& t, const Tensor& g) {
    Tensor& dx = t.grad_slot(x.id);
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t pos = r % seq_len;
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < pairs; ++j) {
          const double c = tables->cos[pos * pairs + j], s = tables->sin[pos * pairs + j];
          const std::size_t i0 = r * C + h * D + 2 * j;
          dx[i0] += g[i0] * c + g[i0 + 1] * s;
          dx[i0 + 1] += -g[i0] * s + g[i0 + 1] * c;
        }
    }
  });
}

Var causal_attention(Var q, Var k, Var v, const AttentionOptions& opt) {
  const Tensor& Q = q.value();
  require(Q.shape() == k.value().shape() && Q.shape() == v.value().shape(), "causal_attention: q/k/v shape mismatch");
  require(opt.heads > 0 && Q.cols() % opt.heads == 0, "causal_attention: width not divisible by heads");
  require(opt.seq_len > 0 && Q.rows() % opt.seq_len == 0, "causal_attention: rows not a multiple of seq_len");
  kernels::AttentionShape shape{Q.rows() / opt.seq_len, opt.seq_len, opt.heads, Q.cols() / opt.heads};
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(shape.head_dim));

  auto keep = std::make_shared<std::vector<double>>();
  if (opt.training && opt.dropout > 0.0) {
    require(opt.dropout < 1.0, "causal_attention: dropout must be < 1");
    keep->resize(shape.weight_count());
    const double ks = 1.0 / (1.0 - opt.dropout);
    for (std::size_t i = 0; i < keep->size(); ++i) (*keep)[i] = opt.rng.uniform_at(i) < opt.dropout ? 0.0 : ks;
  }
  auto probs = std::make_shared<std::vector<double>>(shape.weight_count());
  Tensor out(Q.shape());
  kernels::attention_forward(Q.data(), k.value().data(), v.value().data(), shape, score_scale, *keep, *probs,
                             out.data());
  return q.tape->push(std::move(out), {q.id, k.id, v.id},
                      [q, k, v, shape, score_scale, keep, probs](Tape& t, const Tensor& g) {
                        // All three slots are materialised; unused ones are cheap at these sizes.
                        kernels::attention_backward(t.value(q.id).data(), t.value(k.id).data(),
                                                    t.value(v.id).data(), shape, score_scale, *keep, *probs,
                                                    g.data(), t.grad_slot(q.id).data(), t.grad_slot(k.id).data(),
                                                    t.grad_slot(v.id).data());
                      });
}

}  // namespace ad
}  // namespace pidaudit
