#include "pidaudit/selftest.hpp"

#include <cmath>
#include <cstdio>

#include "pidaudit/pid.hpp"
#include "pidaudit/rng.hpp"
#include "pidaudit/transformer.hpp"

namespace pidaudit::selftest {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double union_of(const std::vector<JointDistribution>& joints) {
  const auto ch = SourceChannelSet::from_joints(joints);
  return union_information(ch, UnionSolverConfig{}).value;
}

}  // namespace

GradCheckResult tiny_model_gradcheck(std::uint64_t seed) {
  ModelConfig mc;
  mc.embed_dim = 16;
  mc.heads = 2;
  mc.layers = 2;
  mc.context = 8;
  mc.input_dim = 3;
  mc.out_bins = 8;
  mc.dropout = 0.0;
  Model model(mc, seed);
  // Larger-than-default weights keep the attention pattern away from uniform.
  CounterRng rng = CounterRng(seed).split(99);
  for (auto& p : model.params())
    if (p.name.find("ln") == std::string::npos)
      for (double& v : p.value.values()) v += 0.3 * rng.normal();

  const std::size_t windows = 2, N = 8;
  Tensor inputs({windows * N, 3});
  for (double& v : inputs.values()) v = rng.normal();
  std::vector<int> labels(windows * N);
  for (int& l : labels) l = static_cast<int>(rng.below(8));

  std::vector<Parameter*> params;
  for (auto& p : model.params()) params.push_back(&p);
  const LossBuilder loss = [&](Tape& tape) {
    const auto vars = model.bind(tape);
    return ad::cross_entropy(forward(tape, vars, model, inputs, N), labels);
  };
  return grad_check(loss, params);
}

double rope_shift_error(int draws, std::uint64_t seed) {
  constexpr std::size_t D = 8, P = 256;
  const ad::RopeCache cache(P, D, 10000.0);
  CounterRng rng(seed);
  auto rotated = [&](const std::vector<double>& v) {
    Tensor x({P, D});
    for (std::size_t r = 0; r < P; ++r)
      for (std::size_t c = 0; c < D; ++c) x.at(r, c) = v[c];
    Tape tape(false);
    return ad::rope(tape.constant(std::move(x)), 1, P, cache).value();
  };
  double worst = 0.0;
  for (int d = 0; d < draws; ++d) {
    std::vector<double> q(D), k(D);
    for (auto& v : q) v = rng.normal();
    for (auto& v : k) v = rng.normal();
    const std::size_t s = rng.below(P / 2);
    const std::size_t m = rng.below(P - s), n = rng.below(P - s);
    const Tensor rq = rotated(q), rk = rotated(k);
    double a = 0.0, b = 0.0;
    for (std::size_t c = 0; c < D; ++c) {
      a += rq.at(m, c) * rk.at(n, c);
      b += rq.at(m + s, c) * rk.at(n + s, c);
    }
    worst = std::max(worst, std::abs(a - b));
  }
  return worst;
}

double quantizer_roundtrip_error(const QuantizerSpec& spec, int draws, std::uint64_t seed) {
  CounterRng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double x = spec.lo + (spec.hi - spec.lo) * rng.uniform();
    if (x <= spec.lo) continue;
    worst = std::max(worst, std::abs(dequantize(quantize(x, spec), spec) - x));
  }
  return worst;
}

bool quantizer_clamps(const QuantizerSpec& spec) {
  const int last = spec.bins - 1;
  return quantize(spec.lo, spec) == 0 && quantize(spec.lo - 1.0, spec) == 0 &&
         quantize(-1e9, spec) == 0 && quantize(spec.hi, spec) == last && quantize(spec.hi + 1.0, spec) == last &&
         quantize(1e9, spec) == last && quantize(spec.lo + 0.5 * spec.width(), spec) == 0 &&
         quantize(spec.hi - 0.5 * spec.width(), spec) == last;
}

double copy_system_union() {
  const JointDistribution copy(2, 2, {0.5, 0.0, 0.0, 0.5});
  return union_of({copy, copy});
}

double xor_system_union() {
  // Y = X1 xor X2 with independent uniform inputs: each source alone is
  // independent of Y.
  const JointDistribution indep(2, 2, {0.25, 0.25, 0.25, 0.25});
  return union_of({indep, indep});
}

std::vector<Check> run_all() {
  std::vector<Check> out;
  const auto gc = tiny_model_gradcheck();
  out.push_back({"gradcheck", gc.max_rel_error <= 1e-4,
                 fmt("max rel error %.3g", gc.max_rel_error) + " at " + gc.worst_param});
  const double copy = copy_system_union();
  out.push_back({"pid_copy", std::abs(copy - 1.0) <= 1e-3, fmt("U = %.6f bits", copy)});
  const double x = xor_system_union();
  out.push_back({"pid_xor", std::abs(x) <= 1e-3, fmt("U = %.6f bits", x)});
  const double rope = rope_shift_error();
  out.push_back({"rope_shift", rope <= 1e-9, fmt("max deviation %.3g", rope)});
  const QuantizerSpec q;
  const double qe = quantizer_roundtrip_error(q);
  out.push_back({"quantizer", qe <= 0.5 * q.width() + 1e-12 && quantizer_clamps(q), fmt("max error %.6f", qe)});
  return out;
}

}  // namespace pidaudit::selftest
