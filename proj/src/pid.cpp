#include "pidaudit/pid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "pidaudit/error.hpp"
#include "pidaudit/kernels.hpp"
#include "pidaudit/rng.hpp"

namespace pidaudit {
namespace {

constexpr double kLog2e = std::numbers::log2e;

// p log2(p / q) with the 0 log 0 = 0 convention.
double plogq(double p, double q) { return p > 0.0 ? p * std::log2(p / q) : 0.0; }

// IPF stops once every source marginal is within this of its target.
constexpr double kIpfTolerance = 1e-13;
constexpr int kIpfMaxSweeps = 100;

struct RestartOutcome {
  double value = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

// Coupling problem restricted to the y values with p(y) > 0.
struct CouplingProblem {
  std::vector<double> py;                             // [Y]
  std::vector<std::size_t> sizes;                     // |X_i|
  std::vector<std::vector<std::vector<double>>> kappa;  // [Y][i][x_i]
  std::vector<std::vector<int>> digits;               // [i][x]
  std::vector<char> feasible;                         // [x]
  std::size_t states = 0;

  [[nodiscard]] std::size_t ny() const { return py.size(); }
  [[nodiscard]] std::size_t k() const { return sizes.size(); }
};

CouplingProblem make_problem(const SourceChannelSet& set) {
  CouplingProblem pb;
  std::vector<std::size_t> ys;
  for (std::size_t y = 0; y < set.py.size(); ++y)
    if (set.py[y] > 0.0) ys.push_back(y);
  for (auto y : ys) pb.py.push_back(set.py[y]);
  pb.states = 1;
  for (const auto& ch : set.channels) {
    pb.sizes.push_back(ch.nx);
    pb.states *= ch.nx;
  }
  pb.kappa.assign(ys.size(), {});
  for (std::size_t yi = 0; yi < ys.size(); ++yi)
    for (const auto& ch : set.channels) {
      std::vector<double> col(ch.nx);
      for (std::size_t x = 0; x < ch.nx; ++x) col[x] = ch(x, ys[yi]);
      pb.kappa[yi].push_back(std::move(col));
    }
  pb.digits.assign(pb.k(), std::vector<int>(pb.states));
  for (std::size_t x = 0; x < pb.states; ++x) {
    std::size_t rem = x;
    for (std::size_t i = pb.k(); i-- > 0;) {
      pb.digits[i][x] = static_cast<int>(rem % pb.sizes[i]);
      rem /= pb.sizes[i];
    }
  }
  pb.feasible.assign(pb.states, 0);
  for (std::size_t yi = 0; yi < pb.ny(); ++yi)
    for (std::size_t x = 0; x < pb.states; ++x) {
      bool pos = true;
      for (std::size_t i = 0; i < pb.k() && pos; ++i) pos = pb.kappa[yi][i][static_cast<std::size_t>(pb.digits[i][x])] > 0.0;
      if (pos) pb.feasible[x] = 1;
    }
  return pb;
}

// I-projection of s onto {r : marginal_i(r) = kappa_i} by iterative
// proportional fitting. `factors` carries the per-source scalings between
// calls; r = s * prod_i factors_i(x_i) stays in the projection's exponential
// family, so warm-starting from the previous factors converges to the same
// point. Returns the final marginal residual.
double ipf_project(const CouplingProblem& pb, std::size_t yi, std::span<const double> s,
                   std::vector<std::vector<double>>& factors, std::vector<double>& r) {
  const std::size_t M = pb.states, K = pb.k();
  std::vector<std::vector<double>> marg(K);
  for (std::size_t i = 0; i < K; ++i) marg[i].assign(pb.sizes[i], 0.0);
  auto rebuild = [&] {
    for (std::size_t x = 0; x < M; ++x) {
      double v = s[x];
      for (std::size_t i = 0; i < K && v != 0.0; ++i) v *= factors[i][static_cast<std::size_t>(pb.digits[i][x])];
      r[x] = v;
    }
  };
  rebuild();
  double residual = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < kIpfMaxSweeps; ++sweep) {
    residual = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
      auto& m = marg[i];
      std::fill(m.begin(), m.end(), 0.0);
      for (std::size_t x = 0; x < M; ++x) m[static_cast<std::size_t>(pb.digits[i][x])] += r[x];
      const auto& target = pb.kappa[yi][i];
      for (std::size_t a = 0; a < m.size(); ++a) {
        residual = std::max(residual, std::abs(m[a] - target[a]));
        m[a] = m[a] > 0.0 ? target[a] / m[a] : 0.0;
        factors[i][a] *= m[a];
      }
      for (std::size_t x = 0; x < M; ++x) r[x] *= m[static_cast<std::size_t>(pb.digits[i][x])];
    }
    if (residual < kIpfTolerance) break;
  }
  // Residual after the final update.
  double after = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    std::vector<double> m(pb.sizes[i], 0.0);
    for (std::size_t x = 0; x < M; ++x) m[static_cast<std::size_t>(pb.digits[i][x])] += r[x];
    for (std::size_t a = 0; a < m.size(); ++a) after = std::max(after, std::abs(m[a] - pb.kappa[yi][i][a]));
  }
  // Keep the factors bounded; rescaling does not change r once renormalised by IPF.
  for (auto& f : factors) {
    const double mx = *std::max_element(f.begin(), f.end());
    if (mx > 1e100 || (mx > 0.0 && mx < 1e-100))
      for (double& v : f) v /= mx;
  }
  return after;
}

struct MapEval {
  double value = 0.0;  // I(X; Y) in bits under the projected couplings
  double gap = std::numeric_limits<double>::infinity();
  double residual = 0.0;
};

// One alternating-minimisation step: r_y <- I-projection of s, then
// s_next <- sum_y p(y) r_y.
MapEval apply_map(const CouplingProblem& pb, std::span<const double> s,
                  std::vector<std::vector<std::vector<double>>>& factors, std::vector<std::vector<double>>& r,
                  std::vector<double>& s_next) {
  const std::size_t M = pb.states, Y = pb.ny();
  MapEval e;
  double objective_at_s = 0.0;  // G(s) = sum_y p(y) KL(r_y || s)
  for (std::size_t yi = 0; yi < Y; ++yi) {
    e.residual = std::max(e.residual, ipf_project(pb, yi, s, factors[yi], r[yi]));
    double kl = 0.0;
    for (std::size_t x = 0; x < M; ++x) kl += plogq(r[yi][x], s[x]);
    objective_at_s += pb.py[yi] * kl;
  }
  std::fill(s_next.begin(), s_next.end(), 0.0);
  for (std::size_t yi = 0; yi < Y; ++yi)
    for (std::size_t x = 0; x < M; ++x) s_next[x] += pb.py[yi] * r[yi][x];
  for (std::size_t yi = 0; yi < Y; ++yi) {
    double kl = 0.0;
    for (std::size_t x = 0; x < M; ++x) kl += plogq(r[yi][x], s_next[x]);
    e.value += pb.py[yi] * kl;
  }
  // Convexity of G gives G* >= G(s) + 1 - max_x s_next(x)/s(x) (nats) when
  // s > 0 on every feasible cell.
  bool positive = true;
  double rho = 0.0;
  for (std::size_t x = 0; x < M; ++x)
    if (pb.feasible[x]) {
      if (!(s[x] > 0.0)) positive = false;
      else rho = std::max(rho, s_next[x] / s[x]);
    }
  if (positive) e.gap = std::max(0.0, e.value - (objective_at_s - (rho - 1.0) * kLog2e));
  return e;
}

// Alternating minimisation accelerated by squared extrapolation of the
// fixed-point map s -> T(s). An extrapolated point is kept only if the step
// that follows it does not increase the objective.
RestartOutcome run_restart(const CouplingProblem& pb, std::vector<double> s, const UnionSolverConfig& cfg) {
  const std::size_t M = pb.states, Y = pb.ny();
  std::vector<std::vector<std::vector<double>>> factors(Y);
  for (auto& f : factors)
    for (auto n : pb.sizes) f.emplace_back(n, 1.0);
  std::vector<std::vector<double>> r(Y, std::vector<double>(M, 0.0));
  std::vector<double> s1(M), s2(M), s3(M), trial(M);

  RestartOutcome out;
  double prev_value = std::numeric_limits<double>::infinity();
  // Records an evaluation; true once converged.
  auto record = [&](const MapEval& e) {
    out.value = e.value;
    out.gap = std::isfinite(e.gap) ? e.gap : std::abs(prev_value - e.value);
    out.residual = e.residual;
    ++out.iterations;
    const bool converged =
        std::isfinite(e.gap) ? e.gap <= cfg.tolerance : std::abs(prev_value - e.value) <= 1e-3 * cfg.tolerance;
    prev_value = e.value;
    return converged && e.residual <= cfg.tolerance;
  };

  while (out.iterations < cfg.max_iterations) {
    const MapEval e1 = apply_map(pb, s, factors, r, s1);
    if (record(e1) || out.iterations >= cfg.max_iterations) break;
    const MapEval e2 = apply_map(pb, s1, factors, r, s2);
    if (record(e2) || out.iterations >= cfg.max_iterations) break;

    double rr = 0.0, vv = 0.0;
    for (std::size_t x = 0; x < M; ++x) {
      const double d1 = s1[x] - s[x], d2 = s2[x] - 2.0 * s1[x] + s[x];
      rr += d1 * d1;
      vv += d2 * d2;
    }
    if (!(vv > 0.0)) {
      s.swap(s2);
      continue;
    }
    double alpha = std::min(-1.0, -std::sqrt(rr / vv));
    bool ok = false;
    for (int shrink = 0; shrink < 30 && !ok; ++shrink) {
      ok = true;
      double z = 0.0;
      for (std::size_t x = 0; x < M; ++x) {
        const double d1 = s1[x] - s[x], d2 = s2[x] - 2.0 * s1[x] + s[x];
        trial[x] = s[x] - 2.0 * alpha * d1 + alpha * alpha * d2;
        if (pb.feasible[x] && !(trial[x] > 0.0)) ok = false;
        if (!pb.feasible[x]) trial[x] = 0.0;
        z += trial[x];
      }
      if (ok)
        for (double& v : trial) v /= z;
      else
        alpha = 0.5 * (alpha - 1.0);
    }
    if (!ok || alpha == -1.0) {
      s.swap(s2);
      continue;
    }
    // Stabilising step from the extrapolated point.
    auto saved = factors;
    const MapEval e3 = apply_map(pb, trial, factors, r, s3);
    if (e3.value <= e2.value && e3.residual <= std::max(cfg.tolerance, e2.residual)) {
      if (record(e3)) break;
      s.swap(s3);
    } else {
      ++out.iterations;
      factors = std::move(saved);
      s.swap(s2);
    }
  }
  return out;
}

}  // namespace

const char* to_string(UnionMethod m) { return m == UnionMethod::kExact ? "exact" : "surrogate"; }

double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

double entropy(const DiscreteDistribution& d) { return entropy_bits(d.probs()); }

double mutual_information(const JointDistribution& j) {
  const auto px = j.marginal_x();
  const auto py = j.marginal_y();
  double mi = 0.0;
  for (std::size_t x = 0; x < j.nx(); ++x)
    for (std::size_t y = 0; y < j.ny(); ++y) {
      const double p = j(x, y);
      if (p > 0.0) mi += p * std::log2(p / (px[x] * py[y]));
    }
  return mi;
}

std::size_t tuple_index(std::span<const int> symbols, std::span<const std::size_t> sizes) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) idx = idx * sizes[i] + static_cast<std::size_t>(symbols[i]);
  return idx;
}

SourceChannelSet SourceChannelSet::from_joints(std::span<const JointDistribution> joints) {
  if (joints.empty()) throw std::invalid_argument("from_joints: no sources");
  SourceChannelSet set;
  set.py = joints[0].marginal_y();
  for (const auto& j : joints) {
    const auto py = j.marginal_y();
    if (py.size() != set.py.size()) throw std::invalid_argument("from_joints: target alphabets differ");
    for (std::size_t y = 0; y < py.size(); ++y)
      if (std::abs(py[y] - set.py[y]) > 1e-9) throw std::invalid_argument("from_joints: target marginals differ");
    Channel ch{j.nx(), j.ny(), std::vector<double>(j.nx() * j.ny())};
    for (std::size_t y = 0; y < j.ny(); ++y)
      for (std::size_t x = 0; x < j.nx(); ++x)
        ch.p[x * j.ny() + y] = set.py[y] > 0.0 ? j(x, y) / set.py[y] : 1.0 / static_cast<double>(j.nx());
    set.channels.push_back(std::move(ch));
  }
  return set;
}

void SourceChannelSet::validate() const {
  if (channels.empty()) throw std::invalid_argument("channel set: no sources");
  double mass = 0.0;
  for (double v : py) {
    if (!(v >= 0.0)) throw std::invalid_argument("channel set: negative p(y)");
    mass += v;
  }
  if (std::abs(mass - 1.0) > 1e-9) throw std::invalid_argument("channel set: p(y) does not sum to 1");
  for (const auto& ch : channels) {
    if (ch.ny != py.size() || ch.p.size() != ch.nx * ch.ny) throw std::invalid_argument("channel set: shape mismatch");
    for (std::size_t y = 0; y < ch.ny; ++y) {
      if (py[y] <= 0.0) continue;
      double col = 0.0;
      for (std::size_t x = 0; x < ch.nx; ++x) {
        if (!(ch(x, y) >= 0.0)) throw std::invalid_argument("channel set: negative conditional");
        col += ch(x, y);
      }
      if (std::abs(col - 1.0) > 1e-9) throw std::invalid_argument("channel set: conditional not stochastic");
    }
  }
}

double SourceChannelSet::source_information(std::size_t i) const {
  const Channel& ch = channels.at(i);
  std::vector<double> px(ch.nx, 0.0);
  for (std::size_t x = 0; x < ch.nx; ++x)
    for (std::size_t y = 0; y < ch.ny; ++y) px[x] += py[y] * ch(x, y);
  double mi = 0.0;
  for (std::size_t y = 0; y < ch.ny; ++y) {
    if (py[y] <= 0.0) continue;
    for (std::size_t x = 0; x < ch.nx; ++x) mi += py[y] * plogq(ch(x, y), px[x]);
  }
  return mi;
}

UnionResult union_information(const SourceChannelSet& channels, const UnionSolverConfig& cfg,
                              const JointDistribution* joint, const JointDistribution* warm_start) {
  channels.validate();
  if (!(cfg.tolerance > 0.0)) throw ConfigError("union solver: tolerance must be > 0");
  UnionResult res;
  res.method = cfg.method;

  if (cfg.method == UnionMethod::kSurrogate) {
    if (!joint) throw ConfigError("union solver: surrogate method needs the full joint");
    const auto py = joint->marginal_y();
    for (std::size_t y = 0; y < py.size(); ++y)
      if (y >= channels.py.size() || std::abs(py[y] - channels.py[y]) > 1e-9)
        throw std::invalid_argument("union solver: joint target marginal disagrees with channels");
    res.value = mutual_information(*joint);
    res.channel_states = joint->nx();
    return res;
  }

  if (cfg.restarts < 1 || cfg.max_iterations < 1) throw ConfigError("union solver: restarts and iterations must be >= 1");
  std::size_t states = 1;
  for (const auto& ch : channels.channels) {
    states *= ch.nx;
    if (states > cfg.max_channel_states) {
      throw ConfigError("union solver: exact method needs " + std::to_string(states) +
                        "+ coupling states, budget is " + std::to_string(cfg.max_channel_states) +
                        " (use the surrogate method or coarser sources)");
    }
  }
  const CouplingProblem pb = make_problem(channels);
  res.channel_states = pb.states;

  // Initial reference marginals: optional warm start, product of source
  // marginals, then random positive draws.
  std::vector<std::vector<double>> inits;
  if (warm_start) {
    if (warm_start->nx() != pb.states) throw std::invalid_argument("union solver: warm start has wrong alphabet");
    inits.push_back(warm_start->marginal_x());
  }
  {
    std::vector<std::vector<double>> px(pb.k());
    for (std::size_t i = 0; i < pb.k(); ++i) {
      px[i].assign(pb.sizes[i], 0.0);
      for (std::size_t yi = 0; yi < pb.ny(); ++yi)
        for (std::size_t a = 0; a < pb.sizes[i]; ++a) px[i][a] += pb.py[yi] * pb.kappa[yi][i][a];
    }
    std::vector<double> s(pb.states);
    for (std::size_t x = 0; x < pb.states; ++x) {
      double v = pb.feasible[x] ? 1.0 : 0.0;
      for (std::size_t i = 0; i < pb.k(); ++i) v *= px[i][static_cast<std::size_t>(pb.digits[i][x])];
      s[x] = v;
    }
    inits.push_back(std::move(s));
  }
  const CounterRng base(cfg.seed);
  for (int rs = 1; rs < cfg.restarts; ++rs) {
    const CounterRng g = base.split(static_cast<std::uint64_t>(rs));
    std::vector<double> s(pb.states);
    for (std::size_t x = 0; x < pb.states; ++x) s[x] = pb.feasible[x] ? std::exp(2.0 * g.normal_at(x)) : 0.0;
    inits.push_back(std::move(s));
  }
  for (auto& s : inits) {
    double z = 0.0;
    for (double v : s) z += v;
    for (double& v : s) v /= z;
  }

  std::vector<RestartOutcome> outcomes(inits.size());
  const auto n = static_cast<std::ptrdiff_t>(inits.size());
  const int nt = kernels::max_threads();
#pragma omp parallel for schedule(dynamic) if (nt > 1) num_threads(nt)
  for (std::ptrdiff_t i = 0; i < n; ++i) outcomes[static_cast<std::size_t>(i)] = run_restart(pb, inits[static_cast<std::size_t>(i)], cfg);

  // Deterministic reduction: smallest value among feasible runs, lowest index on ties.
  int best = -1;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].residual > cfg.tolerance) continue;
    if (best < 0 || outcomes[i].value < outcomes[static_cast<std::size_t>(best)].value) best = static_cast<int>(i);
  }
  if (best < 0) {
    std::ostringstream msg;
    msg << "union solver: constraint residual above tolerance after all restarts (best residual ";
    double r = std::numeric_limits<double>::infinity();
    for (const auto& o : outcomes) r = std::min(r, o.residual);
    msg << r << ")";
    throw NumericalError(msg.str());
  }
  const auto& o = outcomes[static_cast<std::size_t>(best)];
  res.value = std::max(0.0, o.value);
  res.iterations = o.iterations;
  res.gap_estimate = o.gap;
  res.residual = o.residual;
  res.best_restart = best;
  return res;
}

double excluded_information(double union_info, double source_info) {
  const double e = union_info - source_info;
  if (e >= 0.0) return e;
  if (e >= -1e-9) return 0.0;
  std::ostringstream msg;
  msg << "excluded information " << e << " bits is negative beyond tolerance (solver inconsistency)";
  throw NumericalError(msg.str());
}

PidResult pid_report(const SourceChannelSet& channels, const JointDistribution* joint, const UnionSolverConfig& cfg,
                     const JointDistribution* warm_start) {
  PidResult out;
  for (std::size_t i = 0; i < channels.channels.size(); ++i) out.mutual_info.push_back(channels.source_information(i));
  out.solver = union_information(channels, cfg, joint, warm_start);
  out.union_info = out.solver.value;
  const double max_i = *std::max_element(out.mutual_info.begin(), out.mutual_info.end());
  if (out.union_info < max_i - 1e-6) {
    std::ostringstream msg;
    msg << "PID invariant violated: U=" << out.union_info << " < max_i I_i=" << max_i;
    throw NumericalError(msg.str());
  }
  if (joint) {
    out.joint_info = mutual_information(*joint);
    if (out.union_info > *out.joint_info + 1e-6) {
      std::ostringstream msg;
      msg << "PID invariant violated: U=" << out.union_info << " > I(joint;Y)=" << *out.joint_info;
      throw NumericalError(msg.str());
    }
  }
  for (double mi : out.mutual_info) out.excluded.push_back(excluded_information(out.union_info, mi));
  return out;
}

}  // namespace pidaudit
