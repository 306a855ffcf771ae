#pragma once

// Brute-force references used only by the tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "pidaudit/distribution.hpp"
#include "pidaudit/rng.hpp"

namespace oracle {

/// Binary target with two binary sources, given as p(y) and
/// a[y] = p(x1 = 1 | y), b[y] = p(x2 = 1 | y).
struct BinarySystem {
  std::array<double, 2> py{};
  std::array<double, 2> a{};
  std::array<double, 2> b{};

  [[nodiscard]] std::vector<pidaudit::JointDistribution> joints() const {
    return {pidaudit::JointDistribution(2, 2, {py[0] * (1 - a[0]), py[1] * (1 - a[1]), py[0] * a[0], py[1] * a[1]}),
            pidaudit::JointDistribution(2, 2, {py[0] * (1 - b[0]), py[1] * (1 - b[1]), py[0] * b[0], py[1] * b[1]})};
  }
};

inline double plogp_ratio(double p, double q) { return p > 0.0 ? p * std::log2(p / q) : 0.0; }

/// I(Q; Y) in bits when Q = (x1, x2) is coupled per target value with
/// t[y] = r(1, 1 | y).
inline double coupled_information(const BinarySystem& s, const std::array<double, 2>& t) {
  double r[2][4];
  for (int y = 0; y < 2; ++y) {
    r[y][3] = t[y];
    r[y][2] = s.a[y] - t[y];
    r[y][1] = s.b[y] - t[y];
    r[y][0] = 1.0 - s.a[y] - s.b[y] + t[y];
  }
  double info = 0.0;
  for (int q = 0; q < 4; ++q) {
    const double pq = s.py[0] * std::max(0.0, r[0][q]) + s.py[1] * std::max(0.0, r[1][q]);
    for (int y = 0; y < 2; ++y) info += s.py[y] * plogp_ratio(std::max(0.0, r[y][q]), pq);
  }
  return info;
}

/// Union information by exhaustive search over couplings: a mesh of step
/// 0.02 on each t[y] (endpoints included), then repeated local zooms around
/// the best mesh point. I(Q;Y) is convex in the coupling, so the refined
/// minimum converges on the global one.
inline double grid_union(const BinarySystem& s, double step = 0.02, int zooms = 6) {
  std::array<double, 2> lo{}, hi{};
  for (int y = 0; y < 2; ++y) {
    lo[y] = std::max(0.0, s.a[y] + s.b[y] - 1.0);
    hi[y] = std::min(s.a[y], s.b[y]);
  }
  auto mesh = [&](const std::array<double, 2>& from, const std::array<double, 2>& to, double h,
                  std::array<double, 2>& best_t) {
    double best = INFINITY;
    std::vector<double> g0, g1;
    for (double v = from[0]; v < to[0]; v += h) g0.push_back(v);
    g0.push_back(to[0]);
    for (double v = from[1]; v < to[1]; v += h) g1.push_back(v);
    g1.push_back(to[1]);
    for (double t0 : g0)
      for (double t1 : g1) {
        const double v = coupled_information(s, {t0, t1});
        if (v < best) {
          best = v;
          best_t = {t0, t1};
        }
      }
    return best;
  };
  std::array<double, 2> t{};
  double best = mesh(lo, hi, step, t);
  double h = step;
  for (int z = 0; z < zooms; ++z) {
    std::array<double, 2> from{}, to{};
    for (int y = 0; y < 2; ++y) {
      from[y] = std::max(lo[y], t[y] - h);
      to[y] = std::min(hi[y], t[y] + h);
    }
    h /= 10.0;
    best = std::min(best, mesh(from, to, h, t));
  }
  return best;
}

inline BinarySystem random_binary_system(pidaudit::CounterRng& rng) {
  // Draw a full joint p(x1, x2, y) and keep its pairwise marginals.
  double p[2][2][2];
  double total = 0.0;
  for (auto& u : p)
    for (auto& v : u)
      for (double& w : v) total += (w = std::exp(1.5 * rng.normal()));
  BinarySystem s;
  for (int y = 0; y < 2; ++y) {
    double py = 0.0, a = 0.0, b = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double w = p[i][j][y] / total;
        py += w;
        if (i == 1) a += w;
        if (j == 1) b += w;
      }
    s.py[y] = py;
    s.a[y] = a / py;
    s.b[y] = b / py;
  }
  return s;
}

}  // namespace oracle
