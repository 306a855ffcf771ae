#include <cmath>
#include <vector>

#include "doctest.h"
#include "pidaudit/kernels.hpp"
#include "pidaudit/rng.hpp"

using namespace pidaudit;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Runs f once with one thread and once with four.
template <class F>
std::pair<std::vector<double>, std::vector<double>> serial_and_parallel(F f) {
  const int saved = kernels::max_threads();
  kernels::set_max_threads(1);
  auto serial = f();
  kernels::set_max_threads(4);
  auto parallel = f();
  kernels::set_max_threads(saved);
  return {serial, parallel};
}

}  // namespace

TEST_CASE("matmul variants agree with the reference") {
  const std::size_t m = 37, k = 53, n = 41;
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<double> ref(m * n), c(m * n);
  kernels::reference::matmul(a, b, ref, m, k, n);
  kernels::matmul(a, b, c, m, k, n);
  CHECK(max_abs_diff(ref, c) <= 1e-12);

  // B^T stored as [n x k]
  std::vector<double> bt(n * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
  kernels::matmul_nt(a, bt, c, m, k, n);
  CHECK(max_abs_diff(ref, c) <= 1e-12);

  // A^T stored as [k x m]
  std::vector<double> at(k * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
  kernels::matmul_tn(at, b, c, m, k, n);
  CHECK(max_abs_diff(ref, c) <= 1e-12);

  std::vector<double> twice = ref;
  kernels::matmul(a, b, twice, m, k, n, true);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(twice[i] == doctest::Approx(2.0 * ref[i]));
}

TEST_CASE("parallel matmul is bitwise identical to serial") {
  const std::size_t m = 128, k = 96, n = 80;
  const auto a = random_values(m * k, 3), b = random_values(k * n, 4), bt = random_values(n * k, 5),
             at = random_values(k * m, 6);
  auto [s1, p1] = serial_and_parallel([&] {
    std::vector<double> c(m * n);
    kernels::matmul(a, b, c, m, k, n);
    return c;
  });
  CHECK(s1 == p1);
  auto [s2, p2] = serial_and_parallel([&] {
    std::vector<double> c(m * n);
    kernels::matmul_nt(a, bt, c, m, k, n);
    return c;
  });
  CHECK(s2 == p2);
  auto [s3, p3] = serial_and_parallel([&] {
    std::vector<double> c(m * n);
    kernels::matmul_tn(at, b, c, m, k, n);
    return c;
  });
  CHECK(s3 == p3);
}

TEST_CASE("softmax_rows") {
  const auto x = random_values(6 * 9, 7);
  std::vector<double> y(x.size());
  kernels::softmax_rows(x, y, 6, 9);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 9; ++c) s += y[r * 9 + c];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("attention forward agrees with the reference and across threads") {
  const kernels::AttentionShape shape{.windows = 6, .seq = 24, .heads = 4, .head_dim = 8};
  const std::size_t n = shape.windows * shape.seq * shape.width();
  const auto q = random_values(n, 8), k = random_values(n, 9), v = random_values(n, 10);
  const double scale = 1.0 / std::sqrt(8.0);
  std::vector<double> ref(n);
  kernels::reference::attention_forward(q, k, v, shape, scale, ref);

  auto [serial, parallel] = serial_and_parallel([&] {
    std::vector<double> out(n), probs(shape.weight_count());
    kernels::attention_forward(q, k, v, shape, scale, {}, probs, out);
    return out;
  });
  CHECK(max_abs_diff(ref, serial) <= 1e-12);
  CHECK(serial == parallel);

  // Weights above the diagonal stay zero and rows sum to one.
  std::vector<double> out(n), probs(shape.weight_count());
  kernels::attention_forward(q, k, v, shape, scale, {}, probs, out);
  for (std::size_t u = 0; u < shape.units(); ++u)
    for (std::size_t i = 0; i < shape.seq; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < shape.seq; ++j) {
        const double p = probs[(u * shape.seq + i) * shape.seq + j];
        if (j > i) CHECK(p == 0.0);
        s += p;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("attention backward is bitwise identical across threads") {
  const kernels::AttentionShape shape{.windows = 5, .seq = 16, .heads = 2, .head_dim = 8};
  const std::size_t n = shape.windows * shape.seq * shape.width();
  const auto q = random_values(n, 11), k = random_values(n, 12), v = random_values(n, 13), dout = random_values(n, 14);
  const double scale = 0.3;
  std::vector<double> keep(shape.weight_count());
  CounterRng rng(15);
  for (auto& x : keep) x = rng.uniform() < 0.2 ? 0.0 : 1.25;
  auto [serial, parallel] = serial_and_parallel([&] {
    std::vector<double> out(n), probs(shape.weight_count()), dq(n), dk(n), dv(n);
    kernels::attention_forward(q, k, v, shape, scale, keep, probs, out);
    kernels::attention_backward(q, k, v, shape, scale, keep, probs, dout, dq, dk, dv);
    std::vector<double> all = out;
    all.insert(all.end(), dq.begin(), dq.end());
    all.insert(all.end(), dk.begin(), dk.end());
    all.insert(all.end(), dv.begin(), dv.end());
    return all;
  });
  CHECK(serial == parallel);
}
