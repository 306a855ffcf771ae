#include "pidaudit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pidaudit::kernels {
namespace {

int g_max_threads = 0;  // 0: OpenMP default

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

int thread_count(std::size_t work) {
#ifdef _OPENMP
  if (work < kParallelWork || omp_in_parallel()) return 1;
  const int avail = omp_get_max_threads();
  return g_max_threads > 0 ? std::min(avail, g_max_threads) : avail;
#else
  (void)work;
  return 1;
#endif
}

}  // namespace

void set_max_threads(int n) {
  g_max_threads = std::max(n, 0);
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int max_threads() {
#ifdef _OPENMP
  return g_max_threads > 0 ? std::min(g_max_threads, omp_get_max_threads()) : omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
  const int nt = thread_count(m * k * n);
#pragma omp parallel for schedule(static) if (nt > 1) num_threads(nt)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = C + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
  const int nt = thread_count(m * k * n);
#pragma omp parallel for schedule(static) if (nt > 1) num_threads(nt)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = B + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      C[i * n + j] = accumulate ? C[i * n + j] + s : s;
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
  const int nt = thread_count(m * k * n);
#pragma omp parallel for schedule(static) if (nt > 1) num_threads(nt)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = C + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double api = A[p * m + i];
      if (api == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    const double inv = 1.0 / z;
    for (std::size_t c = 0; c < cols; ++c) o[c] *= inv;
  }
}

void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       const AttentionShape& shape, double score_scale, std::span<const double> keep,
                       std::span<double> probs, std::span<double> out) {
  const std::size_t N = shape.seq, D = shape.head_dim, C = shape.width(), H = shape.heads;
  const auto units = static_cast<std::ptrdiff_t>(shape.units());
  const int nt = thread_count(shape.units() * N * N * D);
#pragma omp parallel for schedule(static) if (nt > 1) num_threads(nt)
  for (std::ptrdiff_t u = 0; u < units; ++u) {
    const std::size_t w = static_cast<std::size_t>(u) / H;
    const std::size_t h = static_cast<std::size_t>(u) % H;
    const std::size_t base = w * N;
    double* P = probs.data() + static_cast<std::size_t>(u) * N * N;
    const double* keep_u = keep.empty() ? nullptr : keep.data() + static_cast<std::size_t>(u) * N * N;
    for (std::size_t i = 0; i < N; ++i) {
      const double* qi = q.data() + (base + i) * C + h * D;
      double* prow = P + i * N;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        const double* kj = k.data() + (base + j) * C + h * D;
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) s += qi[d] * kj[d];
        prow[j] = s * score_scale;
        mx = std::max(mx, prow[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        z += prow[j];
      }
      const double inv = 1.0 / z;
      for (std::size_t j = 0; j <= i; ++j) prow[j] *= inv;
      for (std::size_t j = i + 1; j < N; ++j) prow[j] = 0.0;

      double* oi = out.data() + (base + i) * C + h * D;
      std::fill(oi, oi + D, 0.0);
      for (std::size_t j = 0; j <= i; ++j) {
        const double wgt = keep_u ? prow[j] * keep_u[i * N + j] : prow[j];
        if (wgt == 0.0) continue;
        const double* vj = v.data() + (base + j) * C + h * D;
        for (std::size_t d = 0; d < D; ++d) oi[d] += wgt * vj[d];
      }
    }
  }
}

void attention_backward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                        const AttentionShape& shape, double score_scale, std::span<const double> keep,
                        std::span<const double> probs, std::span<const double> dout, std::span<double> dq,
                        std::span<double> dk, std::span<double> dv) {
  const std::size_t N = shape.seq, D = shape.head_dim, C = shape.width(), H = shape.heads;
  const auto units = static_cast<std::ptrdiff_t>(shape.units());
  const int nt = thread_count(shape.units() * N * N * D);
#pragma omp parallel for schedule(static) if (nt > 1) num_threads(nt)
  for (std::ptrdiff_t u = 0; u < units; ++u) {
    const std::size_t w = static_cast<std::size_t>(u) / H;
    const std::size_t h = static_cast<std::size_t>(u) % H;
    const std::size_t base = w * N;
    const double* P = probs.data() + static_cast<std::size_t>(u) * N * N;
    const double* keep_u = keep.empty() ? nullptr : keep.data() + static_cast<std::size_t>(u) * N * N;
    std::vector<double> dp(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double* doi = dout.data() + (base + i) * C + h * D;
      const double* prow = P + i * N;
      // dV_j += w_ij dO_i ; dP_ij = keep_ij * (dO_i . V_j)
      double dot_pdp = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* vj = v.data() + (base + j) * C + h * D;
        double* dvj = dv.data() + (base + j) * C + h * D;
        const double kp = keep_u ? keep_u[i * N + j] : 1.0;
        const double wgt = prow[j] * kp;
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
          s += doi[d] * vj[d];
          dvj[d] += wgt * doi[d];
        }
        dp[j] = s * kp;
        dot_pdp += prow[j] * dp[j];
      }
      const double* qi = q.data() + (base + i) * C + h * D;
      double* dqi = dq.data() + (base + i) * C + h * D;
      for (std::size_t j = 0; j <= i; ++j) {
        const double ds = prow[j] * (dp[j] - dot_pdp) * score_scale;
        if (ds == 0.0) continue;
        const double* kj = k.data() + (base + j) * C + h * D;
        double* dkj = dk.data() + (base + j) * C + h * D;
        for (std::size_t d = 0; d < D; ++d) {
          dqi[d] += ds * kj[d];
          dkj[d] += ds * qi[d];
        }
      }
    }
  }
}

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       const AttentionShape& shape, double score_scale, std::span<double> out) {
  const std::size_t N = shape.seq, D = shape.head_dim, C = shape.width();
  std::vector<double> scores(N);
  for (std::size_t w = 0; w < shape.windows; ++w)
    for (std::size_t h = 0; h < shape.heads; ++h)
      for (std::size_t i = 0; i < N; ++i) {
        // Full row of scores with masked entries at -inf, then plain softmax.
        for (std::size_t j = 0; j < N; ++j) {
          if (j > i) {
            scores[j] = -std::numeric_limits<double>::infinity();
            continue;
          }
          double s = 0.0;
          for (std::size_t d = 0; d < D; ++d) s += q[(w * N + i) * C + h * D + d] * k[(w * N + j) * C + h * D + d];
          scores[j] = s * score_scale;
        }
        const double mx = *std::max_element(scores.begin(), scores.end());
        double z = 0.0;
        for (double& s : scores) z += (s = std::exp(s - mx));
        for (std::size_t d = 0; d < D; ++d) {
          double acc = 0.0;
          for (std::size_t j = 0; j < N; ++j) acc += scores[j] / z * v[(w * N + j) * C + h * D + d];
          out[(w * N + i) * C + h * D + d] = acc;
        }
      }
}

}  // namespace reference

}  // namespace pidaudit::kernels
