#pragma once

#include <cstddef>
#include <span>

namespace pidaudit::kernels {

// Row-major dense kernels. The OpenMP paths split work over independent
// output rows (or attention units) only, so every output element is
// accumulated in the same order regardless of thread count.

/// C[m x n] (+)= A[m x k] * B[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate = false);
/// C[m x n] (+)= A[m x k] * B[n x k]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
/// C[m x n] (+)= A[k x m]^T * B[k x n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

/// Row-wise softmax with max subtraction.
void softmax_rows(std::span<const double> x, std::span<double> out, std::size_t rows, std::size_t cols);

/// Batched causal multi-head attention over `windows` stacked sequences of
/// `seq` rows each. q/k/v/o are [windows*seq x heads*head_dim].
struct AttentionShape {
  std::size_t windows = 1;
  std::size_t seq = 1;
  std::size_t heads = 1;
  std::size_t head_dim = 1;

  [[nodiscard]] std::size_t width() const { return heads * head_dim; }
  [[nodiscard]] std::size_t units() const { return windows * heads; }
  [[nodiscard]] std::size_t weight_count() const { return units() * seq * seq; }
};

/// probs receives the pre-dropout attention weights [units x seq x seq]
/// (zero above the diagonal). `keep` is either empty or holds one
/// multiplier per weight (0 or 1/(1-p)).
void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       const AttentionShape& shape, double score_scale, std::span<const double> keep,
                       std::span<double> probs, std::span<double> out);

/// Accumulates into dq/dk/dv.
void attention_backward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                        const AttentionShape& shape, double score_scale, std::span<const double> keep,
                        std::span<const double> probs, std::span<const double> dout, std::span<double> dq,
                        std::span<double> dk, std::span<double> dv);

/// Upper bound on worker threads (AUDIT_THREADS); 1 disables the OpenMP paths.
void set_max_threads(int n);
int max_threads();

namespace reference {

// Straightforward single-threaded versions kept as test oracles and as the
// benchmark baseline.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
void attention_forward(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                       const AttentionShape& shape, double score_scale, std::span<double> out);

}  // namespace reference

}  // namespace pidaudit::kernels
