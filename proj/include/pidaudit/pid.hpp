#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pidaudit/distribution.hpp"

namespace pidaudit {

/// Shannon entropy in bits, 0 log 0 = 0.
double entropy(const DiscreteDistribution& d);
double entropy_bits(std::span<const double> p);

/// H(X) + H(Y) - H(X,Y) in bits.
double mutual_information(const JointDistribution& j);

/// Conditional p(x | y) stored row-major [x * ny + y].
struct Channel {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> p;

  [[nodiscard]] double operator()(std::size_t x, std::size_t y) const { return p[x * ny + y]; }
};

/// Target marginal p(y) plus one channel p(x_i | y) per source.
struct SourceChannelSet {
  std::vector<double> py;
  std::vector<Channel> channels;

  /// Joints must agree on p(y) to 1e-9.
  static SourceChannelSet from_joints(std::span<const JointDistribution> joints);
  void validate() const;
  /// I(X_i; Y) in bits.
  [[nodiscard]] double source_information(std::size_t i) const;
};

enum class UnionMethod { kExact, kSurrogate };

struct UnionSolverConfig {
  UnionMethod method = UnionMethod::kExact;
  /// Budget on the coupling alphabet prod_i |X_i| for the exact method.
  std::size_t max_channel_states = 4096;
  int max_iterations = 20000;
  /// Bits; bounds the feasibility residual and drives the stopping rule.
  double tolerance = 1e-6;
  int restarts = 8;
  std::uint64_t seed = 0;
};

struct UnionResult {
  double value = 0.0;  // bits
  UnionMethod method = UnionMethod::kExact;
  int iterations = 0;
  double gap_estimate = 0.0;
  double residual = 0.0;
  int best_restart = 0;
  std::size_t channel_states = 0;
};

/// Union information: the least I(Q;Y) over channels Q that Blackwell-dominate
/// every source.
///
/// Exact method: dominance of every source is equivalent to Q carrying a
/// coupling r(x_1..x_k | y) with the given source marginals (the sources are
/// then coordinate projections of Q), so the problem is
///   min_{r, s}  sum_y p(y) KL(r(.|y) || s)
/// over couplings r and reference marginals s. This is solved by alternating
/// minimisation: s <- sum_y p(y) r(.|y) in closed form, and r(.|y) <- the
/// I-projection of s onto the coupling constraints by iterative proportional
/// fitting. Each sweep is non-increasing; restarts differ in the initial s.
/// `warm_start`, if given, is a coupling over the full product alphabet (the
/// actual joint of the sources with Y) used to seed restart 0, which makes
/// the result no greater than I(joint; Y).
///
/// Surrogate method: returns I(X_1..X_k; Y) of `joint` (rows may be merged
/// tuples); requires `joint`.
UnionResult union_information(const SourceChannelSet& channels, const UnionSolverConfig& cfg,
                              const JointDistribution* joint = nullptr, const JointDistribution* warm_start = nullptr);

/// E_i = U - I_i; values in [-1e-9, 0) clamp to 0, lower values throw NumericalError.
double excluded_information(double union_info, double source_info);

struct PidResult {
  std::vector<double> mutual_info;  // per source, bits
  double union_info = 0.0;
  std::vector<double> excluded;  // per source, bits
  UnionResult solver;
  std::optional<double> joint_info;
};

/// Bundles I_i, U and E_i and enforces
///   max_i I_i - 1e-6 <= U <= I(joint; Y) + 1e-6   (upper bound when joint given).
/// Violations throw NumericalError.
PidResult pid_report(const SourceChannelSet& channels, const JointDistribution* joint, const UnionSolverConfig& cfg,
                     const JointDistribution* warm_start = nullptr);

/// Mixed-radix index of a source tuple, source 0 most significant.
std::size_t tuple_index(std::span<const int> symbols, std::span<const std::size_t> sizes);

const char* to_string(UnionMethod m);

}  // namespace pidaudit
