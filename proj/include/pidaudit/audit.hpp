#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pidaudit/distribution.hpp"
#include "pidaudit/market_data.hpp"
#include "pidaudit/pid.hpp"
#include "pidaudit/transformer.hpp"

namespace pidaudit {

enum class SourceBinning { kQuantile, kFixed };

struct JointBuilderConfig {
  int source_bins = 8;
  double alpha = 1.0;
  SourceBinning binning = SourceBinning::kQuantile;
  /// Whether the target's own returns are one of the PID sources.
  bool include_target = true;

  void validate() const;
};

/// Interior bin edges for coarse source quantisation; bin = #edges <= value.
struct CoarseBins {
  std::vector<double> edges;
  int bins = 0;

  [[nodiscard]] int operator()(double v) const;
};

/// Quantile edges fitted on `values`, or equal-width edges over the quantizer range.
CoarseBins fit_coarse_bins(std::span<const double> values, const JointBuilderConfig& cfg, const QuantizerSpec& range);

/// One audited context window: the coarse bin of every source at the
/// window's last row, and the model's next-step distribution.
struct WindowRecord {
  std::size_t end_row = 0;
  Date day;
  std::vector<int> source_bins;
  std::vector<double> dist;
};

struct AuditSources {
  std::vector<std::string> names;     // PID sources in order
  std::vector<std::size_t> columns;   // panel column of each source
  std::vector<CoarseBins> binning;
};

AuditSources select_sources(const AlignedPanel& panel, const JointBuilderConfig& cfg, std::size_t first_row,
                            const QuantizerSpec& range);

/// Model distributions for every window end in [N-1, T-1].
std::vector<WindowRecord> collect_windows(const Model& model, const AlignedPanel& panel, const AuditSources& sources);

/// p(a, b) = (sum_t 1[a_t = a] p_t(b) + alpha * qbar(b)) / (T + alpha * A)
/// where qbar is the bucket's mean model output: alpha pseudo-observations
/// per source bin that carry no information about the output.
JointDistribution build_joint(std::span<const WindowRecord> bucket, std::size_t source, int source_bins,
                              double alpha, std::size_t out_bins);

/// Joint of the source tuple with the output, smoothed with the same
/// pseudo-count mass spread uniformly over all A^k tuples, so every
/// single-source marginal equals build_joint exactly. Rows: observed tuples
/// (ascending code) then, if any mass remains, one merged row for all
/// unobserved tuples (they share the conditional qbar, so merging preserves
/// the information).
JointDistribution build_tuple_joint(std::span<const WindowRecord> bucket, std::size_t n_sources, int source_bins,
                                    double alpha, std::size_t out_bins);

/// Same smoothing over the full A^k product alphabet (exact-solver warm start).
JointDistribution build_full_tuple_joint(std::span<const WindowRecord> bucket, std::size_t n_sources,
                                         int source_bins, double alpha, std::size_t out_bins);

struct DayEi {
  Date date;
  std::size_t windows = 0;
  std::vector<double> mi;  // per source
  std::vector<double> ei;  // per source
  double union_info = 0.0;
  double joint_info = 0.0;
  UnionResult solver;
};

struct DailyEiSeries {
  std::vector<std::string> sources;
  std::vector<DayEi> days;
};

/// Per-day PID over calendar-date buckets of the window records. Days are
/// independent and processed in parallel; output is ordered by date.
DailyEiSeries daily_ei(std::span<const WindowRecord> records, const std::vector<std::string>& sources,
                       const JointBuilderConfig& cfg, const UnionSolverConfig& pid_cfg, std::size_t out_bins);

/// Sample Pearson correlation; nullopt when either series has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

const char* to_string(SourceBinning b);

}  // namespace pidaudit
