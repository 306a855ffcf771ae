#include "pidaudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <stdexcept>

#include "pidaudit/error.hpp"
#include "pidaudit/kernels.hpp"

namespace pidaudit {

void JointBuilderConfig::validate() const {
  if (source_bins < 2) throw ConfigError("audit: source_bins must be >= 2");
  if (!(alpha >= 0.0)) throw ConfigError("audit: alpha must be >= 0");
}

const char* to_string(SourceBinning b) { return b == SourceBinning::kQuantile ? "quantile" : "fixed"; }

int CoarseBins::operator()(double v) const {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

CoarseBins fit_coarse_bins(std::span<const double> values, const JointBuilderConfig& cfg, const QuantizerSpec& range) {
  CoarseBins cb;
  cb.bins = cfg.source_bins;
  const auto A = static_cast<std::size_t>(cfg.source_bins);
  if (cfg.binning == SourceBinning::kFixed) {
    const double w = (range.hi - range.lo) / static_cast<double>(A);
    for (std::size_t j = 1; j < A; ++j) cb.edges.push_back(range.lo + static_cast<double>(j) * w);
    return cb;
  }
  if (values.empty()) throw DataError("coarse binning: no values to fit quantiles");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  // Edge j sits at the j/A quantile; tied values collapse bins, which only
  // leaves some bins empty.
  for (std::size_t j = 1; j < A; ++j) {
    const std::size_t idx = std::min(sorted.size() - 1, j * sorted.size() / A);
    cb.edges.push_back(sorted[idx]);
  }
  return cb;
}

AuditSources select_sources(const AlignedPanel& panel, const JointBuilderConfig& cfg, std::size_t first_row,
                            const QuantizerSpec& range) {
  cfg.validate();
  AuditSources src;
  for (std::size_t c = cfg.include_target ? 0 : 1; c < panel.cols(); ++c) {
    src.names.push_back(panel.symbols[c]);
    src.columns.push_back(c);
    std::vector<double> vals;
    for (std::size_t t = first_row; t < panel.rows(); ++t) vals.push_back(panel.at(t, c));
    src.binning.push_back(fit_coarse_bins(vals, cfg, range));
  }
  if (src.names.empty()) throw ConfigError("audit: no PID sources selected");
  return src;
}

std::vector<WindowRecord> collect_windows(const Model& model, const AlignedPanel& panel, const AuditSources& sources) {
  const auto N = static_cast<std::size_t>(model.config().context);
  if (panel.rows() < N) throw DataError("audit: panel shorter than the context length");
  std::vector<std::size_t> ends;
  for (std::size_t t = N - 1; t < panel.rows(); ++t) ends.push_back(t);
  auto dists = predict_dists(model, panel, ends);
  std::vector<WindowRecord> out(ends.size());
  for (std::size_t i = 0; i < ends.size(); ++i) {
    auto& rec = out[i];
    rec.end_row = ends[i];
    rec.day = date_of(panel.timestamps[ends[i]]);
    for (std::size_t s = 0; s < sources.columns.size(); ++s)
      rec.source_bins.push_back(sources.binning[s](panel.at(ends[i], sources.columns[s])));
    rec.dist = std::move(dists[i]);
  }
  return out;
}

namespace {

std::vector<double> mean_output(std::span<const WindowRecord> bucket, std::size_t out_bins) {
  if (bucket.empty()) throw DataError("audit: empty day bucket");
  std::vector<double> q(out_bins, 0.0);
  for (const auto& r : bucket) {
    if (r.dist.size() != out_bins) throw std::invalid_argument("audit: model output has wrong width");
    for (std::size_t b = 0; b < out_bins; ++b) q[b] += r.dist[b];
  }
  for (double& v : q) v /= static_cast<double>(bucket.size());
  return q;
}

std::size_t int_pow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

JointDistribution build_joint(std::span<const WindowRecord> bucket, std::size_t source, int source_bins, double alpha,
                              std::size_t out_bins) {
  const auto A = static_cast<std::size_t>(source_bins);
  const auto qbar = mean_output(bucket, out_bins);
  std::vector<double> p(A * out_bins, 0.0);
  for (const auto& r : bucket) {
    const auto a = static_cast<std::size_t>(r.source_bins.at(source));
    for (std::size_t b = 0; b < out_bins; ++b) p[a * out_bins + b] += r.dist[b];
  }
  const double denom = static_cast<double>(bucket.size()) + alpha * static_cast<double>(A);
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < out_bins; ++b) p[a * out_bins + b] = (p[a * out_bins + b] + alpha * qbar[b]) / denom;
  return JointDistribution(A, out_bins, std::move(p));
}

JointDistribution build_tuple_joint(std::span<const WindowRecord> bucket, std::size_t n_sources, int source_bins,
                                    double alpha, std::size_t out_bins) {
  const auto A = static_cast<std::size_t>(source_bins);
  const auto qbar = mean_output(bucket, out_bins);
  const std::vector<std::size_t> sizes(n_sources, A);
  std::map<std::size_t, std::vector<double>> rows;
  for (const auto& r : bucket) {
    auto& row = rows[tuple_index(r.source_bins, sizes)];
    row.resize(out_bins, 0.0);
    for (std::size_t b = 0; b < out_bins; ++b) row[b] += r.dist[b];
  }
  const double tuples = std::pow(static_cast<double>(A), static_cast<double>(n_sources));
  const double pseudo = alpha * static_cast<double>(A);
  const double denom = static_cast<double>(bucket.size()) + pseudo;
  const double per_tuple = pseudo / tuples;
  const double unobserved = tuples - static_cast<double>(rows.size());
  const bool rest_row = alpha > 0.0 && unobserved > 0.0;

  std::vector<double> p;
  p.reserve((rows.size() + 1) * out_bins);
  for (const auto& [code, row] : rows)
    for (std::size_t b = 0; b < out_bins; ++b) p.push_back((row[b] + per_tuple * qbar[b]) / denom);
  if (rest_row)
    for (std::size_t b = 0; b < out_bins; ++b) p.push_back(per_tuple * unobserved * qbar[b] / denom);
  return JointDistribution(rows.size() + (rest_row ? 1 : 0), out_bins, std::move(p));
}

JointDistribution build_full_tuple_joint(std::span<const WindowRecord> bucket, std::size_t n_sources, int source_bins,
                                         double alpha, std::size_t out_bins) {
  const auto A = static_cast<std::size_t>(source_bins);
  const auto qbar = mean_output(bucket, out_bins);
  const std::size_t tuples = int_pow(A, n_sources);
  const std::vector<std::size_t> sizes(n_sources, A);
  std::vector<double> p(tuples * out_bins, 0.0);
  for (const auto& r : bucket) {
    const auto x = tuple_index(r.source_bins, sizes);
    for (std::size_t b = 0; b < out_bins; ++b) p[x * out_bins + b] += r.dist[b];
  }
  const double pseudo = alpha * static_cast<double>(A);
  const double denom = static_cast<double>(bucket.size()) + pseudo;
  const double per_tuple = pseudo / static_cast<double>(tuples);
  for (std::size_t x = 0; x < tuples; ++x)
    for (std::size_t b = 0; b < out_bins; ++b) p[x * out_bins + b] = (p[x * out_bins + b] + per_tuple * qbar[b]) / denom;
  return JointDistribution(tuples, out_bins, std::move(p));
}

DailyEiSeries daily_ei(std::span<const WindowRecord> records, const std::vector<std::string>& sources,
                       const JointBuilderConfig& cfg, const UnionSolverConfig& pid_cfg, std::size_t out_bins) {
  cfg.validate();
  DailyEiSeries series;
  series.sources = sources;
  // Records come in row order, so each calendar date is one contiguous run.
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t i = 0; i < records.size();) {
    std::size_t j = i;
    while (j < records.size() && records[j].day == records[i].day) ++j;
    spans.emplace_back(i, j - i);
    i = j;
  }
  for (std::size_t d = 1; d < spans.size(); ++d)
    if (!(records[spans[d - 1].first].day < records[spans[d].first].day))
      throw std::invalid_argument("daily_ei: records not in chronological order");

  const std::size_t K = sources.size();
  series.days.resize(spans.size());
  std::vector<std::exception_ptr> errors(spans.size());
  const auto n_days = static_cast<std::ptrdiff_t>(spans.size());
  const int nt = kernels::max_threads();
#pragma omp parallel for schedule(dynamic) if (nt > 1) num_threads(nt)
  for (std::ptrdiff_t d = 0; d < n_days; ++d) {
    const auto idx = static_cast<std::size_t>(d);
    try {
      const auto bucket = records.subspan(spans[idx].first, spans[idx].second);
      std::vector<JointDistribution> joints;
      for (std::size_t s = 0; s < K; ++s) joints.push_back(build_joint(bucket, s, cfg.source_bins, cfg.alpha, out_bins));
      const auto channels = SourceChannelSet::from_joints(joints);
      const auto tuple_joint = build_tuple_joint(bucket, K, cfg.source_bins, cfg.alpha, out_bins);
      std::optional<JointDistribution> warm;
      if (pid_cfg.method == UnionMethod::kExact &&
          std::pow(static_cast<double>(cfg.source_bins), static_cast<double>(K)) <=
              static_cast<double>(pid_cfg.max_channel_states)) {
        warm = build_full_tuple_joint(bucket, K, cfg.source_bins, cfg.alpha, out_bins);
      }
      const PidResult pid = pid_report(channels, &tuple_joint, pid_cfg, warm ? &*warm : nullptr);
      DayEi& day = series.days[idx];
      day.date = bucket.front().day;
      day.windows = bucket.size();
      day.mi = pid.mutual_info;
      day.ei = pid.excluded;
      day.union_info = pid.union_info;
      day.joint_info = pid.joint_info.value_or(pid.union_info);
      day.solver = pid.solver;
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return series;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need two equal-length series (n >= 2)");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace pidaudit
