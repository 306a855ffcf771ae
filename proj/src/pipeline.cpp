#include "pidaudit/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "pidaudit/error.hpp"
#include "pidaudit/log.hpp"

namespace pidaudit {

void AblationSpec::validate() const {
  if (multipliers.empty()) throw ConfigError("ablation: at least one multiplier required");
  std::set<int> seen;
  for (int k : multipliers) {
    if (k < 1) throw ConfigError("ablation: multipliers must be >= 1");
    if (!seen.insert(k).second) throw ConfigError("ablation: duplicate multiplier " + std::to_string(k));
  }
}

std::string condition_label(int multiplier) { return std::to_string(multiplier) + "x"; }

AlignedPanel prepare_panel(const std::vector<PriceSeries>& prices, const PipelineConfig& cfg, int multiplier) {
  if (prices.size() < 2) throw ConfigError("pipeline: need a target and at least one support");
  std::vector<ReturnSeries> rets;
  for (std::size_t i = 0; i < prices.size(); ++i) {
    if (i == 0 || multiplier == 1) {
      rets.push_back(compute_returns(prices[i], cfg.denominator));
      continue;
    }
    const auto filtered = cfg.ablation.filter == AblationFilter::kHold ? resample_hold(prices[i], multiplier)
                                                                       : lowpass_ma(prices[i], multiplier);
    rets.push_back(compute_returns(filtered, cfg.denominator));
  }
  return align(rets, static_cast<std::size_t>(cfg.model.context) + 1);
}

Model train_model(const AlignedPanel& panel, const PipelineConfig& cfg, TrainResult* result) {
  ModelConfig mc = cfg.model;
  mc.input_dim = static_cast<int>(panel.cols());
  mc.out_bins = cfg.quantizer.bins;
  Model model(mc, cfg.seed);
  auto r = train(model, panel, cfg.train, cfg.quantizer);
  if (result) *result = std::move(r);
  return model;
}

ConditionResult run_audit(const Model& model, const AlignedPanel& panel, const std::vector<IvSeries>& iv,
                          const PipelineConfig& cfg, int multiplier) {
  const auto& mc = model.config();
  if (static_cast<std::size_t>(mc.input_dim) != panel.cols())
    throw ConfigError("audit: model expects " + std::to_string(mc.input_dim) + " input series, panel has " +
                      std::to_string(panel.cols()));
  if (mc.out_bins != cfg.quantizer.bins) throw ConfigError("audit: model output bins differ from the quantizer");

  ConditionResult res;
  res.label = condition_label(multiplier);
  res.multiplier = multiplier;
  const auto first_row = static_cast<std::size_t>(mc.context) - 1;
  const auto sources = select_sources(panel, cfg.joint, first_row, cfg.quantizer);
  log::info("audit", res.label + ": predicting " + std::to_string(panel.rows() - first_row) + " windows");
  const auto records = collect_windows(model, panel, sources);
  res.series = daily_ei(records, sources.names, cfg.joint, cfg.pid, static_cast<std::size_t>(mc.out_bins));
  log::info("audit", res.label + ": " + std::to_string(res.series.days.size()) + " days, U via " +
                         to_string(cfg.pid.method));

  for (const auto& rec : records) {
    if (rec.end_row + 1 >= panel.rows()) break;
    double e = 0.0;
    for (std::size_t b = 0; b < rec.dist.size(); ++b) e += rec.dist[b] * dequantize(static_cast<int>(b), cfg.quantizer);
    res.predictions.push_back({panel.timestamps[rec.end_row + 1], panel.at(rec.end_row + 1, 0), e});
  }

  const std::size_t K = sources.names.size();
  res.mean_ei.assign(K, 0.0);
  for (const auto& day : res.series.days)
    for (std::size_t s = 0; s < K; ++s) res.mean_ei[s] += day.ei[s];
  if (!res.series.days.empty())
    for (double& v : res.mean_ei) v /= static_cast<double>(res.series.days.size());

  for (std::size_t s = 0; s < K; ++s) {
    const auto it = std::find_if(iv.begin(), iv.end(), [&](const IvSeries& x) { return x.symbol == sources.names[s]; });
    std::optional<double> r;
    if (it != iv.end()) {
      std::map<Date, double> by_date;
      for (const auto& p : it->points) by_date[p.date] = p.iv;
      std::vector<double> ei, vol;
      for (const auto& day : res.series.days) {
        const auto f = by_date.find(day.date);
        if (f == by_date.end()) continue;
        ei.push_back(day.ei[s]);
        vol.push_back(f->second);
      }
      if (ei.size() >= 2) r = pearson(ei, vol);
    }
    res.pearson.push_back(r);
  }
  return res;
}

AuditReport run_ablation(const std::vector<PriceSeries>& prices, const std::vector<IvSeries>& iv,
                         const PipelineConfig& cfg) {
  cfg.ablation.validate();
  AuditReport report;
  report.iv = iv;
  for (int k : cfg.ablation.multipliers) {
    log::info("ablate", "condition " + condition_label(k));
    const auto panel = prepare_panel(prices, cfg, k);
    TrainResult tr;
    const Model model = train_model(panel, cfg, &tr);
    auto cond = run_audit(model, panel, iv, cfg, k);
    cond.training = std::move(tr);
    report.conditions.push_back(std::move(cond));
  }
  return report;
}

}  // namespace pidaudit
