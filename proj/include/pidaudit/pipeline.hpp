#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pidaudit/audit.hpp"
#include "pidaudit/market_data.hpp"
#include "pidaudit/pid.hpp"
#include "pidaudit/transformer.hpp"

namespace pidaudit {

enum class AblationFilter { kHold, kMovingAverage };

struct AblationSpec {
  std::vector<int> multipliers{1, 3, 5};
  AblationFilter filter = AblationFilter::kHold;

  void validate() const;
};

struct PipelineConfig {
  QuantizerSpec quantizer;
  ReturnDenominator denominator = ReturnDenominator::kCurrent;
  ModelConfig model;  // input_dim is taken from the panel
  TrainConfig train;
  JointBuilderConfig joint;
  UnionSolverConfig pid{.method = UnionMethod::kSurrogate};
  AblationSpec ablation;
  std::uint64_t seed = 0;
};

struct PredictionPoint {
  Timestamp timestamp;  // the predicted bar
  double actual = 0.0;
  double expected = 0.0;
};

struct ConditionResult {
  std::string label;
  int multiplier = 1;
  DailyEiSeries series;
  std::vector<double> mean_ei;                 // per source
  std::vector<std::optional<double>> pearson;  // per source, EI vs IV
  std::vector<PredictionPoint> predictions;
  std::optional<TrainResult> training;
};

struct AuditReport {
  std::vector<ConditionResult> conditions;
  std::vector<IvSeries> iv;
  std::vector<std::pair<std::string, std::string>> config_snapshot;  // "section.key" -> value
  bool deterministic = true;
};

std::string condition_label(int multiplier);

/// Returns of the target and the (filtered) supports on their shared clock.
AlignedPanel prepare_panel(const std::vector<PriceSeries>& prices, const PipelineConfig& cfg, int multiplier = 1);

/// Fresh model seeded by cfg.seed, trained on the panel.
Model train_model(const AlignedPanel& panel, const PipelineConfig& cfg, TrainResult* result = nullptr);

/// Daily EI, prediction trace and EI/IV correlations for one trained model.
ConditionResult run_audit(const Model& model, const AlignedPanel& panel, const std::vector<IvSeries>& iv,
                          const PipelineConfig& cfg, int multiplier = 1);

/// Retrains and audits once per multiplier; supports are resampled, the
/// target stays at its native step.
AuditReport run_ablation(const std::vector<PriceSeries>& prices, const std::vector<IvSeries>& iv,
                         const PipelineConfig& cfg);

}  // namespace pidaudit
