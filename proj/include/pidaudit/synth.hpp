#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pidaudit/market_data.hpp"

namespace pidaudit {

/// Hourly synthetic market with a known linear dependence of the target on
/// lagged support returns:
///   pr_target(t) = sum_i w_i r_i(t - lag) + phi pr_target(t - 1) + sigma eps
/// Supports are random walks in return space; observed support prices carry
/// optional multiplicative high-frequency noise exp(hf_i eta).
struct SynthSpec {
  std::uint64_t seed = 0;
  int days = 125;
  int bars_per_day = 7;
  int first_hour = 14;  // UTC
  std::string start_date = "2025-01-02";
  std::string target = "TGT";
  std::vector<std::string> supports{"S1", "S2", "S3", "S4"};
  std::vector<double> weights{1.0, 0.0, 0.0, 0.0};
  int lag = 1;
  double support_sigma = 0.02;
  double target_noise = 0.005;
  double target_ar = 0.0;
  std::vector<double> hf_noise{0.0, 0.0, 0.0, 0.0};
  double start_price = 100.0;

  void validate() const;
};

struct SynthMarket {
  std::vector<PriceSeries> prices;  // target first
  std::vector<IvSeries> iv;         // one per support
  AlignedPanel panel;
};

/// Deterministic in the spec; prices are rounded to 1e-4 so CSV output
/// reloads to the identical panel.
SynthMarket synth_market(const SynthSpec& spec);

/// Ground-truth descriptor as pretty-printed JSON.
std::string synth_truth_json(const SynthSpec& spec);

}  // namespace pidaudit
