#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pidaudit/autodiff.hpp"

namespace pidaudit {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments shaped like the parameters they track.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(const AdamConfig& cfg, std::span<const Parameter> params);
};

/// One bias-corrected Adam update using each parameter's `grad`.
void adam_step(std::span<Parameter> params, AdamState& state);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(std::span<Parameter> params, double max_norm);

}  // namespace pidaudit
