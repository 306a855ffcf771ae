#include "pidaudit/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace pidaudit {

AdamState::AdamState(const AdamConfig& cfg, std::span<const Parameter> params) : config(cfg) {
  for (const auto& p : params) {
    m.emplace_back(p.value.size(), 0.0);
    v.emplace_back(p.value.size(), 0.0);
  }
}

void adam_step(std::span<Parameter> params, AdamState& state) {
  if (params.size() != state.m.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (p.grad.size() != p.value.size()) continue;  // no gradient recorded
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = p.grad[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

double clip_grad_norm(std::span<Parameter> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.grad.values()) g *= s;
  }
  return norm;
}

}  // namespace pidaudit
