#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "pidaudit/autodiff.hpp"

namespace pidaudit {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Builds a scalar loss on the given tape, binding its parameters with
/// tape.param(). It is evaluated once with recording for the analytic
/// gradient and twice per coordinate without recording.
using LossBuilder = std::function<Var(Tape&)>;

/// Central differences per coordinate; relative error is
/// |a - n| / max(1, |a|, |n|).
GradCheckResult grad_check(const LossBuilder& loss, std::span<Parameter* const> params, double fd_eps = 1e-5);

}  // namespace pidaudit
