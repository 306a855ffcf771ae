#include "pidaudit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pidaudit {

GradCheckResult grad_check(const LossBuilder& loss, std::span<Parameter* const> params, double fd_eps) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape(true);
    tape.backward(loss(tape));
  }

  auto eval = [&] {
    Tape tape(false);
    return loss(tape).value()[0];
  };

  GradCheckResult res;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + fd_eps;
      const double up = eval();
      p->value[i] = saved - fd_eps;
      const double down = eval();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * fd_eps);
      const double analytic = p->grad[i];
      const double err = std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
      ++res.coordinates;
      if (res.worst_param.empty() || err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = p->name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace pidaudit
