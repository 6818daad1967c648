#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "dysat/tape.hpp"

namespace dysat {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass = false;
};

/// Named parameter tensor probed by grad_check.
struct GradCheckParam {
  std::string name;
  Tensor* tensor = nullptr;
};

/// Compares reverse-mode gradients of a scalar expression against central
/// finite differences. `build` must construct the expression on the given
/// tape from leaves bound in the same order as `params`. Relative error uses
/// a unit floor: |a - n| / max(1, |a|, |n|).
inline GradCheckReport grad_check(
    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
    const std::vector<GradCheckParam>& params, double h, double tol) {
  auto eval = [&](bool with_grad, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(*p.tensor, with_grad));
    Var out = build(tape, leaves);
    const double y = tape.value(out)[0];
    if (!std::isfinite(y)) throw InstabilityError("grad_check: non-finite objective");
    if (with_grad) {
      tape.backward(out);
      grads->clear();
      for (Var l : leaves) grads->push_back(tape.grad(l));
    }
    return y;
  };

  std::vector<Tensor> analytic;
  eval(true, &analytic);
  for (const auto& g : analytic) {
    if (!g.all_finite()) throw InstabilityError("grad_check: non-finite gradient");
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p].tensor;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double orig = theta[i];
      theta[i] = orig + h;
      const double fp = eval(false, nullptr);
      theta[i] = orig - h;
      const double fm = eval(false, nullptr);
      theta[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params[p].name;
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace dysat
