#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absa/tensor.hpp"

namespace absa {

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_grad = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_err = 0.0;

  bool passes(double tol) const { return max_rel_err < tol; }
};

// Compare analytic gradients against central finite differences, coordinate
// by coordinate, in double precision.
//
//   params:         named parameter tensors; perturbed in place and restored.
//   eval_loss:      recomputes the scalar loss from the current parameter
//                   values (must be deterministic; no dropout).
//   analytic_grads: returns one gradient tensor per parameter, same order.
//
// The per-coordinate error is |a - f| / max(|a|, |f|, 1e-3 * g_ref) where
// g_ref is the largest gradient magnitude seen anywhere; the floor keeps
// finite-difference roundoff on near-zero coordinates from dominating the
// report.
inline GradCheckReport grad_check(
    std::span<const std::pair<std::string, Tensor<double>*>> params,
    const std::function<double()>& eval_loss,
    const std::function<std::vector<Tensor<double>>()>& analytic_grads,
    double step = 1e-5) {
  GradCheckReport report;
  std::vector<Tensor<double>> analytic = analytic_grads();
  if (analytic.size() != params.size())
    throw std::invalid_argument("grad_check: gradient count != parameter count");

  std::vector<Tensor<double>> fd;
  fd.reserve(params.size());
  double g_ref = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& t = *params[p].second;
    if (!analytic[p].same_shape(t))
      throw std::invalid_argument("grad_check: gradient shape mismatch for " + params[p].first);
    Tensor<double> g = Tensor<double>::zeros(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double saved = t.at(i);
      t.at(i) = saved + step;
      const double lp = eval_loss();
      t.at(i) = saved - step;
      const double lm = eval_loss();
      t.at(i) = saved;
      g.at(i) = (lp - lm) / (2.0 * step);
      g_ref = std::max({g_ref, std::abs(g.at(i)), std::abs(analytic[p].at(i))});
    }
    fd.push_back(std::move(g));
  }

  const double floor = std::max(1e-3 * g_ref, 1e-12);
  for (size_t p = 0; p < params.size(); ++p) {
    GradCheckGroup group{params[p].first, 0.0, 0.0};
    for (int64_t i = 0; i < analytic[p].numel(); ++i) {
      const double a = analytic[p].at(i), f = fd[p].at(i);
      const double rel = std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor});
      group.max_rel_err = std::max(group.max_rel_err, rel);
      group.max_abs_grad = std::max(group.max_abs_grad, std::abs(a));
    }
    report.max_rel_err = std::max(report.max_rel_err, group.max_rel_err);
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace absa
