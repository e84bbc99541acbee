#pragma once

// Central finite-difference verification of analytic gradients.

#include "artinv/nn/core.hpp"

#include <functional>
#include <string>
#include <vector>

namespace artinv::nn {

struct GradCheckResult {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-8)
  double max_abs_diff = 0.0;
};

/// `loss(backprop)` must recompute the loss from the current parameter values
/// and, when `backprop` is set, accumulate gradients into them.
inline std::vector<GradCheckResult> check_gradients(const ParamList<double>& params,
                                                    const std::function<double(bool)>& loss, double eps = 1e-4) {
  zero_grads(params);
  loss(true);
  const auto analytic = collect_gradients(params);
  std::vector<GradCheckResult> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    MatD numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index k = 0; k < p->value.size(); ++k) {
      double& v = p->value.data()[k];
      const double orig = v;
      v = orig + eps;
      const double up = loss(false);
      v = orig - eps;
      const double down = loss(false);
      v = orig;
      numeric.data()[k] = (up - down) / (2.0 * eps);
    }
    const MatD& a = analytic.values[i];
    GradCheckResult r;
    r.name = p->name;
    r.max_abs_diff = (a - numeric).cwiseAbs().maxCoeff();
    r.rel_error = (a - numeric).norm() / std::max(a.norm() + numeric.norm(), 1e-8);
    out.push_back(r);
  }
  return out;
}

inline double max_rel_error(const std::vector<GradCheckResult>& results) {
  double m = 0.0;
  for (const auto& r : results) m = std::max(m, r.rel_error);
  return m;
}

}  // namespace artinv::nn
