// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "davam/autodiff.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace davam {

template <typename Scalar>
struct GradientCheckReport {
  Scalar max_rel_error = 0;
  std::map<std::string, Scalar> per_parameter;
};

// Central-difference check of every element of every listed parameter
// against the analytic gradient. loss_fn must rebuild the graph on each
// call and be deterministic; two forward passes that disagree raise a
// NumericError. Relative error is |a - n| / max(1, |a|, |n|).
template <typename Scalar, typename LossFn>
GradientCheckReport<Scalar> grad_check(
    LossFn&& loss_fn,
    const std::vector<std::pair<std::string, Tensor<Scalar>>>& params,
    Scalar eps) {
  if (eps < Scalar(1e-6) || eps > Scalar(1e-3))
    throw ContractError("grad_check: eps outside [1e-6, 1e-3]");

  auto eval = [&]() -> Scalar {
    NoGradGuard ng;
    Tensor<Scalar> loss = loss_fn();
    return loss.item();
  };

  Scalar f0 = eval();
  Scalar f1 = eval();
  if (f0 != f1)
    throw NumericError("grad_check: loss_fn is not deterministic");

  for (auto& [name, p] : params) {
    (void)name;
    const_cast<Tensor<Scalar>&>(p).zero_grad();
  }
  Tensor<Scalar> loss = loss_fn();
  loss.backward();

  std::vector<Mat<Scalar>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) {
    (void)name;
    analytic.push_back(p.grad_or_zero());
  }

  GradientCheckReport<Scalar> report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<Scalar> p = params[pi].second;
    Scalar worst = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        Scalar orig = p.value()(i, j);
        p.value_mut()(i, j) = orig + eps;
        Scalar fp = eval();
        p.value_mut()(i, j) = orig - eps;
        Scalar fm = eval();
        p.value_mut()(i, j) = orig;
        Scalar numeric = (fp - fm) / (Scalar(2) * eps);
        Scalar a = analytic[pi](i, j);
        Scalar denom = std::max(Scalar(1), std::max(std::abs(a), std::abs(numeric)));
        Scalar rel = std::abs(a - numeric) / denom;
        worst = std::max(worst, rel);
      }
    }
    report.per_parameter[params[pi].first] = worst;
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  return report;
}

}  // namespace davam
