#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "seed/tensor.hpp"

namespace seed {

/// Relative error of one gradient entry against its central difference:
/// |analytic - numeric| / max(1, |numeric|).
inline double gradient_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

/// Per-entry relative errors of the reverse-mode gradient of `loss()` with respect to
/// every entry of every tensor in `params`, using central differences of width `eps`.
/// The tensors are perturbed in place and restored.
inline std::vector<double> gradient_errors(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                           double eps = 1e-5) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  const Tensor out = loss();
  if (!std::isfinite(out.item())) throw NumericError("grad_check: loss is not finite");
  out.backward();

  std::vector<double> errors;
  for (auto& p : params) {
    const std::vector<double> analytic =
        p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end()) : std::vector<double>(p.size(), 0.0);
    auto values = p.data_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        values[i] = saved + eps;
        plus = loss().item();
        values[i] = saved - eps;
        minus = loss().item();
      }
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) throw NumericError("grad_check: non-finite probe");
      errors.push_back(gradient_relative_error(analytic[i], (plus - minus) / (2.0 * eps)));
    }
  }
  return errors;
}

/// Max relative error between analytic and central-difference gradients of a scalar
/// function at x.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5) {
  const auto errors = gradient_errors([&] { return f(x); }, {x}, eps);
  return errors.empty() ? 0.0 : *std::max_element(errors.begin(), errors.end());
}

}  // namespace seed
