#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "secaps/errors.hpp"
#include "secaps/tensor.hpp"

namespace secaps {

// Compares the analytic gradient of a scalar-valued function against central
// finite differences, entry by entry, over every given parameter tensor.
// Returns the maximum relative error
//   |analytic - central| / max(|analytic|, |central|, 1e-8).
//
// `f` must rebuild its expression from the current parameter values on every
// call and return a scalar tensor; the parameters are perturbed in place and
// restored bit-exactly.
//
// Throws DeterminismError when two unperturbed evaluations disagree, and
// NonDifferentiablePointError when one-sided difference quotients diverge
// (the stencil straddles a kink, e.g. an argmax tie).
template <typename Scalar, typename Fn>
Scalar finite_difference_check(Fn&& f, std::vector<Tensor<Scalar>> params,
                               Scalar step) {
  if (step <= Scalar(0)) {
    throw ContractError("finite_difference_check: step must be positive");
  }

  Tensor<Scalar> root = f();
  if (root.numel() != 1) {
    throw ContractError(
        "finite_difference_check: function must be scalar-valued, got shape " +
        shape_str(root.shape()));
  }
  const Scalar base = root.item();
  {
    NoGradGuard guard;
    Tensor<Scalar> again = f();
    if (again.item() != base) {
      throw DeterminismError(
          "finite_difference_check: two forward passes disagree (" +
          std::to_string(static_cast<double>(base)) + " vs " +
          std::to_string(static_cast<double>(again.item())) + ")");
    }
  }

  for (auto& p : params) p.zero_grad();
  root.backward();

  // One-sided quotients disagreeing by more than this fraction of their
  // magnitude indicate a kink rather than curvature at sane step sizes.
  const Scalar kink_tol = Scalar(0.05);

  Scalar max_rel = 0;
  for (auto& p : params) {
    const auto analytic = p.grad();
    auto vals = p.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const Scalar saved = vals[i];
      Scalar plus, minus;
      {
        NoGradGuard guard;
        vals[i] = saved + step;
        plus = f().item();
        vals[i] = saved - step;
        minus = f().item();
        vals[i] = saved;
      }
      const Scalar central = (plus - minus) / (Scalar(2) * step);
      const Scalar fwd = (plus - base) / step;
      const Scalar bwd = (base - minus) / step;
      const Scalar scale =
          std::max({std::abs(fwd), std::abs(bwd), Scalar(1)});
      if (std::abs(fwd - bwd) > kink_tol * scale) {
        throw NonDifferentiablePointError(
            "finite_difference_check: one-sided quotients disagree (" +
            std::to_string(static_cast<double>(fwd)) + " vs " +
            std::to_string(static_cast<double>(bwd)) +
            "); the stencil straddles a non-differentiable point");
      }
      const Scalar denom = std::max(
          {std::abs(analytic[i]), std::abs(central), Scalar(1e-8)});
      max_rel = std::max(max_rel, std::abs(analytic[i] - central) / denom);
    }
  }
  return max_rel;
}

}  // namespace secaps
