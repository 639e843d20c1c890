#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "secaps/errors.hpp"
#include "secaps/tensor.hpp"

namespace secaps {

// Ordered collection of same-dimension activity vectors: `count` capsules of
// `dim` values each, stored as a [count x dim] tensor.
template <typename Scalar>
struct CapsuleSet {
  std::size_t count = 0;
  std::size_t dim = 0;
  Tensor<Scalar> vectors;

  CapsuleSet() = default;
  CapsuleSet(std::size_t count_, std::size_t dim_, Tensor<Scalar> vectors_)
      : count(count_), dim(dim_), vectors(std::move(vectors_)) {
    if (count == 0 || dim == 0) {
      throw ContractError("CapsuleSet: count and dim must be positive");
    }
    if (vectors.shape() != Shape{count, dim}) {
      throw ShapeError("CapsuleSet: expected " + std::to_string(count) + "x" +
                       std::to_string(dim) + " vectors, got " +
                       shape_str(vectors.shape()));
    }
  }

  static CapsuleSet from_tensor(const Tensor<Scalar>& t) {
    if (t.rank() != 2) {
      throw ShapeError("CapsuleSet: expected rank-2 tensor, got " +
                       shape_str(t.shape()));
    }
    return CapsuleSet(t.extent(0), t.extent(1), t);
  }
};

// One weight matrix per higher-level capsule, shared across all lower-level
// capsules: m matrices of [p x d], stored as a [m x p x d] tensor.
template <typename Scalar>
struct SharedWeights {
  Tensor<Scalar> w;

  explicit SharedWeights(Tensor<Scalar> w_) : w(std::move(w_)) {
    if (w.rank() != 3) {
      throw ShapeError("SharedWeights: expected rank-3 [m x p x d] tensor, got " +
                       shape_str(w.shape()));
    }
  }

  std::size_t higher_count() const { return w.extent(0); }
  std::size_t higher_dim() const { return w.extent(1); }
  std::size_t lower_dim() const { return w.extent(2); }
};

// Everything one routing invocation produced: coupling logits and
// coefficients, pre-squash cluster centers, the output capsules, and the
// per-iteration coupling snapshots.
template <typename Scalar>
struct RoutingState {
  Tensor<Scalar> logits;     // [n x m], after the final agreement update
  Tensor<Scalar> couplings;  // [n x m], the couplings that formed the outputs
  Tensor<Scalar> centers;    // [m x p], pre-squash weighted sums
  CapsuleSet<Scalar> outputs;
  std::size_t iterations = 0;
  // couplings at each iteration, row-major [n x m]; entry r-1 == couplings
  std::vector<std::vector<Scalar>> coupling_history;
};

struct RoutingObjectiveParams {
  double entropy_weight = 1.0;  // the alpha of the clustering objective
};

// Vector nonlinearity: rescales each fiber along `axis` to norm
// |s|^2 / (1 + |s|^2) while preserving direction; zero maps to zero.
template <typename Scalar>
Tensor<Scalar> squash(const Tensor<Scalar>& s, std::size_t axis) {
  // Tiny offset keeps the norm differentiable at zero without disturbing the
  // norm law at any representable magnitude of interest.
  const Scalar eps = Scalar(1e-30);
  auto n2 = sum(mul(s, s), axis);
  auto denom = mul(add_const(n2, Scalar(1)),
                   pow_const(add_const(n2, eps), Scalar(0.5)));
  auto scale = mul(n2, pow_const(denom, Scalar(-1)));
  Shape keep = s.shape();
  keep[axis] = 1;
  auto broadcast = expand(reshape(scale, std::move(keep)), axis, s.extent(axis));
  return mul(s, broadcast);
}

template <typename Scalar>
Tensor<Scalar> squash(const Tensor<Scalar>& s) {
  if (s.rank() != 1) {
    throw ShapeError("squash: expected a vector, got " + shape_str(s.shape()));
  }
  return squash(s, 0);
}

// Prediction vectors u_{j|i} = W_j u_i for every lower capsule i and higher
// capsule j, as a [n x m x p] tensor. Linear in the input capsules.
template <typename Scalar>
Tensor<Scalar> transform_shared(const CapsuleSet<Scalar>& lower,
                                const SharedWeights<Scalar>& weights) {
  if (weights.lower_dim() != lower.dim) {
    throw ShapeError("transform_shared: weights expect lower dim " +
                     std::to_string(weights.lower_dim()) + ", capsules have " +
                     std::to_string(lower.dim));
  }
  const std::size_t m = weights.higher_count();
  const std::size_t p = weights.higher_dim();
  const std::size_t n = lower.count;
  std::vector<Tensor<Scalar>> per_higher;
  per_higher.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    auto w_j = reshape(slice(weights.w, 0, j, 1), {p, lower.dim});
    auto pred_j = matmul(lower.vectors, transpose(w_j));  // [n x p]
    per_higher.push_back(reshape(pred_j, {n, 1, p}));
  }
  return concat(per_higher, 1);
}

// Final-iteration routing map: combines prediction vectors with fixed
// coupling coefficients and squashes the result. This is the only part of
// routing gradients flow through.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> route_fixed_couplings(
    const Tensor<Scalar>& predictions, const Tensor<Scalar>& couplings) {
  const std::size_t n = predictions.extent(0);
  const std::size_t m = predictions.extent(1);
  const std::size_t p = predictions.extent(2);
  if (couplings.shape() != Shape{n, m}) {
    throw ShapeError("route_fixed_couplings: couplings " +
                     shape_str(couplings.shape()) + " do not match predictions " +
                     shape_str(predictions.shape()));
  }
  std::vector<Tensor<Scalar>> centers;
  centers.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    auto pred_j = reshape(slice(predictions, 1, j, 1), {n, p});
    auto c_j = reshape(slice(couplings, 1, j, 1), {n});
    auto s_j = matmul(transpose(pred_j), c_j);  // [p]
    centers.push_back(reshape(s_j, {1, p}));
  }
  auto s = concat(centers, 0);  // [m x p]
  return {squash(s, 1), s};
}

// Routing by agreement over prediction vectors [n x m x p].
//
// Per iteration: couplings are the row softmax of the logits, each cluster
// center is the coupling-weighted sum of predictions, outputs are the
// squashed centers, and logits grow by the prediction/output agreement.
//
// Gradient flow: coupling coefficients are treated as constants (the
// iterations leading up to them run detached); gradients propagate through
// the final iteration's centers and outputs into every prediction vector.
template <typename Scalar>
std::pair<CapsuleSet<Scalar>, RoutingState<Scalar>> dynamic_route(
    const Tensor<Scalar>& predictions, std::size_t iterations) {
  if (predictions.rank() != 3) {
    throw ShapeError("dynamic_route: expected [n x m x p] predictions, got " +
                     shape_str(predictions.shape()));
  }
  if (iterations < 1) {
    throw ContractError("dynamic_route: iterations must be >= 1");
  }
  const std::size_t n = predictions.extent(0);
  const std::size_t m = predictions.extent(1);
  const std::size_t p = predictions.extent(2);
  const auto pred = predictions.values();
  auto pred_at = [&](std::size_t i, std::size_t j, std::size_t k) {
    return pred[(i * m + j) * p + k];
  };

  std::vector<Scalar> logits(n * m, Scalar(0));
  std::vector<Scalar> couplings(n * m);
  std::vector<Scalar> outputs_flat(m * p);
  std::vector<std::vector<Scalar>> history;
  history.reserve(iterations);

  auto softmax_rows = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      Scalar max_v = logits[i * m];
      for (std::size_t j = 1; j < m; ++j)
        max_v = std::max(max_v, logits[i * m + j]);
      Scalar denom = 0;
      for (std::size_t j = 0; j < m; ++j) {
        couplings[i * m + j] = std::exp(logits[i * m + j] - max_v);
        denom += couplings[i * m + j];
      }
      for (std::size_t j = 0; j < m; ++j) couplings[i * m + j] /= denom;
    }
  };

  for (std::size_t it = 0; it + 1 < iterations; ++it) {
    softmax_rows();
    history.push_back(couplings);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < p; ++k) {
        Scalar acc = 0;
        for (std::size_t i = 0; i < n; ++i)
          acc += couplings[i * m + j] * pred_at(i, j, k);
        outputs_flat[j * p + k] = acc;
      }
      Scalar norm2 = 0;
      for (std::size_t k = 0; k < p; ++k) {
        Scalar v = outputs_flat[j * p + k];
        norm2 += v * v;
      }
      const Scalar scale =
          norm2 > Scalar(0)
              ? norm2 / ((Scalar(1) + norm2) * std::sqrt(norm2))
              : Scalar(0);
      for (std::size_t k = 0; k < p; ++k) outputs_flat[j * p + k] *= scale;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        Scalar agreement = 0;
        for (std::size_t k = 0; k < p; ++k)
          agreement += pred_at(i, j, k) * outputs_flat[j * p + k];
        logits[i * m + j] += agreement;
      }
  }

  // Final iteration through the graph, with the couplings held constant.
  softmax_rows();
  history.push_back(couplings);
  auto coupling_tensor = Tensor<Scalar>::from_data({n, m}, couplings);
  auto [squashed, centers] = route_fixed_couplings(predictions, coupling_tensor);

  // Close the loop on the logits with the final agreement update so the
  // state reflects all `iterations` passes of the algorithm.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      Scalar agreement = 0;
      for (std::size_t k = 0; k < p; ++k)
        agreement += pred_at(i, j, k) * squashed.at(j, k);
      logits[i * m + j] += agreement;
    }

  RoutingState<Scalar> state;
  state.logits = Tensor<Scalar>::from_data({n, m}, std::move(logits));
  state.couplings = coupling_tensor;
  state.centers = centers.detach();
  state.outputs = CapsuleSet<Scalar>(m, p, squashed);
  state.iterations = iterations;
  state.coupling_history = std::move(history);
  return {state.outputs, state};
}

// Clustering objective after each routing iteration. Whether it decreases
// monotonically is an open empirical question, so this logs the trajectory
// and asserts nothing.
template <typename Scalar>
std::vector<double> routing_objective_trajectory(
    const Tensor<Scalar>& predictions, std::size_t iterations,
    const RoutingObjectiveParams& params);

// Clustering objective the routing updates descend:
//   -sum_ij c_ij <u_{j|i}, v_j> + alpha * sum_ij c_ij log c_ij.
// Diagnostic only; never trained on.
template <typename Scalar>
double routing_objective(const Tensor<Scalar>& predictions,
                         const RoutingState<Scalar>& state,
                         const RoutingObjectiveParams& params) {
  if (params.entropy_weight < 0) {
    throw ContractError("routing_objective: entropy weight must be >= 0");
  }
  const std::size_t n = predictions.extent(0);
  const std::size_t m = predictions.extent(1);
  const std::size_t p = predictions.extent(2);
  double agreement = 0;
  double entropy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double c = static_cast<double>(state.couplings.at(i, j));
      double dot = 0;
      for (std::size_t k = 0; k < p; ++k)
        dot += static_cast<double>(predictions.at(i, j, k)) *
               static_cast<double>(state.outputs.vectors.at(j, k));
      agreement += c * dot;
      if (c > 0) entropy += c * std::log(c);
    }
  }
  return -agreement + params.entropy_weight * entropy;
}

template <typename Scalar>
std::vector<double> routing_objective_trajectory(
    const Tensor<Scalar>& predictions, std::size_t iterations,
    const RoutingObjectiveParams& params) {
  std::vector<double> values;
  values.reserve(iterations);
  NoGradGuard guard;
  for (std::size_t r = 1; r <= iterations; ++r) {
    auto [outputs, state] = dynamic_route(predictions, r);
    values.push_back(routing_objective(predictions, state, params));
  }
  return values;
}

}  // namespace secaps
