#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "secaps/capsule.hpp"
#include "secaps/errors.hpp"
#include "secaps/tensor.hpp"

namespace secaps {

// Scoring parameters of the attention residual unit: one scalar score per
// position, e_i = tanh(w . t_i + b).
template <typename Scalar>
struct AttentionParams {
  Tensor<Scalar> w;  // [1 x dim]
  Tensor<Scalar> b;  // [1]

  static AttentionParams init(std::size_t dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    std::vector<Scalar> w(dim);
    for (auto& v : w) v = static_cast<Scalar>(dist(rng));
    AttentionParams p;
    p.w = Tensor<Scalar>::from_data({1, dim}, std::move(w), true);
    p.b = Tensor<Scalar>::from_data({1}, {static_cast<Scalar>(dist(rng))}, true);
    return p;
  }
};

// Softmax-weighted pooling of the positions into one context vector:
//   e_i = tanh(w . t_i + b),  alpha = softmax(e),  c = sum_i alpha_i t_i.
// Positions at or beyond valid_len are masked out of the softmax by setting
// their scores to a large negative constant.
template <typename Scalar>
Tensor<Scalar> attention_pool(const CapsuleSet<Scalar>& primaries,
                              const AttentionParams<Scalar>& params,
                              std::size_t valid_len) {
  const std::size_t n = primaries.count;
  const std::size_t dim = primaries.dim;
  if (params.w.shape() != Shape{1, dim}) {
    throw ShapeError("attention_pool: weights " + shape_str(params.w.shape()) +
                     " do not match capsule dim " + std::to_string(dim));
  }
  if (valid_len == 0 || valid_len > n) {
    throw ContractError("attention_pool: valid_len must be in [1, count]");
  }
  auto scores = matmul(primaries.vectors, transpose(params.w));  // [n x 1]
  auto bias = expand(reshape(params.b, {1, 1}), 0, n);
  auto e = tanh(add(scores, bias));
  if (valid_len < n) {
    std::vector<Scalar> mask(n, Scalar(0));
    for (std::size_t i = valid_len; i < n; ++i) mask[i] = Scalar(-1e30);
    e = add(e, Tensor<Scalar>::from_data({n, 1}, std::move(mask)));
  }
  auto alpha = softmax(e, 0);  // [n x 1]
  return matmul(transpose(primaries.vectors), reshape(alpha, {n}));  // [dim]
}

template <typename Scalar>
Tensor<Scalar> attention_pool(const CapsuleSet<Scalar>& primaries,
                              const AttentionParams<Scalar>& params) {
  return attention_pool(primaries, params, primaries.count);
}

}  // namespace secaps
