#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "secaps/capsule.hpp"
#include "secaps/errors.hpp"
#include "secaps/tensor.hpp"

namespace secaps {

// Gate parameters of a unidirectional LSTM. Each gate applies a
// [hidden x (input + hidden)] matrix to the concatenated (x_t, h_{t-1})
// plus a bias.
template <typename Scalar>
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor<Scalar> w_input, w_forget, w_output, w_candidate;
  Tensor<Scalar> b_input, b_forget, b_output, b_candidate;

  // Weights drawn uniformly from [-k, k] with k = 1/sqrt(hidden); the forget
  // gate bias starts at 1 so early training does not flush the cell state.
  static LstmParams init(std::size_t input_dim, std::size_t hidden_dim,
                         std::mt19937_64& rng) {
    LstmParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    std::uniform_real_distribution<double> dist(-k, k);
    auto weight = [&] {
      std::vector<Scalar> data(hidden_dim * (input_dim + hidden_dim));
      for (auto& v : data) v = static_cast<Scalar>(dist(rng));
      return Tensor<Scalar>::from_data({hidden_dim, input_dim + hidden_dim},
                                       std::move(data), true);
    };
    auto bias = [&](Scalar fill) {
      return Tensor<Scalar>::filled({hidden_dim}, fill, true);
    };
    p.w_input = weight();
    p.w_forget = weight();
    p.w_output = weight();
    p.w_candidate = weight();
    p.b_input = bias(Scalar(0));
    p.b_forget = bias(Scalar(1));
    p.b_output = bias(Scalar(0));
    p.b_candidate = bias(Scalar(0));
    return p;
  }
};

// Standard LSTM recurrence over a sequence of capsules, h_0 = c_0 = 0:
//   i,f,o = sigmoid(W [x_t; h_{t-1}] + b),  g = tanh(W_g [x_t; h_{t-1}] + b_g)
//   c_t = f * c_{t-1} + i * g,              h_t = o * tanh(c_t)
// Returns the hidden states as a capsule set of the same length.
template <typename Scalar>
CapsuleSet<Scalar> lstm_forward(const CapsuleSet<Scalar>& inputs,
                                const LstmParams<Scalar>& params) {
  if (inputs.dim != params.input_dim) {
    throw ShapeError("lstm_forward: input dim " + std::to_string(inputs.dim) +
                     " does not match parameter dim " +
                     std::to_string(params.input_dim));
  }
  const std::size_t n = inputs.count;
  const std::size_t hidden = params.hidden_dim;
  auto h = Tensor<Scalar>::zeros({hidden});
  auto c = Tensor<Scalar>::zeros({hidden});
  std::vector<Tensor<Scalar>> states;
  states.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto xh = concat<Scalar>({row(inputs.vectors, t), h}, 0);
    auto gate_i = sigmoid(add(matmul(params.w_input, xh), params.b_input));
    auto gate_f = sigmoid(add(matmul(params.w_forget, xh), params.b_forget));
    auto gate_o = sigmoid(add(matmul(params.w_output, xh), params.b_output));
    auto cand = tanh(add(matmul(params.w_candidate, xh), params.b_candidate));
    c = add(mul(gate_f, c), mul(gate_i, cand));
    h = mul(gate_o, tanh(c));
    states.push_back(reshape(h, {1, hidden}));
  }
  return CapsuleSet<Scalar>(n, hidden, concat(states, 0));
}

}  // namespace secaps
