#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "secaps/attention.hpp"
#include "secaps/gradcheck.hpp"
#include "secaps/lstm.hpp"

using secaps::AttentionParams;
using secaps::CapsuleSet;
using secaps::LstmParams;
using secaps::Tensor;

namespace {

std::vector<double> random_values(std::size_t count, std::mt19937_64& rng,
                                  double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> out(count);
  for (auto& v : out) v = dist(rng);
  return out;
}

LstmParams<double> zero_lstm(std::size_t d_in, std::size_t d_h) {
  LstmParams<double> p;
  p.input_dim = d_in;
  p.hidden_dim = d_h;
  p.w_input = Tensor<double>::zeros({d_h, d_in + d_h}, true);
  p.w_forget = Tensor<double>::zeros({d_h, d_in + d_h}, true);
  p.w_output = Tensor<double>::zeros({d_h, d_in + d_h}, true);
  p.w_candidate = Tensor<double>::zeros({d_h, d_in + d_h}, true);
  p.b_input = Tensor<double>::zeros({d_h}, true);
  p.b_forget = Tensor<double>::zeros({d_h}, true);
  p.b_output = Tensor<double>::zeros({d_h}, true);
  p.b_candidate = Tensor<double>::zeros({d_h}, true);
  return p;
}

CapsuleSet<double> make_sequence(std::size_t n, std::size_t d,
                                 std::vector<double> data) {
  return CapsuleSet<double>(n, d, Tensor<double>::from_data({n, d}, std::move(data)));
}

}  // namespace

TEST_CASE("all-zero LSTM maps any input to zero hidden states") {
  auto params = zero_lstm(3, 4);
  std::mt19937_64 rng(1);
  auto inputs = make_sequence(5, 3, random_values(15, rng));
  auto states = secaps::lstm_forward(inputs, params);
  for (double v : states.vectors.values()) REQUIRE(v == 0.0);
}

TEST_CASE("LSTM hidden states are bounded by one in magnitude") {
  std::mt19937_64 rng(2);
  auto params = LstmParams<double>::init(4, 6, rng);
  for (int t = 0; t < 10; ++t) {
    auto inputs = make_sequence(8, 4, random_values(32, rng, -5.0, 5.0));
    auto states = secaps::lstm_forward(inputs, params);
    for (double v : states.vectors.values()) REQUIRE(std::abs(v) < 1.0);
  }
}

TEST_CASE("one-step scalar LSTM matches the hand-evaluated recurrence") {
  // 1-dim LSTM, weights 1, biases 0, x=1: every gate preactivation is 1.
  LstmParams<double> p;
  p.input_dim = 1;
  p.hidden_dim = 1;
  p.w_input = Tensor<double>::from_data({1, 2}, {1.0, 1.0}, true);
  p.w_forget = Tensor<double>::from_data({1, 2}, {1.0, 1.0}, true);
  p.w_output = Tensor<double>::from_data({1, 2}, {1.0, 1.0}, true);
  p.w_candidate = Tensor<double>::from_data({1, 2}, {1.0, 1.0}, true);
  p.b_input = Tensor<double>::zeros({1}, true);
  p.b_forget = Tensor<double>::zeros({1}, true);
  p.b_output = Tensor<double>::zeros({1}, true);
  p.b_candidate = Tensor<double>::zeros({1}, true);

  auto states = secaps::lstm_forward(make_sequence(1, 1, {1.0}), p);

  // Scalar oracle evaluated right here.
  const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
  const double c1 = sig1 * std::tanh(1.0);
  const double h1 = sig1 * std::tanh(c1);
  REQUIRE(h1 == Catch::Approx(0.3696063529).margin(1e-9));  // frozen oracle value
  REQUIRE(states.vectors.at(0, 0) == Catch::Approx(h1).margin(1e-12));
}

TEST_CASE("LSTM is causal: truncating the suffix preserves the prefix") {
  std::mt19937_64 rng(3);
  auto params = LstmParams<double>::init(3, 5, rng);
  auto data = random_values(8 * 3, rng);
  auto full = secaps::lstm_forward(make_sequence(8, 3, data), params);
  std::vector<double> prefix_data(data.begin(), data.begin() + 5 * 3);
  auto prefix = secaps::lstm_forward(make_sequence(5, 3, prefix_data), params);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t k = 0; k < 5; ++k)
      REQUIRE(full.vectors.at(t, k) == prefix.vectors.at(t, k));
}

TEST_CASE("LSTM gradients pass the finite-difference check") {
  std::mt19937_64 rng(4);
  auto params = LstmParams<double>::init(3, 4, rng);
  auto input_tensor = Tensor<double>::from_data({3, 3}, random_values(9, rng), true);
  auto w = Tensor<double>::from_data({3, 4}, random_values(12, rng));
  auto f = [&] {
    auto states = secaps::lstm_forward(CapsuleSet<double>::from_tensor(input_tensor),
                                       params);
    return secaps::sum_all(secaps::mul(states.vectors, w));
  };
  std::vector<Tensor<double>> leaves{
      params.w_input, params.w_forget,  params.w_output, params.w_candidate,
      params.b_input, params.b_forget,  params.b_output, params.b_candidate,
      input_tensor};
  REQUIRE(secaps::finite_difference_check<double>(f, leaves, 1e-5) < 1e-4);
}

TEST_CASE("LSTM rejects mismatched input dimensions") {
  auto params = zero_lstm(3, 4);
  auto inputs = make_sequence(2, 2, {1, 2, 3, 4});
  REQUIRE_THROWS_AS(secaps::lstm_forward(inputs, params), secaps::ShapeError);
}

TEST_CASE("attention over identical positions is the uniform average") {
  std::mt19937_64 rng(5);
  auto params = AttentionParams<double>::init(3, rng);
  std::vector<double> data;
  std::vector<double> one_row = random_values(3, rng);
  for (int i = 0; i < 4; ++i) data.insert(data.end(), one_row.begin(), one_row.end());
  auto c = secaps::attention_pool(make_sequence(4, 3, data), params);
  for (std::size_t k = 0; k < 3; ++k)
    REQUIRE(c.at(k) == Catch::Approx(one_row[k]).margin(1e-12));
}

TEST_CASE("attention over a single position returns it") {
  std::mt19937_64 rng(6);
  auto params = AttentionParams<double>::init(4, rng);
  auto data = random_values(4, rng);
  auto c = secaps::attention_pool(make_sequence(1, 4, data), params);
  for (std::size_t k = 0; k < 4; ++k)
    REQUIRE(c.at(k) == Catch::Approx(data[k]).margin(1e-12));
}

TEST_CASE("attention matches a straight-line reimplementation") {
  std::mt19937_64 rng(7);
  auto params = AttentionParams<double>::init(4, rng);
  auto data = random_values(5 * 4, rng);
  auto c = secaps::attention_pool(make_sequence(5, 4, data), params);

  // Oracle: direct loops over the published formulas.
  std::vector<double> e(5);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = params.b.at(0);
    for (std::size_t k = 0; k < 4; ++k) s += params.w.at(0, k) * data[i * 4 + k];
    e[i] = std::tanh(s);
  }
  double denom = 0;
  std::vector<double> alpha(5);
  for (std::size_t i = 0; i < 5; ++i) denom += std::exp(e[i]);
  for (std::size_t i = 0; i < 5; ++i) alpha[i] = std::exp(e[i]) / denom;
  for (std::size_t k = 0; k < 4; ++k) {
    double expected = 0;
    for (std::size_t i = 0; i < 5; ++i) expected += alpha[i] * data[i * 4 + k];
    REQUIRE(std::abs(c.at(k) - expected) < 1e-12);
  }
}

TEST_CASE("attention weights are positive, normalized, and shift-invariant") {
  std::mt19937_64 rng(8);
  auto scores = Tensor<double>::from_data({6}, random_values(6, rng, -2.0, 2.0));
  auto alpha = secaps::softmax(scores, 0);
  double total = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    REQUIRE(alpha.at(i) > 0.0);
    total += alpha.at(i);
  }
  REQUIRE(total == Catch::Approx(1.0).margin(1e-6));
  auto shifted = secaps::softmax(secaps::add_const(scores, 17.5), 0);
  for (std::size_t i = 0; i < 6; ++i)
    REQUIRE(std::abs(alpha.at(i) - shifted.at(i)) < 1e-10);
}

TEST_CASE("masked attention ignores padded positions") {
  std::mt19937_64 rng(9);
  auto params = AttentionParams<double>::init(3, rng);
  auto data = random_values(4 * 3, rng);
  auto c_full3 = secaps::attention_pool(make_sequence(3, 3,
      std::vector<double>(data.begin(), data.begin() + 9)), params);

  // Same three positions plus one masked-out garbage row.
  auto padded = data;
  padded[9] = 99.0;
  padded[10] = -99.0;
  padded[11] = 42.0;
  auto c_masked = secaps::attention_pool(make_sequence(4, 3, padded), params, 3);
  for (std::size_t k = 0; k < 3; ++k)
    REQUIRE(c_masked.at(k) == Catch::Approx(c_full3.at(k)).margin(1e-12));
}

TEST_CASE("attention gradients pass the finite-difference check") {
  std::mt19937_64 rng(10);
  auto params = AttentionParams<double>::init(3, rng);
  auto inputs = Tensor<double>::from_data({5, 3}, random_values(15, rng), true);
  auto w = Tensor<double>::from_data({3}, random_values(3, rng));
  auto f = [&] {
    auto c = secaps::attention_pool(CapsuleSet<double>::from_tensor(inputs), params);
    return secaps::sum_all(secaps::mul(c, w));
  };
  REQUIRE(secaps::finite_difference_check<double>(
              f, {params.w, params.b, inputs}, 1e-5) < 1e-4);
}
