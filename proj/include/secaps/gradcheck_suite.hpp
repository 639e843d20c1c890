#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "secaps/attention.hpp"
#include "secaps/capsule.hpp"
#include "secaps/gradcheck.hpp"
#include "secaps/lstm.hpp"
#include "secaps/model.hpp"
#include "secaps/tensor.hpp"

namespace secaps {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed = false;
};

namespace detail {

template <typename Fn>
GradCheckResult run_grad_case(const std::string& name, double tolerance,
                              unsigned seeds, Fn&& one_seed) {
  GradCheckResult result{name, 0.0, tolerance, false};
  for (unsigned seed = 0; seed < seeds; ++seed) {
    result.max_rel_error = std::max(result.max_rel_error, one_seed(seed));
  }
  result.passed = result.max_rel_error < tolerance;
  return result;
}

template <typename Scalar>
Tensor<Scalar> suite_random(Shape shape, std::mt19937_64& rng, double lo,
                            double hi, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Scalar> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<Scalar>(dist(rng));
  return Tensor<Scalar>::from_data(std::move(shape), std::move(data),
                                   requires_grad);
}

}  // namespace detail

// Finite-difference validation of every differentiable op, the capsule and
// sequence primitives, and the end-to-end tiny model. Op checks run
// `seeds_per_op` seeded random instances each at 1e-4 relative tolerance
// (64-bit); the end-to-end model check runs at 1e-3.
inline std::vector<GradCheckResult> run_gradient_suite(
    unsigned seeds_per_op = 100) {
  using T = Tensor<double>;
  constexpr double kOpTol = 1e-4;
  constexpr double kStep = 1e-5;
  std::vector<GradCheckResult> results;

  auto readout = [](const T& t, std::mt19937_64& rng) {
    auto w = detail::suite_random<double>(t.shape(), rng, -1.0, 1.0, false);
    return sum_all(mul(t, w));
  };

  auto op_case = [&](const std::string& name, auto&& build) {
    results.push_back(detail::run_grad_case(
        name, kOpTol, seeds_per_op, [&](unsigned seed) {
          std::mt19937_64 rng(0x5ecaf5 + 1000 * seed);
          return build(rng);
        }));
  };

  op_case("add", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({2, 3}, rng, -2, 2);
    auto b = detail::suite_random<double>({2, 3}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(add(a, b), r); };
    return finite_difference_check<double>(f, {a, b}, kStep);
  });
  op_case("sub", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({2, 3}, rng, -2, 2);
    auto b = detail::suite_random<double>({2, 3}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(sub(a, b), r); };
    return finite_difference_check<double>(f, {a, b}, kStep);
  });
  op_case("mul", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({2, 3}, rng, -2, 2);
    auto b = detail::suite_random<double>({2, 3}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(mul(a, b), r); };
    return finite_difference_check<double>(f, {a, b}, kStep);
  });
  op_case("mul_const", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({4}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(mul_const(a, -1.3), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("add_const", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({4}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(add_const(a, 0.7), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("pow_const", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({4}, rng, 0.5, 2.5);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(pow_const(a, 2.5), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("tanh", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({2, 2}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(tanh(a), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("sigmoid", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({2, 2}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(sigmoid(a), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("log", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({4}, rng, 0.5, 3.0);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(log(a), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("exp", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({4}, rng, -1.5, 1.5);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(exp(a), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("clamp", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({4}, rng, -0.9, 0.9);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(clamp(a, -1.0, 1.0), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("matmul", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({3, 4}, rng, -1.5, 1.5);
    auto b = detail::suite_random<double>({4, 2}, rng, -1.5, 1.5);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(matmul(a, b), r); };
    return finite_difference_check<double>(f, {a, b}, kStep);
  });
  op_case("matmul_vec", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({3, 4}, rng, -1.5, 1.5);
    auto x = detail::suite_random<double>({4}, rng, -1.5, 1.5);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(matmul(a, x), r); };
    return finite_difference_check<double>(f, {a, x}, kStep);
  });
  op_case("softmax", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({2, 4}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(softmax(a, 1), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("sum_axis", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({2, 3, 2}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(sum(a, 1), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("mean_axis", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({3, 4}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(mean(a, 0), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("concat", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({2, 3}, rng, -2, 2);
    auto b = detail::suite_random<double>({2, 2}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] {
      std::mt19937_64 r = save;
      return readout(concat<double>({a, b}, 1), r);
    };
    return finite_difference_check<double>(f, {a, b}, kStep);
  });
  op_case("slice", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({3, 4}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(slice(a, 1, 1, 2), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("reshape", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({2, 6}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(reshape(a, {3, 4}), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("transpose", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({3, 4}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(transpose(a), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("expand", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({3, 1, 2}, rng, -2, 2);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(expand(a, 1, 4), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("l2_norm", [&](std::mt19937_64& rng) {
    auto a = detail::suite_random<double>({3, 3}, rng, 0.5, 2.0);
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(l2_norm(a, 1), r); };
    return finite_difference_check<double>(f, {a}, kStep);
  });
  op_case("gather_rows", [&](std::mt19937_64& rng) {
    auto table = detail::suite_random<double>({5, 3}, rng, -2, 2);
    std::vector<std::size_t> ids{4, 0, 2, 0};
    std::mt19937_64 save = rng;
    auto f = [&] { std::mt19937_64 r = save; return readout(gather_rows(table, ids), r); };
    return finite_difference_check<double>(f, {table}, kStep);
  });
  op_case("squash", [&](std::mt19937_64& rng) {
    auto s = detail::suite_random<double>({4}, rng, 0.3, 1.5);
    auto w = detail::suite_random<double>({4}, rng, -1, 1, false);
    auto f = [&] { return sum_all(mul(squash(s), w)); };
    return finite_difference_check<double>(f, {s}, kStep);
  });
  op_case("routing_final_path", [&](std::mt19937_64& rng) {
    auto pred = detail::suite_random<double>({3, 2, 3}, rng, -1.5, 1.5);
    auto [out, state] = dynamic_route(pred.detach(), 3);
    auto couplings = state.couplings;
    auto w = detail::suite_random<double>({2, 3}, rng, -1, 1, false);
    auto f = [&] {
      auto [v, s] = route_fixed_couplings(pred, couplings);
      return sum_all(mul(v, w));
    };
    return finite_difference_check<double>(f, {pred}, kStep);
  });
  op_case("softmax_log_likelihood", [&](std::mt19937_64& rng) {
    auto logits = detail::suite_random<double>({5}, rng, -2, 2);
    auto f = [&] {
      return mul_const(log(slice(softmax(logits, 0), 0, 2, 1)), -1.0);
    };
    return finite_difference_check<double>(f, {logits}, kStep);
  });

  // Sequence primitives get fewer seeds; they cost a full recurrence each.
  const unsigned seq_seeds = std::max(1u, seeds_per_op / 10);
  results.push_back(detail::run_grad_case(
      "lstm_forward", kOpTol, seq_seeds, [&](unsigned seed) {
        std::mt19937_64 rng(0xbeef + seed);
        auto params = LstmParams<double>::init(3, 4, rng);
        auto inputs = detail::suite_random<double>({3, 3}, rng, -1, 1);
        auto w = detail::suite_random<double>({3, 4}, rng, -1, 1, false);
        auto f = [&] {
          auto states =
              lstm_forward(CapsuleSet<double>::from_tensor(inputs), params);
          return sum_all(mul(states.vectors, w));
        };
        return finite_difference_check<double>(
            f,
            {params.w_input, params.w_forget, params.w_output,
             params.w_candidate, params.b_input, params.b_forget,
             params.b_output, params.b_candidate, inputs},
            kStep);
      }));
  results.push_back(detail::run_grad_case(
      "attention_pool", kOpTol, seq_seeds, [&](unsigned seed) {
        std::mt19937_64 rng(0xfeed + seed);
        auto params = AttentionParams<double>::init(3, rng);
        auto inputs = detail::suite_random<double>({5, 3}, rng, -1, 1);
        auto w = detail::suite_random<double>({3}, rng, -1, 1, false);
        auto f = [&] {
          auto c = attention_pool(CapsuleSet<double>::from_tensor(inputs), params);
          return sum_all(mul(c, w));
        };
        return finite_difference_check<double>(f, {params.w, params.b, inputs},
                                               kStep);
      }));

  // End-to-end: tiny config, one routing iteration (couplings are then
  // constants and the composition is smooth), parameters scaled into
  // squash's responsive range.
  results.push_back(detail::run_grad_case(
      "model_end_to_end", 1e-3, 2, [&](unsigned seed) {
        ModelConfig config;
        config.vocab_size = 20;
        config.embed_dim = 8;
        config.max_len = 16;
        config.layer1 = {3, 4, 1, 6};
        config.layer2 = {3, 4, 1, 6};
        config.fc1_dim = 16;
        config.fc2_dim = 8;
        config.num_classes = 4;
        config.seed = 7 + seed;
        auto params = ModelParams<double>::init(config);
        for (auto& [name, tensor] : params.named_parameters()) {
          auto t = tensor;
          for (auto& v : t.mutable_values()) v *= 4.0;
        }
        std::mt19937_64 rng(0xace + seed);
        std::uniform_int_distribution<std::size_t> tok(0, config.vocab_size - 1);
        std::vector<std::size_t> tokens(5);
        for (auto& t : tokens) t = tok(rng);
        auto f = [&] {
          auto probs = forward<double>(tokens, params, config);
          auto total = focal_loss(probs, std::size_t{0}, 2.0, 0.25);
          for (std::size_t cls = 1; cls < config.num_classes; ++cls)
            total = add(total, focal_loss(probs, cls, 2.0, 0.25));
          return total;
        };
        std::vector<Tensor<double>> leaves;
        for (auto& [name, tensor] : params.named_parameters())
          leaves.push_back(tensor);
        return finite_difference_check<double>(f, leaves, kStep);
      }));

  return results;
}

}  // namespace secaps
