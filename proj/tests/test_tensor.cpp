#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "secaps/gradcheck.hpp"
#include "secaps/tensor.hpp"

using secaps::Shape;
using secaps::Tensor;

namespace {

template <typename Scalar>
Tensor<Scalar> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0,
                             double hi = 2.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Scalar> data(secaps::shape_numel(shape));
  for (auto& v : data) v = static_cast<Scalar>(dist(rng));
  return Tensor<Scalar>::from_data(std::move(shape), std::move(data),
                                   requires_grad);
}

// Fixed random readout so any-shaped op output reduces to a scalar with
// nonzero gradient everywhere.
template <typename Scalar>
Tensor<Scalar> readout(const Tensor<Scalar>& t, std::mt19937_64& rng) {
  auto w = random_tensor<Scalar>(t.shape(), rng, -1.0, 1.0, false);
  return secaps::sum_all(secaps::mul(t, w));
}

}  // namespace

TEST_CASE("matmul identity returns its input") {
  auto eye = Tensor<double>::from_data({3, 3},
                                       {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto x = Tensor<double>::from_data({3}, {0.5, -2.25, 3.75});
  auto y = secaps::matmul(eye, x);
  REQUIRE(y.shape() == Shape{3});
  for (std::size_t i = 0; i < 3; ++i) REQUIRE(y.at(i) == x.at(i));
}

TEST_CASE("softmax of equal scores is uniform") {
  auto x = Tensor<double>::from_data({2}, {0.0, 0.0});
  auto y = secaps::softmax(x, 0);
  REQUIRE(y.at(0) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(y.at(1) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("tanh at zero is zero") {
  auto y = secaps::tanh(Tensor<double>::scalar(0.0));
  REQUIRE(y.item() == 0.0);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  secaps::sum_all(x).backward();
  for (double g : x.grad()) REQUIRE(g == 1.0);
}

TEST_CASE("backward of x*x at 3 gives 6") {
  auto x = Tensor<double>::scalar(3.0, true);
  secaps::mul(x, x).backward();
  REQUIRE(x.grad()[0] == Catch::Approx(6.0).margin(1e-12));
}

TEST_CASE("random composite graph matches finite differences") {
  // Four-op composite: tanh(matmul) summed against sigmoid(mul).
  for (unsigned seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = random_tensor<double>({3, 4}, rng);
    auto x = random_tensor<double>({4}, rng);
    auto f = [&] {
      auto h = secaps::tanh(secaps::matmul(a, x));
      auto g = secaps::sigmoid(secaps::mul(x, x));
      return secaps::add(secaps::sum_all(h), secaps::sum_all(g));
    };
    double err = secaps::finite_difference_check<double>(f, {a, x}, 1e-5);
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("finite differences on x squared") {
  auto x = Tensor<double>::scalar(2.0, true);
  auto f = [&] { return secaps::mul(x, x); };
  double err = secaps::finite_difference_check<double>(f, {x}, 1e-5);
  REQUIRE(err < 1e-6);
}

TEST_CASE("finite differences on softmax log-likelihood") {
  std::mt19937_64 rng(7);
  auto logits = random_tensor<double>({5}, rng);
  auto f = [&] {
    auto p = secaps::softmax(logits, 0);
    auto y = secaps::slice(p, 0, 2, 1);
    return secaps::mul_const(secaps::log(y), -1.0);
  };
  double err = secaps::finite_difference_check<double>(f, {logits}, 1e-5);
  REQUIRE(err < 1e-4);
}

TEST_CASE("finite differences report argmax ties as non-differentiable") {
  auto x = Tensor<double>::from_data({2}, {2.0, 2.0}, true);
  auto f = [&] { return secaps::slice(x, 0, secaps::argmax(x), 1); };
  REQUIRE_THROWS_AS(secaps::finite_difference_check<double>(f, {x}, 1e-5),
                    secaps::NonDifferentiablePointError);
}

TEST_CASE("finite differences reject non-deterministic functions") {
  auto x = Tensor<double>::scalar(1.0, true);
  int calls = 0;
  auto f = [&] {
    ++calls;
    return secaps::mul_const(x, 1.0 + 1e-6 * calls);
  };
  REQUIRE_THROWS_AS(secaps::finite_difference_check<double>(f, {x}, 1e-5),
                    secaps::DeterminismError);
}

TEST_CASE("every primitive op passes the gradient check", "[gradients]") {
  // 100 seeded cases per op, 64-bit, relative error < 1e-4.
  const double tol = 1e-4;
  const double h = 1e-5;
  for (unsigned seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(1000 + seed);

    {
      auto a = random_tensor<double>({2, 3}, rng);
      auto b = random_tensor<double>({2, 3}, rng);
      auto f = [&] { return readout(secaps::add(a, b), rng); };
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return f(); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a, b}, h) < tol);
    }
    {
      auto a = random_tensor<double>({2, 3}, rng);
      auto b = random_tensor<double>({2, 3}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::sub(a, b), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a, b}, h) < tol);
    }
    {
      auto a = random_tensor<double>({2, 3}, rng);
      auto b = random_tensor<double>({2, 3}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::mul(a, b), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a, b}, h) < tol);
    }
    {
      auto a = random_tensor<double>({3, 2}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::mul_const(a, -1.7), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({4}, rng, 0.5, 2.5);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::pow_const(a, 2.5), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({2, 2}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::tanh(a), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({2, 2}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::sigmoid(a), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({5}, rng, 0.5, 3.0);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::log(a), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({5}, rng, -1.5, 1.5);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::exp(a), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({3, 4}, rng);
      auto b = random_tensor<double>({4, 2}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::matmul(a, b), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a, b}, h) < tol);
    }
    {
      auto a = random_tensor<double>({3, 4}, rng);
      auto x = random_tensor<double>({4}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::matmul(a, x), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a, x}, h) < tol);
    }
    {
      auto a = random_tensor<double>({2, 4}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::softmax(a, 1), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({2, 3, 2}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::sum(a, 1), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({3, 4}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::mean(a, 0), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({2, 3}, rng);
      auto b = random_tensor<double>({2, 2}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] {
        rng = save;
        return readout(secaps::concat<double>({a, b}, 1), rng);
      };
      REQUIRE(secaps::finite_difference_check<double>(g, {a, b}, h) < tol);
    }
    {
      auto a = random_tensor<double>({3, 4}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::slice(a, 1, 1, 2), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({2, 6}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] {
        rng = save;
        return readout(secaps::reshape(a, {3, 4}), rng);
      };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({3, 4}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::transpose(a), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto a = random_tensor<double>({3, 1, 2}, rng);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::expand(a, 1, 4), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      // Keep fibers away from the norm's kink at zero.
      auto a = random_tensor<double>({3, 3}, rng, 0.5, 2.0);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::l2_norm(a, 1), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
    {
      auto table = random_tensor<double>({5, 3}, rng);
      std::vector<std::size_t> ids{4, 0, 2, 0};
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::gather_rows(table, ids), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {table}, h) < tol);
    }
    {
      auto a = random_tensor<double>({4}, rng, -0.9, 0.9);
      std::mt19937_64 save = rng;
      auto g = [&] { rng = save; return readout(secaps::clamp(a, -1.0, 1.0), rng); };
      REQUIRE(secaps::finite_difference_check<double>(g, {a}, h) < tol);
    }
  }
}

namespace {

// Entries with magnitude in [lo_mag, hi_mag]; sign random unless
// positive_only. Keeps float32 difference quotients well above roundoff.
template <typename Scalar>
Tensor<Scalar> conditioned_tensor(Shape shape, std::mt19937_64& rng,
                                  double lo_mag, double hi_mag,
                                  bool positive_only = false) {
  std::uniform_real_distribution<double> mag(lo_mag, hi_mag);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<Scalar> data(secaps::shape_numel(shape));
  for (auto& v : data) {
    double m = mag(rng);
    if (!positive_only && coin(rng)) m = -m;
    v = static_cast<Scalar>(m);
  }
  return Tensor<Scalar>::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

TEST_CASE("32-bit gradients of every primitive stay within 1e-2") {
  const float tol = 1e-2f;
  const float h = 1e-2f;
  using T = Tensor<float>;
  for (unsigned seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(33 + seed);

    auto check = [&](auto&& fn, std::vector<T> params) {
      REQUIRE(secaps::finite_difference_check<float>(fn, std::move(params), h) <
              tol);
    };

    {
      auto a = conditioned_tensor<float>({2, 3}, rng, 0.5, 1.5);
      auto b = conditioned_tensor<float>({2, 3}, rng, 0.5, 1.5);
      check([&] { return secaps::sum_all(secaps::add(a, b)); }, {a, b});
      check([&] { return secaps::sum_all(secaps::sub(a, b)); }, {a, b});
      check([&] { return secaps::sum_all(secaps::mul(a, b)); }, {a, b});
      check([&] { return secaps::sum_all(secaps::mul_const(a, -1.7f)); }, {a});
      check([&] { return secaps::sum_all(secaps::add_const(a, 0.3f)); }, {a});
      check([&] { return secaps::mean_all(secaps::concat<float>({a, b}, 0)); },
            {a, b});
      check([&] { return secaps::sum_all(secaps::slice(a, 1, 0, 2)); }, {a});
      check([&] { return secaps::sum_all(secaps::reshape(a, {6})); }, {a});
      check([&] { return secaps::sum_all(secaps::transpose(a)); }, {a});
      check([&] { return secaps::sum_all(secaps::sum(a, 1)); }, {a});
      check([&] { return secaps::sum_all(secaps::mean(a, 0)); }, {a});
    }
    {
      auto x = conditioned_tensor<float>({4}, rng, 0.3, 1.2);
      check([&] { return secaps::sum_all(secaps::tanh(x)); }, {x});
      check([&] { return secaps::sum_all(secaps::sigmoid(x)); }, {x});
      check([&] { return secaps::sum_all(secaps::exp(x)); }, {x});
      check([&] { return secaps::sum_all(secaps::clamp(x, -2.0f, 2.0f)); }, {x});
    }
    {
      auto p = conditioned_tensor<float>({4}, rng, 0.5, 2.5, true);
      check([&] { return secaps::sum_all(secaps::log(p)); }, {p});
      check([&] { return secaps::sum_all(secaps::pow_const(p, 2.5f)); }, {p});
      check([&] { return secaps::sum_all(secaps::l2_norm(p, 0)); }, {p});
    }
    {
      auto a = conditioned_tensor<float>({3, 4}, rng, 0.5, 1.5, true);
      auto b = conditioned_tensor<float>({4, 2}, rng, 0.5, 1.5, true);
      auto x = conditioned_tensor<float>({4}, rng, 0.5, 1.5, true);
      check([&] { return secaps::sum_all(secaps::matmul(a, b)); }, {a, b});
      check([&] { return secaps::sum_all(secaps::matmul(a, x)); }, {a, x});
      check([&] { return secaps::sum_all(secaps::gather_rows(a, {2, 0, 2})); },
            {a});
      check([&] { return secaps::sum_all(secaps::expand(secaps::reshape(x, {1, 4}), 0, 3)); },
            {x});
    }
    {
      // Non-uniform readout; a constant one would zero the softmax gradient.
      auto x = conditioned_tensor<float>({3}, rng, 0.0, 0.8);
      auto w = T::from_data({3}, {2.0f, 1.0f, 1.0f});
      check([&] { return secaps::sum_all(secaps::mul(secaps::softmax(x, 0), w)); },
            {x});
    }
  }
}

TEST_CASE("softmax output is positive and normalized") {
  for (unsigned seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(500 + seed);
    auto a = random_tensor<double>({4, 6}, rng, -30.0, 30.0, false);
    auto y = secaps::softmax(a, 1);
    for (std::size_t i = 0; i < 4; ++i) {
      double row_sum = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        REQUIRE(y.at(i, j) > 0.0);
        row_sum += y.at(i, j);
      }
      REQUIRE(row_sum == Catch::Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("fan-out gradient equals the sum of branch gradients") {
  std::mt19937_64 rng(99);
  auto make_x = [&rng] { return random_tensor<double>({4}, rng); };
  auto x = make_x();
  auto x_f = x.clone_leaf();
  auto x_g = x.clone_leaf();

  auto f_branch = [](const Tensor<double>& t) {
    return secaps::sum_all(secaps::tanh(t));
  };
  auto g_branch = [](const Tensor<double>& t) {
    return secaps::sum_all(secaps::mul(t, t));
  };

  secaps::add(f_branch(x), g_branch(x)).backward();
  f_branch(x_f).backward();
  g_branch(x_g).backward();

  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(x.grad()[i] ==
            Catch::Approx(x_f.grad()[i] + x_g.grad()[i]).margin(1e-12));
  }
}

TEST_CASE("same seed produces bit-identical values and gradients") {
  auto run = [](unsigned seed) {
    std::mt19937_64 rng(seed);
    auto a = random_tensor<double>({4, 4}, rng);
    auto x = random_tensor<double>({4}, rng);
    auto y = secaps::sum_all(secaps::sigmoid(secaps::matmul(a, x)));
    y.backward();
    std::vector<double> out(y.values().begin(), y.values().end());
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    return out;
  };
  REQUIRE(run(42) == run(42));
}

TEST_CASE("shape mismatch names the op and both shapes") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({3, 3});
  try {
    secaps::add(a, b);
    FAIL("expected ShapeError");
  } catch (const secaps::ShapeError& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("add") != std::string::npos);
    REQUIRE(msg.find("2x3") != std::string::npos);
    REQUIRE(msg.find("3x3") != std::string::npos);
  }
}

TEST_CASE("non-finite intermediates raise a numeric error") {
  auto x = Tensor<double>::scalar(1000.0);
  REQUIRE_THROWS_AS(secaps::exp(x), secaps::NumericError);
  REQUIRE_THROWS_AS(secaps::log(Tensor<double>::scalar(-1.0)),
                    secaps::NumericError);
}

TEST_CASE("backward requires a scalar root") {
  auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
  REQUIRE_THROWS_AS(secaps::mul(x, x).backward(), secaps::ContractError);
}

TEST_CASE("backward without gradient tracking is a state error") {
  auto x = Tensor<double>::scalar(2.0);
  auto y = secaps::mul(x, x);
  REQUIRE_THROWS_AS(y.backward(), secaps::StateError);
}

TEST_CASE("no-grad guard suppresses graph recording") {
  auto x = Tensor<double>::scalar(2.0, true);
  secaps::NoGradGuard guard;
  auto y = secaps::mul(x, x);
  REQUIRE_FALSE(y.requires_grad());
}

TEST_CASE("deep chain tears down without recursion blowup") {
  auto x = Tensor<double>::scalar(0.5, true);
  auto y = x;
  for (int i = 0; i < 200000; ++i) y = secaps::add_const(y, 0.0);
  REQUIRE(y.item() == 0.5);
  // Destruction of y's chain happens at scope exit.
}
