#include <doctest.h>

#include <cmath>
#include <random>

#include "cellcount/errors.hpp"
#include "cellcount/kernels.hpp"
#include "cellcount/tensor.hpp"
#include "oracles.hpp"

using namespace cellcount;
using oracle::check_gradients;
using oracle::project;
using oracle::random_like;

TEST_CASE("matmul of a 2x2 by a column of ones sums the rows") {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 1}, {1, 1});
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.at(0) == 3.0);
  CHECK(c.at(1) == 7.0);
}

TEST_CASE("identity times M is M") {
  auto id = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {2.5, -1, 0.5, 7});
  auto r = matmul(id, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.at(i) == m.at(i));
}

TEST_CASE("relu clamps negatives and add of zero is identity") {
  auto r = relu(Tensor::from({3}, {-1, 0, 2}));
  CHECK(r.at(0) == 0.0);
  CHECK(r.at(1) == 0.0);
  CHECK(r.at(2) == 2.0);
  auto x = Tensor::from({3}, {0.1, -2, 3});
  auto y = add(x, Tensor::zeros({3}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("gradient of sum(x*x) at [1,2] is [2,4]") {
  auto x = Tensor::from({2}, {1, 2}, true);
  sum(mul(x, x)).backward();
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("gradient of sum is all ones") {
  auto x = random_like({3, 2}, 9, true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("softmax of equal logits is uniform and of [1000,0] does not overflow") {
  auto u = softmax_lastdim(Tensor::from({1, 3}, {0, 0, 0}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3.0));
  auto s = softmax_lastdim(Tensor::from({1, 2}, {1000, 0}));
  CHECK(s.at(0) == doctest::Approx(1.0));
  CHECK(s.at(1) == doctest::Approx(0.0));
}

TEST_CASE("mse is zero on equal inputs and 5 for [0,0] against [1,3]") {
  auto p = Tensor::from({3}, {1, 2, 3});
  CHECK(mse_loss(p, p).item() == 0.0);
  CHECK(mse_loss(Tensor::from({2}, {0, 0}), Tensor::from({2}, {1, 3})).item() == doctest::Approx(5.0));
}

TEST_CASE("single linear layer gradient matches 2(wx - y)x/n") {
  auto w = Tensor::from({1, 1}, {0.7}, true);
  auto x = Tensor::from({3, 1}, {1.0, -2.0, 0.5});
  auto y = Tensor::from({3, 1}, {2.0, 1.0, -1.0});
  mse_loss(matmul(x, w), y).backward();
  double expect = 0.0;
  for (std::size_t i = 0; i < 3; ++i) expect += 2.0 * (0.7 * x.at(i) - y.at(i)) * x.at(i) / 3.0;
  CHECK(w.grad()[0] == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("same inputs give bit-identical values and gradients") {
  auto run = [] {
    auto a = random_like({5, 6}, 31, true);
    auto b = random_like({6, 4}, 32, true);
    auto loss = project(softmax_lastdim(gelu(matmul(a, b))), 33);
    loss.backward();
    std::vector<double> out{loss.item()};
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("shape mismatches raise ShapeError") {
  auto a = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(reshape(a, {4}), ShapeError);
  CHECK_THROWS_AS(slice_cols(a, 2, 2), ShapeError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(linear(a, Tensor::zeros({3, 4}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("backward needs a single-element loss") {
  auto a = Tensor::full({2}, 1.0, true);
  CHECK_THROWS_AS(scale(a, 2.0).backward(), ParameterError);
}

TEST_CASE("leaf gradients accumulate until zero_grad") {
  auto x = Tensor::scalar(3.0, true);
  auto y = mul(x, x);
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0));
  x.zero_grad();
  mul(x, x).backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("a tensor used twice receives both contributions") {
  auto x = Tensor::from({2}, {1.5, -2.0}, true);
  sum(add(mul(x, x), scale(x, 3.0))).backward();
  CHECK(x.grad()[0] == doctest::Approx(2 * 1.5 + 3));
  CHECK(x.grad()[1] == doctest::Approx(2 * -2.0 + 3));
}

TEST_CASE("no-grad guard records nothing") {
  auto x = Tensor::full({2}, 1.0, true);
  Tensor y;
  {
    NoGradGuard g;
    y = scale(x, 2.0);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  auto x = Tensor::from({2, 3}, {1000, 1001, 1002, -5, 0, 5});
  auto s = softmax_lastdim(x);
  for (std::size_t r = 0; r < 2; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(std::isfinite(s.at(r * 3 + c)));
      total += s.at(r * 3 + c);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
  auto x = random_like({4, 8}, 7, false, -3.0, 5.0);
  auto y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}), 1e-12);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 8; ++c) m += y.at(r * 8 + c);
    m /= 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y.at(r * 8 + c) - m) * (y.at(r * 8 + c) - m);
    v /= 8;
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(v - 1.0) < 1e-9);
  }
}

TEST_CASE("gelu matches its tanh form at a few points") {
  auto x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  auto y = gelu(x);
  auto ref = [](double v) {
    return 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
  };
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(ref(x.at(i))).epsilon(1e-14));
}

TEST_CASE("finite differences agree with every op's backward rule") {
  const double tol = 1e-4;
  auto a = random_like({3, 4}, 1, true);
  auto b = random_like({4, 5}, 2, true);
  auto c = random_like({3, 4}, 3, true);
  auto bias = random_like({5}, 4, true);
  auto gain = random_like({4}, 5, true, 0.5, 1.5);
  auto beta = random_like({4}, 6, true);
  // keep relu inputs away from the kink
  auto off = Tensor::from({2, 3}, {0.7, -0.4, 1.2, -0.9, 0.3, -1.1}, true);

  SUBCASE("matmul") { CHECK(check_gradients({a, b}, [&] { return project(matmul(a, b), 10); }).max_rel_error < tol); }
  SUBCASE("transpose") { CHECK(check_gradients({a}, [&] { return project(transpose(a), 11); }).max_rel_error < tol); }
  SUBCASE("reshape") { CHECK(check_gradients({a}, [&] { return project(reshape(a, {2, 6}), 12); }).max_rel_error < tol); }
  SUBCASE("add sub mul") {
    CHECK(check_gradients({a, c}, [&] { return project(mul(add(a, c), sub(a, c)), 13); }).max_rel_error < tol);
  }
  SUBCASE("scalar broadcast") {
    auto s = Tensor::scalar(0.8, true);
    CHECK(check_gradients({a, s}, [&] { return project(mul(a, s), 14); }).max_rel_error < tol);
  }
  SUBCASE("add_scalar and scale") {
    CHECK(check_gradients({a}, [&] { return project(scale(add_scalar(a, 0.3), -1.7), 15); }).max_rel_error < tol);
  }
  SUBCASE("relu") { CHECK(check_gradients({off}, [&] { return project(relu(off), 16); }).max_rel_error < tol); }
  SUBCASE("gelu") { CHECK(check_gradients({a}, [&] { return project(gelu(a), 17); }).max_rel_error < tol); }
  SUBCASE("linear") {
    CHECK(check_gradients({a, b, bias}, [&] { return project(linear(a, b, bias), 18); }).max_rel_error < tol);
  }
  SUBCASE("softmax") { CHECK(check_gradients({a}, [&] { return project(softmax_lastdim(a), 19); }).max_rel_error < tol); }
  SUBCASE("layer_norm") {
    CHECK(check_gradients({a, gain, beta}, [&] { return project(layer_norm(a, gain, beta), 20); }).max_rel_error < tol);
  }
  SUBCASE("slice and concat") {
    CHECK(check_gradients({a, c}, [&] {
            return project(concat_cols({slice_cols(a, 1, 2), c, slice_cols(a, 0, 1)}), 21);
          }).max_rel_error < tol);
  }
  SUBCASE("sum mean mean_rows") {
    CHECK(check_gradients({a}, [&] { return add(mul(sum(a), mean(a)), project(mean_rows(a), 22)); }).max_rel_error < tol);
  }
  SUBCASE("mse_loss") { CHECK(check_gradients({a, c}, [&] { return mse_loss(a, c); }).max_rel_error < tol); }
}

TEST_CASE("parallel gemm is bit-identical to the serial reference") {
  using kernels::Transpose;
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, {7, 5, 3}, {64, 80, 48}, {130, 33, 257}}) {
    for (auto ta : {Transpose::none, Transpose::trans}) {
      for (auto tb : {Transpose::none, Transpose::trans}) {
        std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
        for (auto& x : a) x = u(rng);
        for (auto& x : b) x = u(rng);
        for (std::size_t i = 0; i < c1.size(); ++i) c1[i] = c2[i] = u(rng);
        kernels::gemm_serial(ta, tb, m, n, k, a, b, c1, true);
        kernels::gemm_parallel(ta, tb, m, n, k, a, b, c2, true);
        CHECK(c1 == c2);
      }
    }
  }
}

TEST_CASE("gemm with a transposed operand matches an explicit transpose") {
  std::vector<double> a{1, 2, 3, 4, 5, 6};  // 2x3
  std::vector<double> at{1, 4, 2, 5, 3, 6};  // 3x2
  std::vector<double> b{1, 0, 2, 1, 0, 3};  // 3x2
  std::vector<double> c1(4), c2(4);
  kernels::gemm_serial(kernels::Transpose::none, kernels::Transpose::none, 2, 2, 3, a, b, c1, false);
  kernels::gemm_serial(kernels::Transpose::trans, kernels::Transpose::none, 2, 2, 3, at, b, c2, false);
  CHECK(c1 == c2);
  CHECK(c1 == std::vector<double>{5, 11, 14, 23});
}
