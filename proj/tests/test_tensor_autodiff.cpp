#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cafct/gradcheck.hpp"
#include "cafct/ops.hpp"
#include "cafct/tensor.hpp"

using namespace cafct;

TEST_CASE("tensor construction enforces the shape/data invariant") {
  const Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(numel(t.shape()) == 6);
  CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from_data({0, 3}, {}), std::invalid_argument);
}

TEST_CASE("backward rejects non-scalar losses") {
  const Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  const Tensor y = ops::scale(x, 2.0);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("loss = sum(p) gives an all-ones gradient") {
  Tensor p = Tensor::from_data({4}, {0.3, -1.0, 2.0, 7.5}, true);
  backward(ops::sum(p));
  for (double g : p.grad_vec()) CHECK(g == 1.0);
}

TEST_CASE("loss = sum(p^2) at p=[1,2] gives grad [2,4]") {
  Tensor p = Tensor::from_data({2}, {1.0, 2.0}, true);
  backward(ops::sum(ops::mul(p, p)));
  CHECK(p.grad_vec()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(p.grad_vec()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("repeated backward without reset accumulates leaf gradients") {
  Tensor p = Tensor::from_data({3}, {1.0, 1.0, 1.0}, true);
  const Tensor loss = ops::sum(p);
  backward(loss);
  backward(loss);
  for (double g : p.grad_vec()) CHECK(g == 2.0);
  p.zero_grad();
  backward(loss);
  for (double g : p.grad_vec()) CHECK(g == 1.0);
}

TEST_CASE("diamond-shaped graphs accumulate exactly once per path") {
  Tensor x = Tensor::from_data({2}, {3.0, -1.0}, true);
  const Tensor y = ops::add(x, x);  // both parents are the same node
  backward(ops::sum(y));
  for (double g : x.grad_vec()) CHECK(g == 2.0);
}

TEST_CASE("NoGradGuard suppresses recording") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  NoGradGuard guard;
  const Tensor y = ops::scale(x, 3.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("finite_diff_grad of sum is all ones") {
  Rng rng(3);
  const Tensor x = rand_tensor({5}, rng, -2, 2, false);
  const Tensor fd = finite_diff_grad(
      [](const Tensor& t) {
        double acc = 0;
        for (int64_t i = 0; i < t.size(); ++i) acc += t.data()[i];
        return acc;
      },
      x);
  for (int64_t i = 0; i < fd.size(); ++i) CHECK(fd.data()[i] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("finite_diff_grad of x^2 at 3 is 6 within 1e-6") {
  const Tensor x = Tensor::from_data({1}, {3.0});
  const Tensor fd = finite_diff_grad(
      [](const Tensor& t) { return t.data()[0] * t.data()[0]; }, x, 1e-4);
  CHECK(std::fabs(fd.data()[0] - 6.0) < 1e-6);
}

TEST_CASE("conv2d backward agrees with the central-difference oracle on 1x2x6x6") {
  Rng rng(11);
  Tensor x = rand_tensor({1, 2, 6, 6}, rng);
  const Tensor w = rand_tensor({2, 2, 3, 3}, rng, -1, 1, false);
  const Tensor proj = rand_tensor({1, 2, 6, 6}, rng, -1, 1, false);

  backward(ops::sum(ops::mul(ops::conv2d(x, w, Tensor(), 1, 1, 1), proj)));
  const Tensor fd = finite_diff_grad(
      [&](const Tensor& probe) {
        NoGradGuard guard;
        return ops::sum(ops::mul(ops::conv2d(probe, w, Tensor(), 1, 1, 1), proj)).item();
      },
      x);
  double worst = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, relative_error(x.grad_vec()[static_cast<size_t>(i)], fd.data()[i]));
  }
  CHECK(worst < 1e-4);
}
