#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cafct/gradcheck.hpp"
#include "cafct/ops.hpp"

using namespace cafct;

namespace {

bool all_finite(const Tensor& t) {
  for (int64_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t.data()[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("conv2d with an identity 1x1 kernel is the identity map, exactly") {
  Rng rng(1);
  const Tensor x = rand_tensor({1, 1, 3, 3}, rng, -5, 5, false);
  const Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0});
  const Tensor y = ops::conv2d(x, w, Tensor(), 1, 0, 1);
  REQUIRE(y.shape() == x.shape());
  for (int64_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("dilated 3x3 over an all-ones 5x5 field sums 9 taps") {
  const Tensor x = Tensor::full({1, 1, 5, 5}, 1.0);
  const Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor y = ops::conv2d(x, w, Tensor(), 1, 0, 2);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.data()[0] == 9.0);
}

TEST_CASE("conv2d output-size formula") {
  Rng rng(2);
  const Tensor x = rand_tensor({1, 3, 32, 32}, rng, -1, 1, false);
  const Tensor w = rand_tensor({8, 3, 3, 3}, rng, -1, 1, false);
  const Tensor y = ops::conv2d(x, w, Tensor(), 2, 1, 1);
  CHECK(y.shape() == Shape{1, 8, 16, 16});
}

TEST_CASE("conv2d rejects channel mismatch naming both shapes") {
  Rng rng(3);
  const Tensor x = rand_tensor({1, 3, 8, 8}, rng, -1, 1, false);
  const Tensor w = rand_tensor({8, 4, 3, 3}, rng, -1, 1, false);
  try {
    ops::conv2d(x, w, Tensor(), 1, 1, 1);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("1x3x8x8") != std::string::npos);
    CHECK(msg.find("8x4x3x3") != std::string::npos);
  }
}

TEST_CASE("conv2d rejects an effective kernel larger than the padded input") {
  Rng rng(4);
  const Tensor x = rand_tensor({1, 1, 4, 4}, rng, -1, 1, false);
  const Tensor w = rand_tensor({1, 1, 3, 3}, rng, -1, 1, false);
  CHECK_THROWS_AS(ops::conv2d(x, w, Tensor(), 1, 0, 3), std::invalid_argument);  // extent 7 > 4
  CHECK_NOTHROW(ops::conv2d(x, w, Tensor(), 1, 2, 3));                           // 7 <= 8
}

TEST_CASE("batch_norm train mode on a constant input yields ~0, and gamma=0 pins beta") {
  const Tensor x = Tensor::full({2, 3, 4, 4}, 7.25);
  Tensor gamma = Tensor::full({3}, 1.0);
  Tensor beta = Tensor::zeros({3});
  Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0), nu = Tensor::zeros({1});
  const Tensor y = ops::batch_norm(x, gamma, beta, rm, rv, nu, true);
  for (int64_t i = 0; i < y.size(); ++i) CHECK(std::fabs(y.data()[i]) < 1e-9);

  Tensor gamma0 = Tensor::zeros({3});
  Tensor beta_b = Tensor::full({3}, -2.5);
  Rng rng(5);
  const Tensor x2 = rand_tensor({2, 3, 4, 4}, rng, -4, 4, false);
  const Tensor y2 = ops::batch_norm(x2, gamma0, beta_b, rm, rv, nu, true);
  for (int64_t i = 0; i < y2.size(); ++i) CHECK(y2.data()[i] == -2.5);
}

TEST_CASE("batch_norm train-mode output has per-channel mean beta and variance gamma^2") {
  Rng rng(6);
  // The gamma^2 property carries an eps-driven deficit of gamma^2*eps/var;
  // inputs need variance >> eps for the 1e-6 tolerance.
  const Tensor x = rand_tensor({2, 3, 6, 6}, rng, -12, 12, false);
  Tensor gamma = Tensor::from_data({3}, {1.5, 0.5, 2.0});
  Tensor beta = Tensor::from_data({3}, {0.25, -1.0, 3.0});
  Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0), nu = Tensor::zeros({1});
  const Tensor y = ops::batch_norm(x, gamma, beta, rm, rv, nu, true);

  const int64_t plane = 36;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int n = 0; n < 2; ++n) {
      const double* p = y.data() + (n * 3 + c) * plane;
      for (int64_t i = 0; i < plane; ++i) mean += p[i];
    }
    mean /= 72.0;
    CHECK(std::fabs(mean - beta.data()[c]) < 1e-9);
    double var = 0.0;
    for (int n = 0; n < 2; ++n) {
      const double* p = y.data() + (n * 3 + c) * plane;
      for (int64_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
    }
    var /= 72.0;
    CHECK(std::fabs(var - gamma.data()[c] * gamma.data()[c]) < 1e-6);
  }
}

TEST_CASE("batch_norm eval mode without populated stats is rejected") {
  Rng rng(7);
  const Tensor x = rand_tensor({1, 2, 4, 4}, rng, -1, 1, false);
  Tensor gamma = Tensor::full({2}, 1.0), beta = Tensor::zeros({2});
  Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0), nu = Tensor::zeros({1});
  CHECK_THROWS_AS(ops::batch_norm(x, gamma, beta, rm, rv, nu, false), std::invalid_argument);
  ops::batch_norm(x, gamma, beta, rm, rv, nu, true);
  CHECK_NOTHROW(ops::batch_norm(x, gamma, beta, rm, rv, nu, false));
}

TEST_CASE("global_avg_pool means and shape") {
  const Tensor c5 = Tensor::full({2, 3, 4, 4}, 5.0);
  const Tensor y = ops::global_avg_pool(c5);
  REQUIRE(y.shape() == Shape{2, 3, 1, 1});
  for (int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 5.0);

  const Tensor plane = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(ops::global_avg_pool(plane).data()[0] == doctest::Approx(2.5).epsilon(1e-15));

  Rng rng(8);
  CHECK(ops::global_avg_pool(rand_tensor({2, 16, 8, 8}, rng, 0, 1, false)).shape() == Shape{2, 16, 1, 1});
}

TEST_CASE("bilinear_resize identity and constant preservation") {
  Rng rng(9);
  const Tensor x = rand_tensor({1, 2, 5, 7}, rng, -3, 3, false);
  const Tensor same = ops::bilinear_resize(x, 5, 7);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(same.data()[i] == x.data()[i]);

  const Tensor c = Tensor::full({1, 1, 3, 3}, 1.25);
  const Tensor up = ops::bilinear_resize(c, 9, 5);
  for (int64_t i = 0; i < up.size(); ++i) CHECK(std::fabs(up.data()[i] - 1.25) < 1e-12);
}

TEST_CASE("bilinear_resize of [0,1;0,1] to 2x4 interpolates each row 0 -> 1") {
  const Tensor x = Tensor::from_data({1, 1, 2, 2}, {0, 1, 0, 1});
  const Tensor y = ops::bilinear_resize(x, 2, 4);
  // half-pixel source centers: src_x = 0.5*j - 0.25, clamped
  const double expect[4] = {0.0, 0.25, 0.75, 1.0};
  for (int r = 0; r < 2; ++r) {
    for (int j = 0; j < 4; ++j) {
      CHECK(y.data()[r * 4 + j] == doctest::Approx(expect[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("activation anchors") {
  const Tensor x = Tensor::from_data({2}, {-1.0, 2.0});
  const Tensor r = ops::relu(x);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 2.0);
  CHECK(ops::sigmoid(Tensor::zeros({1})).data()[0] == 0.5);

  const Tensor c = Tensor::full({7}, 3.25);
  const Tensor s = ops::softmax(c, 0);
  for (int64_t i = 0; i < 7; ++i) CHECK(s.data()[i] == doctest::Approx(1.0 / 7).epsilon(1e-12));
}

TEST_CASE("softmax rows are nonnegative and sum to 1 within 1e-9") {
  Rng rng(10);
  const Tensor x = rand_tensor({6, 9}, rng, -8, 8, false);
  const Tensor y = ops::softmax(x, 1);
  for (int r = 0; r < 6; ++r) {
    double total = 0.0;
    for (int j = 0; j < 9; ++j) {
      CHECK(y.data()[r * 9 + j] >= 0.0);
      total += y.data()[r * 9 + j];
    }
    CHECK(std::fabs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("linear anchors and shape contract") {
  const Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  const Tensor x = Tensor::from_data({1, 2}, {4.0, -7.0});
  const Tensor y = ops::linear(x, eye, Tensor::zeros({2}));
  CHECK(y.data()[0] == 4.0);
  CHECK(y.data()[1] == -7.0);

  const Tensor w = Tensor::from_data({2, 2}, {1, 1, 0, 1});
  const Tensor v = ops::linear(Tensor::from_data({2}, {1.0, 2.0}), w, Tensor::zeros({2}));
  CHECK(v.data()[0] == 3.0);
  CHECK(v.data()[1] == 2.0);

  Rng rng(11);
  CHECK(ops::linear(rand_tensor({1, 16, 6}, rng, -1, 1, false), rand_tensor({10, 6}, rng, -1, 1, false),
                    Tensor())
            .shape() == Shape{1, 16, 10});
  CHECK_THROWS_AS(ops::linear(rand_tensor({3, 5}, rng, -1, 1, false),
                              rand_tensor({4, 6}, rng, -1, 1, false), Tensor()),
                  std::invalid_argument);
}

TEST_CASE("attention with a single token has weight exactly 1") {
  Rng rng(12);
  ops::MhsaParams p;
  p.wq = rand_tensor({4, 4}, rng, -0.5, 0.5, false);
  p.bq = rand_tensor({4}, rng, -0.5, 0.5, false);
  p.wk = rand_tensor({4, 4}, rng, -0.5, 0.5, false);
  p.wv = rand_tensor({4, 4}, rng, -0.5, 0.5, false);
  p.bv = rand_tensor({4}, rng, -0.5, 0.5, false);
  p.wo = rand_tensor({4, 4}, rng, -0.5, 0.5, false);
  p.bo = rand_tensor({4}, rng, -0.5, 0.5, false);
  const Tensor x = rand_tensor({1, 1, 4}, rng, -1, 1, false);
  Tensor attn;
  const Tensor y = ops::multi_head_self_attention(x, p, 2, &attn);
  REQUIRE(attn.shape() == Shape{1, 2, 1, 1});
  CHECK(attn.data()[0] == 1.0);
  CHECK(attn.data()[1] == 1.0);
  // output equals the output projection of the value row
  const Tensor v = ops::linear(x, p.wv, p.bv);
  const Tensor direct = ops::linear(v, p.wo, p.bo);
  for (int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(direct.data()[i]).epsilon(1e-12));
}

TEST_CASE("attention over identical tokens yields identical output rows") {
  Rng rng(13);
  ops::MhsaParams p;
  p.wq = rand_tensor({6, 6}, rng, -0.5, 0.5, false);
  p.bq = rand_tensor({6}, rng, -0.5, 0.5, false);
  p.wk = rand_tensor({6, 6}, rng, -0.5, 0.5, false);
  p.wv = rand_tensor({6, 6}, rng, -0.5, 0.5, false);
  p.bv = rand_tensor({6}, rng, -0.5, 0.5, false);
  p.wo = rand_tensor({6, 6}, rng, -0.5, 0.5, false);
  p.bo = rand_tensor({6}, rng, -0.5, 0.5, false);
  std::vector<double> row(6);
  for (auto& v : row) v = rng.uniform(-1, 1);
  std::vector<double> data;
  for (int t = 0; t < 5; ++t) data.insert(data.end(), row.begin(), row.end());
  const Tensor x = Tensor::from_data({1, 5, 6}, std::move(data));
  const Tensor y = ops::multi_head_self_attention(x, p, 3);
  for (int t = 1; t < 5; ++t) {
    for (int j = 0; j < 6; ++j) {
      CHECK(y.data()[t * 6 + j] == doctest::Approx(y.data()[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention weight rows sum to 1 within 1e-9 and head-count divisibility holds") {
  Rng rng(14);
  ops::MhsaParams p;
  p.wq = rand_tensor({8, 8}, rng, -0.5, 0.5, false);
  p.bq = rand_tensor({8}, rng, -0.5, 0.5, false);
  p.wk = rand_tensor({8, 8}, rng, -0.5, 0.5, false);
  p.wv = rand_tensor({8, 8}, rng, -0.5, 0.5, false);
  p.bv = rand_tensor({8}, rng, -0.5, 0.5, false);
  p.wo = rand_tensor({8, 8}, rng, -0.5, 0.5, false);
  p.bo = rand_tensor({8}, rng, -0.5, 0.5, false);
  const Tensor x = rand_tensor({2, 7, 8}, rng, -2, 2, false);
  Tensor attn;
  ops::multi_head_self_attention(x, p, 2, &attn);
  REQUIRE(attn.shape() == Shape{2, 2, 7, 7});
  for (int64_t row = 0; row < 2 * 2 * 7; ++row) {
    double total = 0.0;
    for (int j = 0; j < 7; ++j) total += attn.data()[row * 7 + j];
    CHECK(std::fabs(total - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS(ops::multi_head_self_attention(x, p, 3), std::invalid_argument);
}

TEST_CASE("forward outputs stay finite on finite inputs") {
  Rng rng(15);
  const Tensor x = rand_tensor({2, 4, 6, 6}, rng, -50, 50, false);
  CHECK(all_finite(ops::sigmoid(x)));
  CHECK(all_finite(ops::softmax(x, 1)));
  const Tensor w = rand_tensor({4, 4, 3, 3}, rng, -10, 10, false);
  CHECK(all_finite(ops::conv2d(x, w, Tensor(), 1, 1, 1)));
  CHECK(all_finite(ops::bilinear_resize(x, 13, 3)));
}

TEST_CASE("numerics property: backward matches finite_diff_grad at 1e-4 on sizes <= 2000") {
  Rng rng(16);
  // conv2d, the densest of the primitives, checked against the standalone
  // central-difference oracle at eps = 1e-5.
  Tensor x = rand_tensor({2, 3, 7, 7}, rng);
  const Tensor w = rand_tensor({4, 3, 3, 3}, rng, -1, 1, false);
  const Tensor proj = rand_tensor({2, 4, 7, 7}, rng, -1, 1, false);
  backward(ops::sum(ops::mul(ops::conv2d(x, w, Tensor(), 1, 1, 1), proj)));
  const Tensor fd = finite_diff_grad(
      [&](const Tensor& probe) {
        NoGradGuard guard;
        return ops::sum(ops::mul(ops::conv2d(probe, w, Tensor(), 1, 1, 1), proj)).item();
      },
      x, 1e-5);
  double worst = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, relative_error(x.grad_vec()[static_cast<size_t>(i)], fd.data()[i]));
  }
  CHECK(worst < 1e-4);
}
