#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cafct/aspp.hpp"
#include "cafct/fusion.hpp"
#include "cafct/gradcheck.hpp"

using namespace cafct;

TEST_CASE("se_block with a zeroed expand layer scales everything by sigmoid(0) = 0.5") {
  Rng rng(1);
  SeBlock se(8, 4, rng);
  std::fill(se.expand.weight.values().begin(), se.expand.weight.values().end(), 0.0);
  std::fill(se.expand.bias.values().begin(), se.expand.bias.values().end(), 0.0);
  const Tensor x = rand_tensor({2, 8, 5, 5}, rng, -2, 2, false);
  const Tensor y = se.forward(x);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == doctest::Approx(0.5 * x.data()[i]).epsilon(1e-15));
}

TEST_CASE("se_block output is a per-channel scalar multiple of the input") {
  Rng rng(2);
  SeBlock se(8, 2, rng);
  const Tensor x = rand_tensor({1, 8, 4, 4}, rng, 0.5, 2.0, false);
  Tensor w;
  const Tensor y = se.forward(x, &w);
  REQUIRE(w.shape() == Shape{1, 8});
  for (int c = 0; c < 8; ++c) {
    for (int i = 0; i < 16; ++i) {
      CHECK(y.data()[c * 16 + i] == doctest::Approx(w.data()[c] * x.data()[c * 16 + i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("se excitation weights lie strictly in (0,1)") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    SeBlock se(8, 4, rng);
    const Tensor x = rand_tensor({2, 8, 6, 6}, rng, -3, 3, false);
    Tensor w;
    se.forward(x, &w);
    for (int64_t i = 0; i < w.size(); ++i) {
      CHECK(w.data()[i] > 0.0);
      CHECK(w.data()[i] < 1.0);
    }
  }
  CHECK_THROWS_AS(SeBlock(6, 4, rng), std::invalid_argument);  // 6 % 4 != 0
}

TEST_CASE("aff_fuse preserves the per-branch shape and rejects mismatches") {
  Rng rng(4);
  AffFuse aff(32, 4, rng);
  const Tensor a = rand_tensor({1, 32, 16, 16}, rng, -1, 1, false);
  const Tensor b = rand_tensor({1, 32, 16, 16}, rng, -1, 1, false);
  CHECK(aff.forward(a, b, true).shape() == Shape{1, 32, 16, 16});
  const Tensor c = rand_tensor({1, 32, 8, 8}, rng, -1, 1, false);
  CHECK_THROWS_AS(aff.forward(a, c, true), std::invalid_argument);
}

TEST_CASE("aff_fuse of all-zero branches is exactly zero with fresh parameters") {
  Rng rng(5);
  AffFuse aff(8, 4, rng);
  const Tensor zero = Tensor::zeros({1, 8, 6, 6});
  const Tensor y = aff.forward(zero, zero, true);
  for (int64_t i = 0; i < y.size(); ++i) {
    CHECK(y.data()[i] == 0.0);
    CHECK(std::isfinite(y.data()[i]));
  }
}

TEST_CASE("gradient flows to both fusion inputs") {
  Rng rng(6);
  AffFuse aff(4, 2, rng);
  Tensor a = rand_tensor({1, 4, 5, 5}, rng);
  Tensor b = rand_tensor({1, 4, 5, 5}, rng);
  backward(ops::sum(aff.forward(a, b, true)));
  double norm_a = 0, norm_b = 0;
  for (double g : a.grad_vec()) norm_a += g * g;
  for (double g : b.grad_vec()) norm_b += g * g;
  CHECK(norm_a > 0.0);
  CHECK(norm_b > 0.0);
}

TEST_CASE("fuse_pyramids works per level and equals direct aff_fuse calls") {
  Rng rng(7);
  const std::array<int, 4> channels{4, 8, 16, 16};
  PyramidFusion fusion(channels, 4, rng);
  Rng data_rng(8);
  FeaturePyramid pc, pt;
  const int sizes[4] = {16, 8, 4, 2};
  for (int i = 0; i < 4; ++i) {
    pc.levels.push_back(rand_tensor({2, channels[static_cast<size_t>(i)], sizes[i], sizes[i]}, data_rng, -1, 1, false));
    pt.levels.push_back(rand_tensor({2, channels[static_cast<size_t>(i)], sizes[i], sizes[i]}, data_rng, -1, 1, false));
  }
  const FeaturePyramid fused = fusion.forward(pc, pt, true);
  REQUIRE(fused.levels.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(fused.levels[static_cast<size_t>(i)].shape() == pc.levels[static_cast<size_t>(i)].shape());
    const Tensor direct = fusion.level(i).forward(pc.levels[static_cast<size_t>(i)], pt.levels[static_cast<size_t>(i)], true);
    for (int64_t j = 0; j < direct.size(); ++j) {
      CHECK(fused.levels[static_cast<size_t>(i)].data()[j] == direct.data()[j]);
    }
  }

  // zeroing level k of both inputs changes only level k of the output
  FeaturePyramid pc_zero = pc, pt_zero = pt;
  pc_zero.levels[1] = Tensor::zeros(pc.levels[1].shape());
  pt_zero.levels[1] = Tensor::zeros(pt.levels[1].shape());
  const FeaturePyramid fused_zero = fusion.forward(pc_zero, pt_zero, true);
  for (int i = 0; i < 4; ++i) {
    if (i == 1) continue;
    for (int64_t j = 0; j < fused.levels[static_cast<size_t>(i)].size(); ++j) {
      CHECK(fused_zero.levels[static_cast<size_t>(i)].data()[j] == fused.levels[static_cast<size_t>(i)].data()[j]);
    }
  }
}

TEST_CASE("effective receptive field values") {
  CHECK(effective_receptive_field(3, 1) == 3);
  CHECK(effective_receptive_field(3, 6) == 13);
  CHECK(effective_receptive_field(3, 12) == 25);
  CHECK(effective_receptive_field(3, 18) == 37);
}

TEST_CASE("aspp preserves the spatial size, including rates that exceed the input") {
  Rng rng(9);
  Aspp aspp(64, {6, 12, 18}, rng);
  const Tensor x = rand_tensor({1, 64, 8, 8}, rng, -1, 1, false);
  const Tensor y = aspp.forward(x, true);
  CHECK(y.shape() == Shape{1, 64, 8, 8});
  for (int64_t i = 0; i < y.size(); ++i) CHECK(std::isfinite(y.data()[i]));
}

TEST_CASE("aspp pre-projection width is exactly five times the branch width") {
  Rng rng(10);
  Aspp aspp(64, {6, 12, 18}, rng);
  bool found = false;
  aspp.visit_params("aspp", [&](const std::string& name, Tensor& t) {
    if (name == "aspp.project.conv.weight") {
      found = true;
      CHECK(t.shape() == Shape{64, 320, 1, 1});
    }
  });
  CHECK(found);
}

TEST_CASE("the image-pooling path maps a constant plane to a constant plane") {
  Rng rng(11);
  Conv2d conv(4, 4, 1, 1, 0, 1, false, rng);
  BatchNorm2d bn(4);
  const Tensor x = Tensor::full({2, 4, 6, 6}, 3.75);
  const Tensor pooled = ops::global_avg_pool(x);
  const Tensor y = ops::bilinear_resize(ops::relu(bn.forward(conv.forward(pooled), true)), 6, 6);
  for (int nc = 0; nc < 8; ++nc) {
    const double first = y.data()[nc * 36];
    for (int i = 0; i < 36; ++i) CHECK(y.data()[nc * 36 + i] == doctest::Approx(first).epsilon(1e-12));
  }
}

TEST_CASE("aspp rejects non-increasing rates") {
  Rng rng(12);
  CHECK_THROWS_AS(Aspp(8, {6, 6, 18}, rng), std::invalid_argument);
  CHECK_THROWS_AS(Aspp(8, {12, 6, 18}, rng), std::invalid_argument);
  CHECK_THROWS_AS(Aspp(8, {0, 6, 18}, rng), std::invalid_argument);
}
