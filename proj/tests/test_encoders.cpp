#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cafct/encoders.hpp"
#include "cafct/gradcheck.hpp"

using namespace cafct;

namespace {

EncoderConfig make_config(int input, int base, int depth = 1, int heads = 2, int blocks = 2) {
  EncoderConfig cfg;
  cfg.input_size = input;
  cfg.base_channels = base;
  cfg.patch_size = 2;
  cfg.depth_per_stage = depth;
  cfg.heads = heads;
  cfg.cnn_blocks_per_stage = blocks;
  return cfg;
}

void check_schedule(const FeaturePyramid& p, const EncoderConfig& cfg, int batch) {
  REQUIRE(p.levels.size() == 4);
  const auto channels = cfg.stage_channels();
  const auto sizes = cfg.stage_sizes();
  for (int i = 0; i < 4; ++i) {
    const Tensor& level = p.levels[static_cast<size_t>(i)];
    CHECK(level.shape() == Shape{batch, channels[static_cast<size_t>(i)], sizes[static_cast<size_t>(i)],
                                 sizes[static_cast<size_t>(i)]});
  }
  // halving/doubling with the last stage keeping its width
  CHECK(p.levels[1].dim(2) * 2 == p.levels[0].dim(2));
  CHECK(p.levels[2].dim(2) * 2 == p.levels[1].dim(2));
  CHECK(p.levels[3].dim(2) * 2 == p.levels[2].dim(2));
  CHECK(p.levels[1].dim(1) == 2 * p.levels[0].dim(1));
  CHECK(p.levels[2].dim(1) == 2 * p.levels[1].dim(1));
  CHECK(p.levels[3].dim(1) == p.levels[2].dim(1));
}

}  // namespace

TEST_CASE("shape schedule holds for several valid configs, both branches identical level-by-level") {
  const EncoderConfig configs[] = {make_config(64, 16), make_config(32, 8, 2, 4, 1),
                                   make_config(96, 12, 1, 3, 2), make_config(16, 4)};
  for (const auto& cfg : configs) {
    Rng rng(17);
    CnnEncoder cnn(cfg, rng);
    TransformerEncoder trans(cfg, rng);
    Rng data_rng(3);
    const Tensor image = rand_tensor({2, 1, cfg.input_size, cfg.input_size}, data_rng, 0, 1, false);
    const FeaturePyramid pc = cnn.forward(image, true);
    const FeaturePyramid pt = trans.forward(image, true);
    check_schedule(pc, cfg, 2);
    check_schedule(pt, cfg, 2);
    for (int i = 0; i < 4; ++i) CHECK(pc.levels[static_cast<size_t>(i)].shape() == pt.levels[static_cast<size_t>(i)].shape());
  }
}

TEST_CASE("default 64px config pyramid and the stage-1 token count") {
  const EncoderConfig cfg = make_config(64, 16);
  Rng rng(19);
  CnnEncoder cnn(cfg, rng);
  TransformerEncoder trans(cfg, rng);
  Rng data_rng(4);
  const Tensor image = rand_tensor({1, 1, 64, 64}, data_rng, 0, 1, false);
  const FeaturePyramid pc = cnn.forward(image, true);
  CHECK(pc.levels[0].shape() == Shape{1, 16, 32, 32});
  CHECK(pc.levels[1].shape() == Shape{1, 32, 16, 16});
  CHECK(pc.levels[2].shape() == Shape{1, 64, 8, 8});
  CHECK(pc.levels[3].shape() == Shape{1, 64, 4, 4});
  const FeaturePyramid pt = trans.forward(image, true);
  // patch 2 over 64x64 -> 32x32 grid = 1024 tokens at stage 1
  CHECK(pt.levels[0].dim(2) * pt.levels[0].dim(3) == 1024);
}

TEST_CASE("all-zero input stays finite through the CNN branch") {
  const EncoderConfig cfg = make_config(32, 8);
  Rng rng(23);
  CnnEncoder cnn(cfg, rng);
  const Tensor zero = Tensor::zeros({1, 1, 32, 32});
  const FeaturePyramid p = cnn.forward(zero, true);
  for (const auto& level : p.levels) {
    for (int64_t i = 0; i < level.size(); ++i) CHECK(std::isfinite(level.data()[i]));
  }
}

TEST_CASE("invalid inputs are rejected") {
  const EncoderConfig cfg = make_config(32, 8);
  Rng rng(29);
  CnnEncoder cnn(cfg, rng);
  TransformerEncoder trans(cfg, rng);
  Rng data_rng(5);
  const Tensor wrong = rand_tensor({1, 1, 16, 16}, data_rng, 0, 1, false);
  CHECK_THROWS_AS(cnn.forward(wrong, true), std::invalid_argument);
  CHECK_THROWS_AS(trans.forward(wrong, true), std::invalid_argument);

  EncoderConfig bad = cfg;
  bad.input_size = 24;  // not a multiple of 16
  CHECK_THROWS_AS(CnnEncoder(bad, rng), std::invalid_argument);
  bad = cfg;
  bad.base_channels = 7;  // not divisible by heads
  CHECK_THROWS_AS(TransformerEncoder(bad, rng), std::invalid_argument);
}

TEST_CASE("per-sample independence in eval mode within 1e-9") {
  const EncoderConfig cfg = make_config(16, 4);
  Rng rng(31);
  CnnEncoder cnn(cfg, rng);
  Rng data_rng(6);
  const Tensor pair = rand_tensor({2, 1, 16, 16}, data_rng, 0, 1, false);
  cnn.forward(pair, true);  // populate running stats

  const FeaturePyramid batched = cnn.forward(pair, false);
  for (int s = 0; s < 2; ++s) {
    std::vector<double> one(pair.values().begin() + s * 256, pair.values().begin() + (s + 1) * 256);
    const FeaturePyramid single = cnn.forward(Tensor::from_data({1, 1, 16, 16}, std::move(one)), false);
    for (int lvl = 0; lvl < 4; ++lvl) {
      const Tensor& b = batched.levels[static_cast<size_t>(lvl)];
      const Tensor& u = single.levels[static_cast<size_t>(lvl)];
      const int64_t per_sample = b.size() / 2;
      for (int64_t i = 0; i < per_sample; ++i) {
        CHECK(std::fabs(b.data()[s * per_sample + i] - u.data()[i]) < 1e-9);
      }
    }
  }
}

TEST_CASE("permuting the batch axis permutes the transformer output identically") {
  const EncoderConfig cfg = make_config(16, 4);
  Rng rng(37);
  TransformerEncoder trans(cfg, rng);
  Rng data_rng(7);
  const Tensor a = rand_tensor({1, 1, 16, 16}, data_rng, 0, 1, false);
  const Tensor b = rand_tensor({1, 1, 16, 16}, data_rng, 0, 1, false);
  std::vector<double> ab(a.values());
  ab.insert(ab.end(), b.values().begin(), b.values().end());
  std::vector<double> ba(b.values());
  ba.insert(ba.end(), a.values().begin(), a.values().end());

  const FeaturePyramid p_ab = trans.forward(Tensor::from_data({2, 1, 16, 16}, std::move(ab)), true);
  const FeaturePyramid p_ba = trans.forward(Tensor::from_data({2, 1, 16, 16}, std::move(ba)), true);
  for (int lvl = 0; lvl < 4; ++lvl) {
    const Tensor& x = p_ab.levels[static_cast<size_t>(lvl)];
    const Tensor& y = p_ba.levels[static_cast<size_t>(lvl)];
    const int64_t half = x.size() / 2;
    for (int64_t i = 0; i < half; ++i) {
      CHECK(x.data()[i] == y.data()[half + i]);
      CHECK(x.data()[half + i] == y.data()[i]);
    }
  }
}
