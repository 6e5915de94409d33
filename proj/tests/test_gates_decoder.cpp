#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cafct/gates_decoder.hpp"
#include "cafct/gradcheck.hpp"

using namespace cafct;

namespace {

ModelConfig tiny_config(int input = 16, int base = 8) {
  ModelConfig cfg;
  cfg.encoder.input_size = input;
  cfg.encoder.base_channels = base;
  cfg.encoder.patch_size = 2;
  cfg.encoder.depth_per_stage = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.cnn_blocks_per_stage = 2;
  cfg.se_ratio = 4;
  cfg.aspp_rates = {2, 3, 4};
  return cfg;
}

void force_psi(AttentionGate& gate, double bias) {
  std::fill(gate.psi.weight.values().begin(), gate.psi.weight.values().end(), 0.0);
  gate.psi.bias.values()[0] = bias;
}

}  // namespace

TEST_CASE("attention gate saturates to pass-through at psi bias +20") {
  Rng rng(1);
  AttentionGate gate(4, 8, 2, rng);
  force_psi(gate, 20.0);
  const Tensor x = rand_tensor({1, 4, 6, 6}, rng, -2, 2, false);
  const Tensor g = rand_tensor({1, 8, 3, 3}, rng, -2, 2, false);
  const Tensor y = gate.forward(x, g);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(std::fabs(y.data()[i] - x.data()[i]) < 1e-6);
}

TEST_CASE("attention gate saturates to suppression at psi bias -20") {
  Rng rng(2);
  AttentionGate gate(4, 8, 2, rng);
  force_psi(gate, -20.0);
  const Tensor x = rand_tensor({1, 4, 6, 6}, rng, -2, 2, false);
  const Tensor g = rand_tensor({1, 8, 3, 3}, rng, -2, 2, false);
  const Tensor y = gate.forward(x, g);
  for (int64_t i = 0; i < y.size(); ++i) CHECK(std::fabs(y.data()[i]) < 1e-6);
}

TEST_CASE("attention coefficients are strictly in (0,1) with the skip's spatial size") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    AttentionGate gate(4, 8, 2, rng);
    const Tensor x = rand_tensor({2, 4, 8, 8}, rng, -2, 2, false);
    const Tensor g = rand_tensor({2, 8, 4, 4}, rng, -2, 2, false);
    Tensor coeff;
    gate.forward(x, g, &coeff);
    REQUIRE(coeff.shape() == Shape{2, 1, 8, 8});
    for (int64_t i = 0; i < coeff.size(); ++i) {
      CHECK(coeff.data()[i] > 0.0);
      CHECK(coeff.data()[i] < 1.0);
    }
  }
}

TEST_CASE("attention gate rejects batch mismatches") {
  Rng rng(4);
  AttentionGate gate(4, 8, 2, rng);
  const Tensor x = rand_tensor({1, 4, 8, 8}, rng, -1, 1, false);
  const Tensor g = rand_tensor({2, 8, 4, 4}, rng, -1, 1, false);
  CHECK_THROWS_AS(gate.forward(x, g), std::invalid_argument);
}

TEST_CASE("full model forward produces input-shaped logits and is finite") {
  const ModelConfig cfg = tiny_config(32, 8);
  Rng rng(5);
  CafctModel model(cfg, rng);
  Rng data_rng(6);
  const Tensor image = rand_tensor({2, 1, 32, 32}, data_rng, 0, 1, false);
  const Tensor logits = model.forward(image, true);
  CHECK(logits.shape() == Shape{2, 1, 32, 32});
  for (int64_t i = 0; i < logits.size(); ++i) CHECK(std::isfinite(logits.data()[i]));
}

TEST_CASE("gradient from sum(logits) reaches every parameter") {
  // 32px input: the deepest stage then has 4 tokens (single-token attention
  // would leave the q/k projections with exactly zero gradient) and the
  // bottleneck batch-norm sees more than one element per channel.
  const ModelConfig cfg = tiny_config(32, 8);
  Rng rng(7);
  CafctModel model(cfg, rng);
  Rng data_rng(8);
  const Tensor image = rand_tensor({2, 1, 32, 32}, data_rng, 0, 1, false);
  model.zero_grad();
  backward(ops::sum(model.forward(image, true)));
  for (auto& p : model.parameters()) {
    double norm = 0.0;
    for (double g : p.tensor.grad_vec()) norm += g * g;
    INFO("parameter ", p.name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("eval-mode forward is bit-identical across calls") {
  const ModelConfig cfg = tiny_config(16, 8);
  Rng rng(9);
  CafctModel model(cfg, rng);
  Rng data_rng(10);
  const Tensor image = rand_tensor({1, 1, 16, 16}, data_rng, 0, 1, false);
  model.forward(image, true);  // populate BN stats
  NoGradGuard guard;
  const Tensor a = model.forward(image, false);
  const Tensor b = model.forward(image, false);
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("desk default config stays under two million parameters") {
  ModelConfig cfg;  // 64px, base 16, paper rates
  cfg.aspp_rates = {2, 3, 4};
  Rng rng(11);
  CafctModel model(cfg, rng);
  const int64_t count = model.parameter_count();
  CHECK(count > 0);
  CHECK(count < 2000000);
}

TEST_CASE("model rejects images that do not match the configured size") {
  const ModelConfig cfg = tiny_config(16, 8);
  Rng rng(12);
  CafctModel model(cfg, rng);
  Rng data_rng(13);
  CHECK_THROWS_AS(model.forward(rand_tensor({1, 1, 32, 32}, data_rng, 0, 1, false), true),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.forward(rand_tensor({1, 2, 16, 16}, data_rng, 0, 1, false), true),
                  std::invalid_argument);
}

TEST_CASE("model config validation") {
  ModelConfig cfg = tiny_config();
  cfg.encoder.patch_size = 4;  // pyramids would no longer align
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.aspp_rates = {3, 2, 1};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.se_ratio = 3;  // base 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
