#include "cafct/encoders.hpp"

namespace cafct {

void EncoderConfig::validate() const {
  check_arg(input_size >= 16 && input_size % 16 == 0,
            "encoder config: input_size " + std::to_string(input_size) + " must be a positive multiple of 16");
  check_arg(base_channels >= 1, "encoder config: base_channels must be >= 1");
  check_arg(patch_size >= 1 && input_size % patch_size == 0,
            "encoder config: input_size " + std::to_string(input_size) + " not divisible by patch_size " +
                std::to_string(patch_size));
  check_arg((input_size / patch_size) % 8 == 0,
            "encoder config: patch grid " + std::to_string(input_size / patch_size) +
                " cannot be halved across four stages");
  check_arg(depth_per_stage >= 1, "encoder config: depth_per_stage must be >= 1");
  check_arg(heads >= 1 && base_channels % heads == 0,
            "encoder config: base_channels " + std::to_string(base_channels) + " not divisible by heads " +
                std::to_string(heads));
  check_arg(cnn_blocks_per_stage >= 1, "encoder config: cnn_blocks_per_stage must be >= 1");
}

std::array<int, 4> EncoderConfig::stage_channels() const {
  return {base_channels, 2 * base_channels, 4 * base_channels, 4 * base_channels};
}

std::array<int, 4> EncoderConfig::stage_sizes() const {
  return {input_size / 2, input_size / 4, input_size / 8, input_size / 16};
}

namespace {

void check_image(const Tensor& image, int input_size, const char* who) {
  check_arg(image.rank() == 4 && image.dim(1) == 1,
            std::string(who) + ": expected [N,1,H,W] input, got " + shape_str(image.shape()));
  check_arg(image.dim(2) == image.dim(3) && image.dim(2) == input_size,
            std::string(who) + ": input " + shape_str(image.shape()) + " does not match configured size " +
                std::to_string(input_size));
}

}  // namespace

CnnEncoder::CnnEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const auto channels = cfg.stage_channels();
  int in_ch = 1;
  for (int s = 0; s < 4; ++s) {
    CnnStage stage;
    for (int b = 0; b < cfg.cnn_blocks_per_stage; ++b) {
      const int cin = b == 0 ? in_ch : channels[s];
      stage.blocks.emplace_back(cin, channels[s], 3, 1, 1, 1, rng);
    }
    stage.down = ConvBnRelu(channels[s], channels[s], 3, 2, 1, 1, rng);
    stages_.push_back(std::move(stage));
    in_ch = channels[s];
  }
}

FeaturePyramid CnnEncoder::forward(const Tensor& image, bool training) {
  check_image(image, cfg_.input_size, "cnn_encoder");
  FeaturePyramid pyramid;
  Tensor x = image;
  for (auto& stage : stages_) {
    for (auto& block : stage.blocks) x = block.forward(x, training);
    x = stage.down.forward(x, training);
    pyramid.levels.push_back(x);
  }
  return pyramid;
}

void CnnEncoder::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t s = 0; s < stages_.size(); ++s) {
    const std::string sp = prefix + ".stage" + std::to_string(s + 1);
    for (size_t b = 0; b < stages_[s].blocks.size(); ++b) {
      stages_[s].blocks[b].visit_params(sp + ".block" + std::to_string(b + 1), fn);
    }
    stages_[s].down.visit_params(sp + ".down", fn);
  }
}

void CnnEncoder::visit_buffers(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t s = 0; s < stages_.size(); ++s) {
    const std::string sp = prefix + ".stage" + std::to_string(s + 1);
    for (size_t b = 0; b < stages_[s].blocks.size(); ++b) {
      stages_[s].blocks[b].visit_buffers(sp + ".block" + std::to_string(b + 1), fn);
    }
    stages_[s].down.visit_buffers(sp + ".down", fn);
  }
}

TransformerBlock::TransformerBlock(int dim, int heads, Rng& rng)
    : ln1(dim), attn(dim, heads, rng), ln2(dim), fc1(dim, 4 * dim, true, rng), fc2(4 * dim, dim, true, rng) {}

Tensor TransformerBlock::forward(const Tensor& tokens) const {
  const Tensor h = ops::add(tokens, attn.forward(ln1.forward(tokens)));
  return ops::add(h, fc2.forward(ops::relu(fc1.forward(ln2.forward(h)))));
}

void TransformerBlock::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  ln1.visit_params(prefix + ".ln1", fn);
  attn.visit_params(prefix + ".attn", fn);
  ln2.visit_params(prefix + ".ln2", fn);
  fc1.visit_params(prefix + ".fc1", fn);
  fc2.visit_params(prefix + ".fc2", fn);
}

Tensor TransformerStage::forward(const Tensor& map) const {
  const Tensor m = embed.forward(map);
  const int n = m.dim(0), c = m.dim(1), gh = m.dim(2), gw = m.dim(3);
  const int tokens_len = gh * gw;
  check_arg(pos.dim(1) == tokens_len,
            "transformer stage: token count " + std::to_string(tokens_len) + " does not match positional table " +
                std::to_string(pos.dim(1)));
  Tensor tokens = ops::permute(ops::reshape(m, {n, c, tokens_len}), {0, 2, 1});
  tokens = ops::add(tokens, pos);
  for (const auto& block : blocks) tokens = block.forward(tokens);
  return ops::reshape(ops::permute(tokens, {0, 2, 1}), {n, c, gh, gw});
}

void TransformerStage::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  embed.visit_params(prefix + ".embed", fn);
  fn(prefix + ".pos", pos);
  for (size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].visit_params(prefix + ".block" + std::to_string(b + 1), fn);
  }
}

TransformerEncoder::TransformerEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const auto channels = cfg.stage_channels();
  int grid = cfg.input_size / cfg.patch_size;
  for (int s = 0; s < 4; ++s) {
    TransformerStage stage;
    if (s == 0) {
      stage.embed = Conv2d(1, channels[0], cfg.patch_size, cfg.patch_size, 0, 1, /*with_bias=*/true, rng);
    } else {
      stage.embed = Conv2d(channels[s - 1], channels[s], 2, 2, 0, 1, /*with_bias=*/true, rng);
      grid /= 2;
    }
    stage.pos = normal_init({1, grid * grid, channels[s]}, 0.02, rng);
    for (int b = 0; b < cfg.depth_per_stage; ++b) {
      stage.blocks.emplace_back(channels[s], cfg.heads, rng);
    }
    stages_.push_back(std::move(stage));
  }
}

FeaturePyramid TransformerEncoder::forward(const Tensor& image, bool training) {
  (void)training;  // no batch statistics anywhere in this branch
  check_image(image, cfg_.input_size, "transformer_encoder");
  FeaturePyramid pyramid;
  Tensor x = image;
  for (auto& stage : stages_) {
    x = stage.forward(x);
    pyramid.levels.push_back(x);
  }
  return pyramid;
}

void TransformerEncoder::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t s = 0; s < stages_.size(); ++s) {
    stages_[s].visit_params(prefix + ".stage" + std::to_string(s + 1), fn);
  }
}

void TransformerEncoder::visit_buffers(const std::string&, const ParamVisitor&) {}

}  // namespace cafct
