#pragma once

#include <array>
#include <vector>

#include "cafct/layers.hpp"

namespace cafct {

struct EncoderConfig {
  int input_size = 64;       // square H = W
  int base_channels = 16;    // C1
  int patch_size = 2;
  int depth_per_stage = 1;   // transformer blocks per stage
  int heads = 2;
  int cnn_blocks_per_stage = 2;

  void validate() const;

  // Channel schedule C, 2C, 4C, 4C (last stage keeps its width).
  std::array<int, 4> stage_channels() const;
  // Spatial schedule S/2, S/4, S/8, S/16.
  std::array<int, 4> stage_sizes() const;
};

// Four multi-scale maps, fine to coarse.
struct FeaturePyramid {
  std::vector<Tensor> levels;
};

// A CNN stage: cnn_blocks_per_stage conv blocks at the incoming resolution
// (the first widens the channels), then a strided conv block halving H and W.
struct CnnStage {
  std::vector<ConvBnRelu> blocks;
  ConvBnRelu down;
};

class CnnEncoder {
 public:
  CnnEncoder() = default;
  CnnEncoder(const EncoderConfig& cfg, Rng& rng);

  FeaturePyramid forward(const Tensor& image, bool training);

  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_buffers(const std::string& prefix, const ParamVisitor& fn);

 private:
  EncoderConfig cfg_;
  std::vector<CnnStage> stages_;
};

// Pre-norm residual block: x + attn(ln(x)), then x + mlp(ln(x)).
struct TransformerBlock {
  LayerNorm ln1;
  Mhsa attn;
  LayerNorm ln2;
  Linear fc1, fc2;

  TransformerBlock() = default;
  TransformerBlock(int dim, int heads, Rng& rng);
  Tensor forward(const Tensor& tokens) const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
};

// Patch embedding (stage 1) or 2x2 patch merging (stages 2-4) followed by a
// learned positional embedding and a block stack; tokens are reshaped back to
// a spatial map on the way out.
struct TransformerStage {
  Conv2d embed;
  Tensor pos;  // [1, L, C]
  std::vector<TransformerBlock> blocks;

  Tensor forward(const Tensor& map) const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
};

class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(const EncoderConfig& cfg, Rng& rng);

  FeaturePyramid forward(const Tensor& image, bool training);

  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_buffers(const std::string& prefix, const ParamVisitor& fn);

 private:
  EncoderConfig cfg_;
  std::vector<TransformerStage> stages_;
};

}  // namespace cafct
