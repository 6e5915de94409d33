#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cafct/aspp.hpp"
#include "cafct/encoders.hpp"
#include "cafct/fusion.hpp"

namespace cafct {

// Skip-connection filter. The gate arithmetic runs at the (coarser) gate
// resolution; the sigmoid coefficient grid is resampled back to the skip
// resolution and multiplied in, broadcast over channels.
struct AttentionGate {
  Conv2d wx, wg, psi;  // all 1x1

  AttentionGate() = default;
  AttentionGate(int skip_channels, int gate_channels, int inter_channels, Rng& rng);

  Tensor forward(const Tensor& x_skip, const Tensor& gate, Tensor* coeff_out = nullptr) const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
};

// Walks the fused pyramid coarse-to-fine: the running state starts at the
// context (ASPP output), gates each skip with the current state, and merges
// via upsample + concat + conv block; a 1x1 head plus a final bilinear
// upsample produce full-resolution logits.
class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::array<int, 4>& channels, int inter_divisor, Rng& rng);

  Tensor forward(const FeaturePyramid& fused, const Tensor& context, int out_size, bool training);

  AttentionGate& gate(int i) { return gates_[static_cast<size_t>(i)]; }

  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_buffers(const std::string& prefix, const ParamVisitor& fn);

 private:
  std::vector<AttentionGate> gates_;   // for levels 3, 2, 1
  std::vector<ConvBnRelu> blocks_;
  Conv2d head_;
};

struct ModelConfig {
  EncoderConfig encoder;
  int se_ratio = 4;
  std::array<int, 3> aspp_rates{6, 12, 18};
  int inter_channel_divisor = 2;

  void validate() const;
};

class CafctModel {
 public:
  CafctModel() = default;
  CafctModel(const ModelConfig& cfg, Rng& rng);

  // Pixel logits with the input's shape; sigmoid is deferred to the loss or
  // to inference thresholding.
  Tensor forward(const Tensor& image, bool training);

  const ModelConfig& config() const { return cfg_; }

  std::vector<Parameter> parameters();
  std::vector<Parameter> buffers();
  int64_t parameter_count();
  void zero_grad();

  CnnEncoder& cnn() { return cnn_; }
  TransformerEncoder& transformer() { return transformer_; }
  PyramidFusion& fusion() { return fusion_; }
  Aspp& aspp() { return aspp_; }
  Decoder& decoder() { return decoder_; }

 private:
  ModelConfig cfg_;
  CnnEncoder cnn_;
  TransformerEncoder transformer_;
  PyramidFusion fusion_;
  Aspp aspp_;
  Decoder decoder_;
};

}  // namespace cafct
