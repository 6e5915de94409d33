#pragma once

#include <array>
#include <vector>

#include "cafct/encoders.hpp"

namespace cafct {

// Squeeze-and-excitation: global pool to one value per channel, bottleneck
// MLP, sigmoid weights in (0,1), applied multiplicatively per channel.
struct SeBlock {
  Linear reduce, expand;
  int ratio = 4;

  SeBlock() = default;
  SeBlock(int channels, int ratio, Rng& rng);

  Tensor forward(const Tensor& x, Tensor* weights_out = nullptr) const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
};

// Attentional feature fusion of one pyramid level: concatenate the two
// branches, 1x1-reduce back to the branch width, BN + ReLU, then SE
// channel reweighting.
struct AffFuse {
  Conv2d reduce;
  BatchNorm2d bn;
  SeBlock se;

  AffFuse() = default;
  AffFuse(int channels, int se_ratio, Rng& rng);

  Tensor forward(const Tensor& f_cnn, const Tensor& f_trans, bool training);
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_buffers(const std::string& prefix, const ParamVisitor& fn);
};

class PyramidFusion {
 public:
  PyramidFusion() = default;
  PyramidFusion(const std::array<int, 4>& channels, int se_ratio, Rng& rng);

  FeaturePyramid forward(const FeaturePyramid& cnn, const FeaturePyramid& trans, bool training);
  AffFuse& level(int i) { return levels_[static_cast<size_t>(i)]; }

  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_buffers(const std::string& prefix, const ParamVisitor& fn);

 private:
  std::vector<AffFuse> levels_;
};

}  // namespace cafct
