#pragma once

#include <array>

#include "cafct/layers.hpp"

namespace cafct {

// dilation*(kernel-1) + 1
int effective_receptive_field(int kernel, int dilation);

// Atrous spatial pyramid pooling: a 1x1 branch, three dilated 3x3 branches
// (padding = dilation so H and W are preserved), and an image-pooling branch
// restored by bilinear interpolation; the 5C concat is projected back to C.
class Aspp {
 public:
  Aspp() = default;
  Aspp(int channels, std::array<int, 3> rates, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  const std::array<int, 3>& rates() const { return rates_; }

  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_buffers(const std::string& prefix, const ParamVisitor& fn);

 private:
  struct Branch {
    Conv2d conv;
    BatchNorm2d bn;
  };

  Tensor run_branch(Branch& b, const Tensor& x, bool training);

  std::array<int, 3> rates_{6, 12, 18};
  Branch point_;                   // 1x1
  std::array<Branch, 3> dilated_;  // 3x3, rates_
  Branch pool_;                    // after global average pooling
  Branch project_;                 // 5C -> C
};

}  // namespace cafct
