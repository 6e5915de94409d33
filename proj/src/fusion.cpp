#include "cafct/fusion.hpp"

namespace cafct {

SeBlock::SeBlock(int channels, int ratio, Rng& rng) : ratio(ratio) {
  check_arg(ratio >= 1 && channels % ratio == 0,
            "se_block: channels " + std::to_string(channels) + " not divisible by reduction ratio " +
                std::to_string(ratio));
  reduce = Linear(channels, channels / ratio, true, rng);
  expand = Linear(channels / ratio, channels, true, rng);
}

Tensor SeBlock::forward(const Tensor& x, Tensor* weights_out) const {
  const int n = x.dim(0), c = x.dim(1);
  const Tensor squeezed = ops::reshape(ops::global_avg_pool(x), {n, c});
  const Tensor w = ops::sigmoid(expand.forward(ops::relu(reduce.forward(squeezed))));
  if (weights_out) *weights_out = w;
  return ops::scale_channels(x, w);
}

void SeBlock::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  reduce.visit_params(prefix + ".reduce", fn);
  expand.visit_params(prefix + ".expand", fn);
}

AffFuse::AffFuse(int channels, int se_ratio, Rng& rng)
    : reduce(2 * channels, channels, 1, 1, 0, 1, /*with_bias=*/false, rng),
      bn(channels),
      se(channels, se_ratio, rng) {}

Tensor AffFuse::forward(const Tensor& f_cnn, const Tensor& f_trans, bool training) {
  check_arg(f_cnn.shape() == f_trans.shape(),
            "aff_fuse: branch shapes " + shape_str(f_cnn.shape()) + " and " + shape_str(f_trans.shape()) +
                " differ");
  const Tensor merged = ops::concat({f_cnn, f_trans}, 1);
  return se.forward(ops::relu(bn.forward(reduce.forward(merged), training)));
}

void AffFuse::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  reduce.visit_params(prefix + ".reduce", fn);
  bn.visit_params(prefix + ".bn", fn);
  se.visit_params(prefix + ".se", fn);
}

void AffFuse::visit_buffers(const std::string& prefix, const ParamVisitor& fn) {
  bn.visit_buffers(prefix + ".bn", fn);
}

PyramidFusion::PyramidFusion(const std::array<int, 4>& channels, int se_ratio, Rng& rng) {
  for (int c : channels) levels_.emplace_back(c, se_ratio, rng);
}

FeaturePyramid PyramidFusion::forward(const FeaturePyramid& cnn, const FeaturePyramid& trans, bool training) {
  check_arg(cnn.levels.size() == levels_.size() && trans.levels.size() == levels_.size(),
            "fuse_pyramids: expected " + std::to_string(levels_.size()) + " levels");
  FeaturePyramid fused;
  for (size_t i = 0; i < levels_.size(); ++i) {
    fused.levels.push_back(levels_[i].forward(cnn.levels[i], trans.levels[i], training));
  }
  return fused;
}

void PyramidFusion::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t i = 0; i < levels_.size(); ++i) {
    levels_[i].visit_params(prefix + ".level" + std::to_string(i + 1), fn);
  }
}

void PyramidFusion::visit_buffers(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t i = 0; i < levels_.size(); ++i) {
    levels_[i].visit_buffers(prefix + ".level" + std::to_string(i + 1), fn);
  }
}

}  // namespace cafct
