#include "cafct/gates_decoder.hpp"

#include <unordered_set>

namespace cafct {

AttentionGate::AttentionGate(int skip_channels, int gate_channels, int inter_channels, Rng& rng)
    : wx(skip_channels, inter_channels, 1, 1, 0, 1, true, rng),
      wg(gate_channels, inter_channels, 1, 1, 0, 1, true, rng),
      psi(inter_channels, 1, 1, 1, 0, 1, true, rng) {}

Tensor AttentionGate::forward(const Tensor& x_skip, const Tensor& gate, Tensor* coeff_out) const {
  check_arg(x_skip.rank() == 4 && gate.rank() == 4 && x_skip.dim(0) == gate.dim(0),
            "attention_gate: batch mismatch between skip " + shape_str(x_skip.shape()) + " and gate " +
                shape_str(gate.shape()));
  const int hg = gate.dim(2), wg_w = gate.dim(3);
  check_arg(hg <= x_skip.dim(2) && wg_w <= x_skip.dim(3),
            "attention_gate: gate " + shape_str(gate.shape()) + " is finer than skip " + shape_str(x_skip.shape()));

  Tensor xs = wx.forward(x_skip);
  if (xs.dim(2) != hg || xs.dim(3) != wg_w) xs = ops::bilinear_resize(xs, hg, wg_w);
  const Tensor joint = ops::relu(ops::add(xs, wg.forward(gate)));
  const Tensor coeff_small = ops::sigmoid(psi.forward(joint));
  const Tensor coeff = ops::bilinear_resize(coeff_small, x_skip.dim(2), x_skip.dim(3));
  if (coeff_out) *coeff_out = coeff;
  return ops::scale_spatial(x_skip, coeff);
}

void AttentionGate::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  wx.visit_params(prefix + ".wx", fn);
  wg.visit_params(prefix + ".wg", fn);
  psi.visit_params(prefix + ".psi", fn);
}

Decoder::Decoder(const std::array<int, 4>& channels, int inter_divisor, Rng& rng) {
  check_arg(inter_divisor >= 1, "decoder: inter_channel_divisor must be >= 1");
  // Coarse to fine: levels 3, 2, 1. The gate signal at level i is the running
  // state, whose width is the next-coarser level's channel count.
  for (int level = 2; level >= 0; --level) {
    const int skip_ch = channels[static_cast<size_t>(level)];
    const int gate_ch = channels[static_cast<size_t>(level) + 1];
    const int inter = std::max(1, skip_ch / inter_divisor);
    gates_.emplace_back(skip_ch, gate_ch, inter, rng);
    blocks_.emplace_back(gate_ch + skip_ch, skip_ch, 3, 1, 1, 1, rng);
  }
  head_ = Conv2d(channels[0], 1, 1, 1, 0, 1, true, rng);
}

Tensor Decoder::forward(const FeaturePyramid& fused, const Tensor& context, int out_size, bool training) {
  check_arg(fused.levels.size() == 4, "decoder: expected a 4-level pyramid");
  check_arg(context.rank() == 4 && context.dim(0) == fused.levels[3].dim(0) &&
                context.dim(2) == fused.levels[3].dim(2) && context.dim(3) == fused.levels[3].dim(3),
            "decoder: context " + shape_str(context.shape()) + " inconsistent with level 4 " +
                shape_str(fused.levels[3].shape()));

  Tensor state = context;
  for (size_t step = 0; step < gates_.size(); ++step) {
    const Tensor& skip = fused.levels[2 - step];
    const Tensor gated = gates_[step].forward(skip, state);
    const Tensor up = ops::bilinear_resize(state, skip.dim(2), skip.dim(3));
    state = blocks_[step].forward(ops::concat({up, gated}, 1), training);
  }
  return ops::bilinear_resize(head_.forward(state), out_size, out_size);
}

void Decoder::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t i = 0; i < gates_.size(); ++i) {
    const std::string level = std::to_string(3 - i);
    gates_[i].visit_params(prefix + ".gate" + level, fn);
    blocks_[i].visit_params(prefix + ".block" + level, fn);
  }
  head_.visit_params(prefix + ".head", fn);
}

void Decoder::visit_buffers(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].visit_buffers(prefix + ".block" + std::to_string(3 - i), fn);
  }
}

void ModelConfig::validate() const {
  encoder.validate();
  check_arg(encoder.patch_size == 2,
            "model config: patch_size must be 2 so both encoder pyramids share the stride-2^i schedule");
  check_arg(se_ratio >= 1 && encoder.base_channels % se_ratio == 0,
            "model config: base_channels " + std::to_string(encoder.base_channels) +
                " not divisible by se_ratio " + std::to_string(se_ratio));
  check_arg(aspp_rates[0] >= 1 && aspp_rates[0] < aspp_rates[1] && aspp_rates[1] < aspp_rates[2],
            "model config: aspp_rates must be strictly increasing");
  check_arg(inter_channel_divisor >= 1, "model config: inter_channel_divisor must be >= 1");
}

CafctModel::CafctModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const auto channels = cfg.encoder.stage_channels();
  cnn_ = CnnEncoder(cfg.encoder, rng);
  transformer_ = TransformerEncoder(cfg.encoder, rng);
  fusion_ = PyramidFusion(channels, cfg.se_ratio, rng);
  aspp_ = Aspp(channels[3], cfg.aspp_rates, rng);
  decoder_ = Decoder(channels, cfg.inter_channel_divisor, rng);
}

Tensor CafctModel::forward(const Tensor& image, bool training) {
  check_arg(image.rank() == 4 && image.dim(1) == 1 && image.dim(2) == cfg_.encoder.input_size &&
                image.dim(3) == cfg_.encoder.input_size,
            "cafct_forward: image " + shape_str(image.shape()) + " does not match configured input size " +
                std::to_string(cfg_.encoder.input_size));
  const FeaturePyramid p_cnn = cnn_.forward(image, training);
  const FeaturePyramid p_trans = transformer_.forward(image, training);
  const FeaturePyramid fused = fusion_.forward(p_cnn, p_trans, training);
  const Tensor context = aspp_.forward(fused.levels[3], training);
  return decoder_.forward(fused, context, cfg_.encoder.input_size, training);
}

namespace {

std::vector<Parameter> collect_named(CafctModel& model, bool trainable) {
  std::vector<Parameter> out;
  std::unordered_set<std::string> seen;
  const ParamVisitor fn = [&](const std::string& name, Tensor& t) {
    if (!seen.insert(name).second) {
      throw std::logic_error("duplicate parameter name: " + name);
    }
    out.push_back({name, t});
  };
  if (trainable) {
    model.cnn().visit_params("cnn", fn);
    model.transformer().visit_params("transformer", fn);
    model.fusion().visit_params("fusion", fn);
    model.aspp().visit_params("aspp", fn);
    model.decoder().visit_params("decoder", fn);
  } else {
    model.cnn().visit_buffers("cnn", fn);
    model.transformer().visit_buffers("transformer", fn);
    model.fusion().visit_buffers("fusion", fn);
    model.aspp().visit_buffers("aspp", fn);
    model.decoder().visit_buffers("decoder", fn);
  }
  return out;
}

}  // namespace

std::vector<Parameter> CafctModel::parameters() { return collect_named(*this, true); }

std::vector<Parameter> CafctModel::buffers() { return collect_named(*this, false); }

int64_t CafctModel::parameter_count() {
  int64_t total = 0;
  for (auto& p : parameters()) total += p.tensor.size();
  return total;
}

void CafctModel::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

}  // namespace cafct
