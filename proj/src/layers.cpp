#include "cafct/layers.hpp"

#include <cmath>

namespace cafct {

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  const int64_t n = numel(shape);
  std::vector<double> data(static_cast<size_t>(n));
  for (auto& v : data) v = stddev * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(data), /*requires_grad=*/true);
}

Tensor he_init(Shape shape, int fan_in, Rng& rng) {
  return normal_init(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

Conv2d::Conv2d(int cin, int cout, int k, int stride, int padding, int dilation, bool with_bias, Rng& rng)
    : stride(stride), padding(padding), dilation(dilation) {
  weight = he_init({cout, cin, k, k}, cin * k * k, rng);
  if (with_bias) bias = Tensor::zeros({cout}, /*requires_grad=*/true);
}

Tensor Conv2d::forward(const Tensor& x) const {
  return ops::conv2d(x, weight, bias, stride, padding, dilation);
}

void Conv2d::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  if (bias.defined()) fn(prefix + ".bias", bias);
}

BatchNorm2d::BatchNorm2d(int channels) {
  gamma = Tensor::full({channels}, 1.0, /*requires_grad=*/true);
  beta = Tensor::zeros({channels}, /*requires_grad=*/true);
  running_mean = Tensor::zeros({channels});
  running_var = Tensor::full({channels}, 1.0);
  num_updates = Tensor::zeros({1});
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  return ops::batch_norm(x, gamma, beta, running_mean, running_var, num_updates, training, momentum, eps);
}

void BatchNorm2d::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

void BatchNorm2d::visit_buffers(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".running_mean", running_mean);
  fn(prefix + ".running_var", running_var);
  fn(prefix + ".num_updates", num_updates);
}

Linear::Linear(int din, int dout, bool with_bias, Rng& rng) {
  weight = he_init({dout, din}, din, rng);
  if (with_bias) bias = Tensor::zeros({dout}, /*requires_grad=*/true);
}

Tensor Linear::forward(const Tensor& x) const { return ops::linear(x, weight, bias); }

void Linear::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  if (bias.defined()) fn(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(int dim) {
  gamma = Tensor::full({dim}, 1.0, /*requires_grad=*/true);
  beta = Tensor::zeros({dim}, /*requires_grad=*/true);
}

Tensor LayerNorm::forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, eps); }

void LayerNorm::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

Mhsa::Mhsa(int dim, int heads, Rng& rng) : heads(heads) {
  params.wq = he_init({dim, dim}, dim, rng);
  params.bq = Tensor::zeros({dim}, true);
  params.wk = he_init({dim, dim}, dim, rng);
  params.wv = he_init({dim, dim}, dim, rng);
  params.bv = Tensor::zeros({dim}, true);
  params.wo = he_init({dim, dim}, dim, rng);
  params.bo = Tensor::zeros({dim}, true);
}

Tensor Mhsa::forward(const Tensor& tokens, Tensor* attention_out) const {
  return ops::multi_head_self_attention(tokens, params, heads, attention_out);
}

void Mhsa::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".wq", params.wq);
  fn(prefix + ".bq", params.bq);
  fn(prefix + ".wk", params.wk);
  fn(prefix + ".wv", params.wv);
  fn(prefix + ".bv", params.bv);
  fn(prefix + ".wo", params.wo);
  fn(prefix + ".bo", params.bo);
}

ConvBnRelu::ConvBnRelu(int cin, int cout, int k, int stride, int padding, int dilation, Rng& rng)
    : conv(cin, cout, k, stride, padding, dilation, /*with_bias=*/false, rng), bn(cout) {}

Tensor ConvBnRelu::forward(const Tensor& x, bool training) {
  return ops::relu(bn.forward(conv.forward(x), training));
}

void ConvBnRelu::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  conv.visit_params(prefix + ".conv", fn);
  bn.visit_params(prefix + ".bn", fn);
}

void ConvBnRelu::visit_buffers(const std::string& prefix, const ParamVisitor& fn) {
  bn.visit_buffers(prefix + ".bn", fn);
}

}  // namespace cafct
