#pragma once

#include "cafct/ops.hpp"
#include "cafct/rng.hpp"
#include "cafct/tensor.hpp"

namespace cafct {

// Trainable leaf filled with N(0, stddev) draws.
Tensor normal_init(Shape shape, double stddev, Rng& rng);

// He fan-in scaling: N(0, sqrt(2 / fan_in)).
Tensor he_init(Shape shape, int fan_in, Rng& rng);

struct Conv2d {
  Tensor weight;  // [Cout, Cin, k, k]
  Tensor bias;    // [Cout] or undefined
  int stride = 1, padding = 0, dilation = 1;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride, int padding, int dilation, bool with_bias, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
};

struct BatchNorm2d {
  Tensor gamma, beta;
  Tensor running_mean, running_var, num_updates;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);

  Tensor forward(const Tensor& x, bool training);
  bool stats_ready() const { return num_updates.item() > 0.0; }
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_buffers(const std::string& prefix, const ParamVisitor& fn);
};

struct Linear {
  Tensor weight;  // [Dout, Din]
  Tensor bias;    // [Dout] or undefined

  Linear() = default;
  Linear(int din, int dout, bool with_bias, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
};

struct LayerNorm {
  Tensor gamma, beta;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int dim);

  Tensor forward(const Tensor& x) const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
};

struct Mhsa {
  ops::MhsaParams params;
  int heads = 1;

  Mhsa() = default;
  Mhsa(int dim, int heads, Rng& rng);

  Tensor forward(const Tensor& tokens, Tensor* attention_out = nullptr) const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
};

// conv -> BN -> ReLU; the convolution carries no bias (the BN shift covers it).
struct ConvBnRelu {
  Conv2d conv;
  BatchNorm2d bn;

  ConvBnRelu() = default;
  ConvBnRelu(int cin, int cout, int k, int stride, int padding, int dilation, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_buffers(const std::string& prefix, const ParamVisitor& fn);
};

}  // namespace cafct
