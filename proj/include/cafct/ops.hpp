#pragma once

#include <vector>

#include "cafct/tensor.hpp"

namespace cafct::ops {

// ReLU is the only data-dependent nonsmoothness in the network. When sign
// tracking is on (thread-local, off by default), relu() folds every
// element's sign predicate into a signature; the gradient checker compares
// signatures between its +eps and -eps evaluations and discards probes that
// straddle a kink, where central differences are invalid.
void set_activation_sign_tracking(bool enabled);
void reset_activation_signature();
uint64_t activation_signature();

// Elementwise add. Shapes must match, or b may have leading extent 1 with all
// trailing extents equal to a's (tiled along a's leading axis).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // same shape
Tensor scale(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor sum(const Tensor& x);  // rank-0 result

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& xs, int axis);

// Batched products over the trailing two axes; leading axes must match.
Tensor matmul(const Tensor& a, const Tensor& b);     // [..,m,k] x [..,k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [..,m,k] x [..,n,k]

// Affine map over the trailing axis. weight is [Dout, Din]; bias [Dout] or an
// undefined tensor for none.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// NCHW convolution with zero padding. bias is [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 0, int dilation = 1);

Tensor global_avg_pool(const Tensor& x);                    // [N,C,H,W] -> [N,C,1,1]
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);
Tensor scale_channels(const Tensor& x, const Tensor& s);    // s: [N,C] or [N,C,1,1]
Tensor scale_spatial(const Tensor& x, const Tensor& a);     // a: [N,1,H,W]

// Per-channel batch normalization over (N,H,W). Train mode normalizes with
// batch statistics and folds them into the running buffers (EMA, in place);
// eval mode requires populated buffers (num_updates > 0).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, Tensor& num_updates,
                  bool training, double momentum = 0.1, double eps = 1e-5);

// Normalization over the trailing axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Key projection carries no bias: softmax is invariant to the per-query
// constant shift a key bias induces, so the term is exactly inert.
struct MhsaParams {
  Tensor wq, bq, wk, wv, bv, wo, bo;  // weights [D,D], biases [D]
};

// Scaled dot-product self-attention over tokens [N,L,D] with heads
// concatenated and output-projected. attention_out, when given, receives the
// post-softmax weights [N,heads,L,L].
Tensor multi_head_self_attention(const Tensor& x, const MhsaParams& p, int heads,
                                 Tensor* attention_out = nullptr);

}  // namespace cafct::ops
