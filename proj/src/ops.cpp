#include "cafct/ops.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include "cafct/kernels.hpp"

namespace cafct::ops {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor make_op(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
               std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (grad_recording_enabled() && any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(node);
}

std::vector<int64_t> strides_of(const Shape& shape) {
  std::vector<int64_t> st(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * shape[static_cast<size_t>(i) + 1];
  }
  return st;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_nchw(const Tensor& x, const char* op) {
  check_arg(x.rank() == 4, std::string(op) + ": expected NCHW input, got shape " + shape_str(x.shape()));
}

thread_local bool g_track_signs = false;
thread_local uint64_t g_sign_signature = 0;

}  // namespace

void set_activation_sign_tracking(bool enabled) { g_track_signs = enabled; }
void reset_activation_signature() { g_sign_signature = 0; }
uint64_t activation_signature() { return g_sign_signature; }

Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  bool tiled = false;
  if (!same) {
    tiled = a.rank() == b.rank() && b.dim(0) == 1;
    for (int i = 1; tiled && i < a.rank(); ++i) tiled = a.dim(i) == b.dim(i);
    check_arg(tiled, "add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " are incompatible");
  }
  const int64_t n = a.size();
  const int64_t bn = b.size();
  std::vector<double> out(static_cast<size_t>(n));
  const double* pa = a.data();
  const double* pb = b.data();
  kernels::parallel_for(n, [&](int64_t i) { out[static_cast<size_t>(i)] = pa[i] + pb[i % bn]; });

  auto na = a.node();
  auto nb = b.node();
  return make_op(a.shape(), std::move(out), {na, nb}, [na, nb, n, bn](Node& self) {
    const double* g = self.grad.data();
    if (na->requires_grad) {
      double* da = na->grad_data();
      kernels::parallel_for(n, [&](int64_t i) { da[i] += g[i]; });
    }
    if (nb->requires_grad) {
      double* db = nb->grad_data();
      kernels::parallel_for(bn, [&](int64_t j) {
        double acc = 0.0;
        for (int64_t t = j; t < n; t += bn) acc += g[t];
        db[j] += acc;
      });
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_arg(a.shape() == b.shape(),
            "mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  const int64_t n = a.size();
  std::vector<double> out(static_cast<size_t>(n));
  const double* pa = a.data();
  const double* pb = b.data();
  kernels::parallel_for(n, [&](int64_t i) { out[static_cast<size_t>(i)] = pa[i] * pb[i]; });

  auto na = a.node();
  auto nb = b.node();
  return make_op(a.shape(), std::move(out), {na, nb}, [na, nb, n](Node& self) {
    const double* g = self.grad.data();
    if (na->requires_grad) {
      double* da = na->grad_data();
      const double* vb = nb->value.data();
      kernels::parallel_for(n, [&](int64_t i) { da[i] += g[i] * vb[i]; });
    }
    if (nb->requires_grad) {
      double* db = nb->grad_data();
      const double* va = na->value.data();
      kernels::parallel_for(n, [&](int64_t i) { db[i] += g[i] * va[i]; });
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  const int64_t n = x.size();
  std::vector<double> out(static_cast<size_t>(n));
  const double* px = x.data();
  kernels::parallel_for(n, [&](int64_t i) { out[static_cast<size_t>(i)] = c * px[i]; });

  auto nx = x.node();
  return make_op(x.shape(), std::move(out), {nx}, [nx, c, n](Node& self) {
    const double* g = self.grad.data();
    double* dx = nx->grad_data();
    kernels::parallel_for(n, [&](int64_t i) { dx[i] += c * g[i]; });
  });
}

Tensor relu(const Tensor& x) {
  const int64_t n = x.size();
  std::vector<double> out(static_cast<size_t>(n));
  const double* px = x.data();
  kernels::parallel_for(n, [&](int64_t i) { out[static_cast<size_t>(i)] = px[i] > 0.0 ? px[i] : 0.0; });
  if (g_track_signs) {
    for (int64_t i = 0; i < n; ++i) {
      g_sign_signature = g_sign_signature * 0x100000001b3ULL + (px[i] > 0.0 ? 1 : 2);
    }
  }

  auto nx = x.node();
  return make_op(x.shape(), std::move(out), {nx}, [nx, n](Node& self) {
    const double* g = self.grad.data();
    const double* vx = nx->value.data();
    double* dx = nx->grad_data();
    kernels::parallel_for(n, [&](int64_t i) { dx[i] += vx[i] > 0.0 ? g[i] : 0.0; });
  });
}

Tensor sigmoid(const Tensor& x) {
  const int64_t n = x.size();
  std::vector<double> out(static_cast<size_t>(n));
  const double* px = x.data();
  kernels::parallel_for(n, [&](int64_t i) { out[static_cast<size_t>(i)] = stable_sigmoid(px[i]); });

  auto nx = x.node();
  return make_op(x.shape(), std::move(out), {nx}, [nx, n](Node& self) {
    const double* g = self.grad.data();
    const double* y = self.value.data();
    double* dx = nx->grad_data();
    kernels::parallel_for(n, [&](int64_t i) { dx[i] += g[i] * y[i] * (1.0 - y[i]); });
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const int rank = x.rank();
  if (axis < 0) axis += rank;
  check_arg(axis >= 0 && axis < rank, "softmax: axis out of range for shape " + shape_str(x.shape()));
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= x.dim(i);
  const int64_t len = x.dim(axis);

  std::vector<double> out(static_cast<size_t>(x.size()));
  const double* px = x.data();
  kernels::parallel_for(outer * inner, [&](int64_t line) {
    const int64_t o = line / inner;
    const int64_t in = line % inner;
    const int64_t base = o * len * inner + in;
    double mx = px[base];
    for (int64_t j = 1; j < len; ++j) mx = std::max(mx, px[base + j * inner]);
    double total = 0.0;
    for (int64_t j = 0; j < len; ++j) {
      const double e = std::exp(px[base + j * inner] - mx);
      out[static_cast<size_t>(base + j * inner)] = e;
      total += e;
    }
    const double norm = 1.0 / total;
    for (int64_t j = 0; j < len; ++j) out[static_cast<size_t>(base + j * inner)] *= norm;
  });

  auto nx = x.node();
  return make_op(x.shape(), std::move(out), {nx}, [nx, outer, inner, len](Node& self) {
    const double* g = self.grad.data();
    const double* y = self.value.data();
    double* dx = nx->grad_data();
    kernels::parallel_for(outer * inner, [&](int64_t line) {
      const int64_t o = line / inner;
      const int64_t in = line % inner;
      const int64_t base = o * len * inner + in;
      double dot = 0.0;
      for (int64_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
      for (int64_t j = 0; j < len; ++j) {
        const int64_t at = base + j * inner;
        dx[at] += y[at] * (g[at] - dot);
      }
    });
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  const double* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) total += px[i];

  auto nx = x.node();
  const int64_t n = x.size();
  return make_op(Shape{}, {total}, {nx}, [nx, n](Node& self) {
    const double g = self.grad[0];
    double* dx = nx->grad_data();
    kernels::parallel_for(n, [&](int64_t i) { dx[i] += g; });
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_arg(numel(shape) == x.size(),
            "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto nx = x.node();
  const int64_t n = x.size();
  return make_op(std::move(shape), nx->value, {nx}, [nx, n](Node& self) {
    const double* g = self.grad.data();
    double* dx = nx->grad_data();
    kernels::parallel_for(n, [&](int64_t i) { dx[i] += g[i]; });
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int rank = x.rank();
  check_arg(static_cast<int>(perm.size()) == rank, "permute: axis list length mismatch");
  std::vector<bool> used(static_cast<size_t>(rank), false);
  for (int p : perm) {
    check_arg(p >= 0 && p < rank && !used[static_cast<size_t>(p)], "permute: invalid axis list");
    used[static_cast<size_t>(p)] = true;
  }

  Shape out_shape(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) out_shape[static_cast<size_t>(i)] = x.dim(perm[static_cast<size_t>(i)]);
  const auto in_strides = strides_of(x.shape());
  const auto out_strides = strides_of(out_shape);
  std::vector<int64_t> gather(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) gather[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];

  const int64_t n = x.size();
  std::vector<double> out(static_cast<size_t>(n));
  const double* px = x.data();
  // Captures by value: the backward closure outlives this frame.
  auto in_index = [rank, out_strides, gather](int64_t flat) {
    int64_t src = 0;
    for (int i = 0; i < rank; ++i) {
      const int64_t coord = flat / out_strides[static_cast<size_t>(i)];
      flat -= coord * out_strides[static_cast<size_t>(i)];
      src += coord * gather[static_cast<size_t>(i)];
    }
    return src;
  };
  kernels::parallel_for(n, [&](int64_t i) { out[static_cast<size_t>(i)] = px[in_index(i)]; });

  auto nx = x.node();
  return make_op(std::move(out_shape), std::move(out), {nx}, [nx, n, in_index](Node& self) {
    const double* g = self.grad.data();
    double* dx = nx->grad_data();
    kernels::parallel_for(n, [&](int64_t i) { dx[in_index(i)] += g[i]; });
  });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  check_arg(!xs.empty(), "concat: empty input list");
  const int rank = xs[0].rank();
  if (axis < 0) axis += rank;
  check_arg(axis >= 0 && axis < rank, "concat: axis out of range");
  int total = 0;
  for (const auto& t : xs) {
    check_arg(t.rank() == rank, "concat: rank mismatch between inputs");
    for (int i = 0; i < rank; ++i) {
      check_arg(i == axis || t.dim(i) == xs[0].dim(i),
                "concat: shape " + shape_str(t.shape()) + " incompatible with " + shape_str(xs[0].shape()));
    }
    total += t.dim(axis);
  }
  Shape out_shape = xs[0].shape();
  out_shape[static_cast<size_t>(axis)] = total;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= xs[0].dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= xs[0].dim(i);

  std::vector<double> out(static_cast<size_t>(numel(out_shape)));
  std::vector<int64_t> offsets(xs.size() + 1, 0);
  for (size_t t = 0; t < xs.size(); ++t) offsets[t + 1] = offsets[t] + xs[t].dim(axis);
  const int64_t out_row = static_cast<int64_t>(total) * inner;
  for (size_t t = 0; t < xs.size(); ++t) {
    const int64_t len = xs[t].dim(axis) * inner;
    const double* src = xs[t].data();
    double* dst = out.data() + offsets[t] * inner;
    kernels::parallel_for(outer, [&](int64_t o) {
      std::memcpy(dst + o * out_row, src + o * len, static_cast<size_t>(len) * sizeof(double));
    });
  }

  std::vector<NodePtr> parents;
  parents.reserve(xs.size());
  for (const auto& t : xs) parents.push_back(t.node());
  return make_op(std::move(out_shape), std::move(out), parents,
                 [parents, offsets, outer, inner, out_row](Node& self) {
                   const double* g = self.grad.data();
                   for (size_t t = 0; t < parents.size(); ++t) {
                     if (!parents[t]->requires_grad) continue;
                     const int64_t len = (offsets[t + 1] - offsets[t]) * inner;
                     double* dst = parents[t]->grad_data();
                     const double* src = g + offsets[t] * inner;
                     kernels::parallel_for(outer, [&](int64_t o) {
                       const double* grow = src + o * out_row;
                       double* drow = dst + o * len;
                       for (int64_t i = 0; i < len; ++i) drow[i] += grow[i];
                     });
                   }
                 });
}

namespace {

struct MatDims {
  int batch, m, k, n;
  Shape out_shape;
};

MatDims matmul_dims(const Tensor& a, const Tensor& b, bool b_transposed, const char* op) {
  check_arg(a.rank() >= 2 && b.rank() == a.rank(),
            std::string(op) + ": ranks " + std::to_string(a.rank()) + " and " + std::to_string(b.rank()) + " unsupported");
  int64_t batch = 1;
  for (int i = 0; i < a.rank() - 2; ++i) {
    check_arg(a.dim(i) == b.dim(i), std::string(op) + ": leading extents differ");
    batch *= a.dim(i);
  }
  const int m = a.dim(a.rank() - 2);
  const int k = a.dim(a.rank() - 1);
  const int bk = b_transposed ? b.dim(b.rank() - 1) : b.dim(b.rank() - 2);
  const int n = b_transposed ? b.dim(b.rank() - 2) : b.dim(b.rank() - 1);
  check_arg(bk == k, std::string(op) + ": inner extents differ for " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Shape out = a.shape();
  out[out.size() - 1] = n;
  return {static_cast<int>(batch), m, k, n, std::move(out)};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatDims d = matmul_dims(a, b, false, "matmul");
  std::vector<double> out(static_cast<size_t>(numel(d.out_shape)), 0.0);
  kernels::matmul_nn(d.batch, d.m, d.k, d.n, a.data(), b.data(), out.data());

  auto na = a.node();
  auto nb = b.node();
  return make_op(d.out_shape, std::move(out), {na, nb}, [na, nb, d](Node& self) {
    const double* g = self.grad.data();
    if (na->requires_grad) {
      kernels::matmul_nt(d.batch, d.m, d.n, d.k, g, nb->value.data(), na->grad_data());
    }
    if (nb->requires_grad) {
      kernels::matmul_tn(d.batch, d.m, d.k, d.n, na->value.data(), g, nb->grad_data());
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const MatDims d = matmul_dims(a, b, true, "matmul_nt");
  std::vector<double> out(static_cast<size_t>(numel(d.out_shape)), 0.0);
  kernels::matmul_nt(d.batch, d.m, d.k, d.n, a.data(), b.data(), out.data());

  auto na = a.node();
  auto nb = b.node();
  return make_op(d.out_shape, std::move(out), {na, nb}, [na, nb, d](Node& self) {
    const double* g = self.grad.data();
    if (na->requires_grad) {
      kernels::matmul_nn(d.batch, d.m, d.n, d.k, g, nb->value.data(), na->grad_data());
    }
    if (nb->requires_grad) {
      kernels::matmul_tn(d.batch, d.m, d.n, d.k, g, na->value.data(), nb->grad_data());
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_arg(x.rank() >= 1, "linear: rank-0 input");
  check_arg(weight.rank() == 2, "linear: weight must be [Dout, Din], got " + shape_str(weight.shape()));
  const int din = weight.dim(1);
  const int dout = weight.dim(0);
  check_arg(x.dim(x.rank() - 1) == din,
            "linear: trailing extent of " + shape_str(x.shape()) + " does not match weight " + shape_str(weight.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) {
    check_arg(bias.rank() == 1 && bias.dim(0) == dout,
              "linear: bias shape " + shape_str(bias.shape()) + " does not match Dout " + std::to_string(dout));
  }
  const int64_t rows = x.size() / din;

  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 1] = dout;
  std::vector<double> out(static_cast<size_t>(rows) * dout, 0.0);
  if (has_bias) {
    const double* pb = bias.data();
    kernels::parallel_for(rows, [&](int64_t r) {
      std::memcpy(out.data() + r * dout, pb, static_cast<size_t>(dout) * sizeof(double));
    });
  }
  kernels::matmul_nt(1, static_cast<int>(rows), din, dout, x.data(), weight.data(), out.data());

  auto nx = x.node();
  auto nw = weight.node();
  std::vector<NodePtr> parents{nx, nw};
  NodePtr nb;
  if (has_bias) {
    nb = bias.node();
    parents.push_back(nb);
  }
  return make_op(std::move(out_shape), std::move(out), std::move(parents),
                 [nx, nw, nb, rows, din, dout](Node& self) {
                   const double* g = self.grad.data();
                   if (nx->requires_grad) {
                     kernels::matmul_nn(1, static_cast<int>(rows), dout, din, g, nw->value.data(), nx->grad_data());
                   }
                   if (nw->requires_grad) {
                     kernels::matmul_tn(1, static_cast<int>(rows), dout, din, g, nx->value.data(), nw->grad_data());
                   }
                   if (nb && nb->requires_grad) {
                     double* db = nb->grad_data();
                     kernels::parallel_for(dout, [&](int64_t o) {
                       double acc = 0.0;
                       for (int64_t r = 0; r < rows; ++r) acc += g[r * dout + o];
                       db[o] += acc;
                     });
                   }
                 });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int padding, int dilation) {
  check_nchw(x, "conv2d");
  check_arg(weight.rank() == 4 && weight.dim(2) == weight.dim(3),
            "conv2d: weight must be [Cout,Cin,k,k], got " + shape_str(weight.shape()));
  check_arg(stride >= 1 && dilation >= 1 && padding >= 0, "conv2d: invalid stride/padding/dilation");
  check_arg(x.dim(1) == weight.dim(1),
            "conv2d: input channels " + std::to_string(x.dim(1)) + " (shape " + shape_str(x.shape()) +
                ") do not match weight channels " + std::to_string(weight.dim(1)) + " (shape " +
                shape_str(weight.shape()) + ")");

  kernels::ConvGeom g;
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.padding = padding;
  g.dilation = dilation;
  const int eff = dilation * (g.k - 1) + 1;
  check_arg(eff <= g.h + 2 * padding && eff <= g.w + 2 * padding,
            "conv2d: effective kernel extent " + std::to_string(eff) + " exceeds padded input " +
                std::to_string(g.h + 2 * padding) + "x" + std::to_string(g.w + 2 * padding));
  g.with_output();

  const bool has_bias = bias.defined();
  if (has_bias) {
    check_arg(bias.rank() == 1 && bias.dim(0) == g.cout,
              "conv2d: bias shape " + shape_str(bias.shape()) + " does not match Cout " + std::to_string(g.cout));
  }

  Shape out_shape{g.n, g.cout, g.hout, g.wout};
  std::vector<double> out(static_cast<size_t>(numel(out_shape)));
  kernels::conv2d_forward(g, x.data(), weight.data(), has_bias ? bias.data() : nullptr, out.data());

  auto nx = x.node();
  auto nw = weight.node();
  std::vector<NodePtr> parents{nx, nw};
  NodePtr nb;
  if (has_bias) {
    nb = bias.node();
    parents.push_back(nb);
  }
  return make_op(std::move(out_shape), std::move(out), std::move(parents), [nx, nw, nb, g](Node& self) {
    const double* gy = self.grad.data();
    if (nx->requires_grad) kernels::conv2d_backward_input(g, gy, nw->value.data(), nx->grad_data());
    if (nw->requires_grad) kernels::conv2d_backward_weight(g, gy, nx->value.data(), nw->grad_data());
    if (nb && nb->requires_grad) kernels::conv2d_backward_bias(g, gy, nb->grad_data());
  });
}

Tensor global_avg_pool(const Tensor& x) {
  check_nchw(x, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::vector<double> out(static_cast<size_t>(n) * c);
  const double* px = x.data();
  kernels::parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
    const double* p = px + nc * plane;
    double acc = 0.0;
    for (int64_t i = 0; i < plane; ++i) acc += p[i];
    out[static_cast<size_t>(nc)] = acc / static_cast<double>(plane);
  });

  auto nx = x.node();
  return make_op(Shape{n, c, 1, 1}, std::move(out), {nx}, [nx, n, c, plane](Node& self) {
    const double* g = self.grad.data();
    double* dx = nx->grad_data();
    const double inv = 1.0 / static_cast<double>(plane);
    kernels::parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
      const double gv = g[nc] * inv;
      double* p = dx + nc * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] += gv;
    });
  });
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  check_nchw(x, "bilinear_resize");
  check_arg(out_h >= 1 && out_w >= 1, "bilinear_resize: output extents must be positive");
  const int planes = x.dim(0) * x.dim(1);
  const int h = x.dim(2), w = x.dim(3);
  Shape out_shape{x.dim(0), x.dim(1), out_h, out_w};
  std::vector<double> out(static_cast<size_t>(numel(out_shape)));
  kernels::bilinear_forward(planes, h, w, out_h, out_w, x.data(), out.data());

  auto nx = x.node();
  return make_op(std::move(out_shape), std::move(out), {nx}, [nx, planes, h, w, out_h, out_w](Node& self) {
    kernels::bilinear_backward(planes, h, w, out_h, out_w, self.grad.data(), nx->grad_data());
  });
}

Tensor scale_channels(const Tensor& x, const Tensor& s) {
  check_nchw(x, "scale_channels");
  const int n = x.dim(0), c = x.dim(1);
  const bool ok = (s.rank() == 2 && s.dim(0) == n && s.dim(1) == c) ||
                  (s.rank() == 4 && s.dim(0) == n && s.dim(1) == c && s.dim(2) == 1 && s.dim(3) == 1);
  check_arg(ok, "scale_channels: weights shape " + shape_str(s.shape()) + " does not match " + shape_str(x.shape()));
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);

  std::vector<double> out(static_cast<size_t>(x.size()));
  const double* px = x.data();
  const double* ps = s.data();
  kernels::parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
    const double sv = ps[nc];
    const double* src = px + nc * plane;
    double* dst = out.data() + nc * plane;
    for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * sv;
  });

  auto nx = x.node();
  auto ns = s.node();
  return make_op(x.shape(), std::move(out), {nx, ns}, [nx, ns, n, c, plane](Node& self) {
    const double* g = self.grad.data();
    if (nx->requires_grad) {
      double* dx = nx->grad_data();
      const double* sv = ns->value.data();
      kernels::parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
        const double* grow = g + nc * plane;
        double* drow = dx + nc * plane;
        for (int64_t i = 0; i < plane; ++i) drow[i] += grow[i] * sv[nc];
      });
    }
    if (ns->requires_grad) {
      double* ds = ns->grad_data();
      const double* vx = nx->value.data();
      kernels::parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
        const double* grow = g + nc * plane;
        const double* xrow = vx + nc * plane;
        double acc = 0.0;
        for (int64_t i = 0; i < plane; ++i) acc += grow[i] * xrow[i];
        ds[nc] += acc;
      });
    }
  });
}

Tensor scale_spatial(const Tensor& x, const Tensor& a) {
  check_nchw(x, "scale_spatial");
  check_arg(a.rank() == 4 && a.dim(0) == x.dim(0) && a.dim(1) == 1 && a.dim(2) == x.dim(2) && a.dim(3) == x.dim(3),
            "scale_spatial: map shape " + shape_str(a.shape()) + " does not match " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);

  std::vector<double> out(static_cast<size_t>(x.size()));
  const double* px = x.data();
  const double* pa = a.data();
  kernels::parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
    const int64_t b = nc / c;
    const double* arow = pa + b * plane;
    const double* src = px + nc * plane;
    double* dst = out.data() + nc * plane;
    for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * arow[i];
  });

  auto nx = x.node();
  auto na = a.node();
  return make_op(x.shape(), std::move(out), {nx, na}, [nx, na, n, c, plane](Node& self) {
    const double* g = self.grad.data();
    if (nx->requires_grad) {
      double* dx = nx->grad_data();
      const double* va = na->value.data();
      kernels::parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
        const int64_t b = nc / c;
        const double* arow = va + b * plane;
        const double* grow = g + nc * plane;
        double* drow = dx + nc * plane;
        for (int64_t i = 0; i < plane; ++i) drow[i] += grow[i] * arow[i];
      });
    }
    if (na->requires_grad) {
      double* da = na->grad_data();
      const double* vx = nx->value.data();
      kernels::parallel_for(static_cast<int64_t>(n) * plane, [&](int64_t bi) {
        const int64_t b = bi / plane;
        const int64_t i = bi % plane;
        double acc = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          const int64_t at = (b * c + ch) * plane + i;
          acc += g[at] * vx[at];
        }
        da[bi] += acc;
      });
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, Tensor& num_updates,
                  bool training, double momentum, double eps) {
  check_nchw(x, "batch_norm");
  check_arg(eps > 0.0, "batch_norm: eps must be positive");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check_arg(gamma.rank() == 1 && gamma.dim(0) == c && beta.rank() == 1 && beta.dim(0) == c,
            "batch_norm: gamma/beta must be [" + std::to_string(c) + "]");
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t per_channel = static_cast<int64_t>(n) * plane;

  std::vector<double> mean(static_cast<size_t>(c));
  std::vector<double> inv_std(static_cast<size_t>(c));
  if (training) {
    std::vector<double> var(static_cast<size_t>(c));
    const double* px = x.data();
    kernels::parallel_for(c, [&](int64_t ch) {
      double acc = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = px + (static_cast<int64_t>(b) * c + ch) * plane;
        for (int64_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(per_channel);
      double vacc = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = px + (static_cast<int64_t>(b) * c + ch) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          vacc += d * d;
        }
      }
      mean[static_cast<size_t>(ch)] = mu;
      var[static_cast<size_t>(ch)] = vacc / static_cast<double>(per_channel);
      inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var[static_cast<size_t>(ch)] + eps);
    });
    // EMA update of the running buffers (biased variance).
    double* rm = running_mean.data();
    double* rv = running_var.data();
    for (int ch = 0; ch < c; ++ch) {
      rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mean[static_cast<size_t>(ch)];
      rv[ch] = (1.0 - momentum) * rv[ch] + momentum * var[static_cast<size_t>(ch)];
    }
    num_updates.data()[0] += 1.0;
  } else {
    check_arg(num_updates.item() > 0.0, "batch_norm: eval mode without populated running stats");
    const double* rm = running_mean.data();
    const double* rv = running_var.data();
    for (int ch = 0; ch < c; ++ch) {
      mean[static_cast<size_t>(ch)] = rm[ch];
      inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(rv[ch] + eps);
    }
  }

  std::vector<double> xhat(static_cast<size_t>(x.size()));
  std::vector<double> out(static_cast<size_t>(x.size()));
  {
    const double* px = x.data();
    const double* pg = gamma.data();
    const double* pb = beta.data();
    kernels::parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
      const int ch = static_cast<int>(nc % c);
      const double mu = mean[static_cast<size_t>(ch)];
      const double inv = inv_std[static_cast<size_t>(ch)];
      const double gv = pg[ch], bv = pb[ch];
      const double* src = px + nc * plane;
      double* xh = xhat.data() + nc * plane;
      double* dst = out.data() + nc * plane;
      for (int64_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mu) * inv;
        dst[i] = gv * xh[i] + bv;
      }
    });
  }

  auto nx = x.node();
  auto ng = gamma.node();
  auto nb = beta.node();
  return make_op(x.shape(), std::move(out), {nx, ng, nb},
                 [nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, plane, per_channel,
                  training](Node& self) {
                   const double* g = self.grad.data();
                   // Per-channel reductions shared by every input slot.
                   std::vector<double> sum_g(static_cast<size_t>(c));
                   std::vector<double> sum_gx(static_cast<size_t>(c));
                   kernels::parallel_for(c, [&](int64_t ch) {
                     double s = 0.0, sx = 0.0;
                     for (int b = 0; b < n; ++b) {
                       const int64_t base = (static_cast<int64_t>(b) * c + ch) * plane;
                       for (int64_t i = 0; i < plane; ++i) {
                         s += g[base + i];
                         sx += g[base + i] * xhat[static_cast<size_t>(base + i)];
                       }
                     }
                     sum_g[static_cast<size_t>(ch)] = s;
                     sum_gx[static_cast<size_t>(ch)] = sx;
                   });
                   if (ng->requires_grad) {
                     double* dg = ng->grad_data();
                     for (int ch = 0; ch < c; ++ch) dg[ch] += sum_gx[static_cast<size_t>(ch)];
                   }
                   if (nb->requires_grad) {
                     double* db = nb->grad_data();
                     for (int ch = 0; ch < c; ++ch) db[ch] += sum_g[static_cast<size_t>(ch)];
                   }
                   if (nx->requires_grad) {
                     double* dx = nx->grad_data();
                     const double* gv = ng->value.data();
                     const double m = static_cast<double>(per_channel);
                     kernels::parallel_for(static_cast<int64_t>(n) * c, [&](int64_t nc) {
                       const int ch = static_cast<int>(nc % c);
                       const double inv = inv_std[static_cast<size_t>(ch)];
                       const double ga = gv[ch];
                       const double* grow = g + nc * plane;
                       const double* xh = xhat.data() + nc * plane;
                       double* drow = dx + nc * plane;
                       if (training) {
                         const double s1 = sum_g[static_cast<size_t>(ch)];
                         const double s2 = sum_gx[static_cast<size_t>(ch)];
                         for (int64_t i = 0; i < plane; ++i) {
                           drow[i] += inv * ga / m * (m * grow[i] - s1 - xh[i] * s2);
                         }
                       } else {
                         for (int64_t i = 0; i < plane; ++i) drow[i] += grow[i] * ga * inv;
                       }
                     });
                   }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_arg(x.rank() >= 1, "layer_norm: rank-0 input");
  const int d = x.dim(x.rank() - 1);
  check_arg(gamma.rank() == 1 && gamma.dim(0) == d && beta.rank() == 1 && beta.dim(0) == d,
            "layer_norm: gamma/beta must be [" + std::to_string(d) + "]");
  const int64_t rows = x.size() / d;

  std::vector<double> xhat(static_cast<size_t>(x.size()));
  std::vector<double> inv_std(static_cast<size_t>(rows));
  std::vector<double> out(static_cast<size_t>(x.size()));
  {
    const double* px = x.data();
    const double* pg = gamma.data();
    const double* pb = beta.data();
    kernels::parallel_for(rows, [&](int64_t r) {
      const double* src = px + r * d;
      double mu = 0.0;
      for (int j = 0; j < d; ++j) mu += src[j];
      mu /= d;
      double var = 0.0;
      for (int j = 0; j < d; ++j) {
        const double dv = src[j] - mu;
        var += dv * dv;
      }
      var /= d;
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(r)] = inv;
      double* xh = xhat.data() + r * d;
      double* dst = out.data() + r * d;
      for (int j = 0; j < d; ++j) {
        xh[j] = (src[j] - mu) * inv;
        dst[j] = pg[j] * xh[j] + pb[j];
      }
    });
  }

  auto nx = x.node();
  auto ng = gamma.node();
  auto nb = beta.node();
  return make_op(x.shape(), std::move(out), {nx, ng, nb},
                 [nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](Node& self) {
                   const double* g = self.grad.data();
                   if (ng->requires_grad || nb->requires_grad) {
                     double* dg = ng->requires_grad ? ng->grad_data() : nullptr;
                     double* db = nb->requires_grad ? nb->grad_data() : nullptr;
                     kernels::parallel_for(d, [&](int64_t j) {
                       double ag = 0.0, ab = 0.0;
                       for (int64_t r = 0; r < rows; ++r) {
                         ag += g[r * d + j] * xhat[static_cast<size_t>(r * d + j)];
                         ab += g[r * d + j];
                       }
                       if (dg) dg[j] += ag;
                       if (db) db[j] += ab;
                     });
                   }
                   if (nx->requires_grad) {
                     double* dx = nx->grad_data();
                     const double* gv = ng->value.data();
                     kernels::parallel_for(rows, [&](int64_t r) {
                       const double* grow = g + r * d;
                       const double* xh = xhat.data() + r * d;
                       const double inv = inv_std[static_cast<size_t>(r)];
                       double s1 = 0.0, s2 = 0.0;
                       for (int j = 0; j < d; ++j) {
                         s1 += grow[j] * gv[j];
                         s2 += grow[j] * gv[j] * xh[j];
                       }
                       double* drow = dx + r * d;
                       for (int j = 0; j < d; ++j) {
                         drow[j] += inv / d * (d * grow[j] * gv[j] - s1 - xh[j] * s2);
                       }
                     });
                   }
                 });
}

Tensor multi_head_self_attention(const Tensor& x, const MhsaParams& p, int heads,
                                 Tensor* attention_out) {
  check_arg(x.rank() == 3, "multi_head_self_attention: expected [N,L,D], got " + shape_str(x.shape()));
  const int n = x.dim(0), l = x.dim(1), d = x.dim(2);
  check_arg(heads >= 1 && d % heads == 0,
            "multi_head_self_attention: embedding dim " + std::to_string(d) + " not divisible by " +
                std::to_string(heads) + " heads");
  const int dh = d / heads;

  auto to_heads = [&](const Tensor& t) {
    return permute(reshape(t, {n, l, heads, dh}), {0, 2, 1, 3});  // [N,h,L,dh]
  };
  const Tensor q = to_heads(linear(x, p.wq, p.bq));
  const Tensor k = to_heads(linear(x, p.wk, Tensor()));
  const Tensor v = to_heads(linear(x, p.wv, p.bv));

  const Tensor scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor attn = softmax(scores, -1);
  if (attention_out) *attention_out = attn;

  const Tensor context = matmul(attn, v);  // [N,h,L,dh]
  const Tensor merged = reshape(permute(context, {0, 2, 1, 3}), {n, l, d});
  return linear(merged, p.wo, p.bo);
}

}  // namespace cafct::ops
