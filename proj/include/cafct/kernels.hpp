#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cafct::kernels {

// The parallel backend partitions work so that every output element is
// written by exactly one thread and computed in a fixed inner order, which
// keeps results independent of thread count. The serial backend is an
// independently written naive reference kept for testing and benchmarking.
enum class Backend { serial, parallel };

Backend backend();
void set_backend(Backend b);

struct ConvGeom {
  int n = 1, cin = 1, h = 1, w = 1;
  int cout = 1, k = 1;
  int stride = 1, padding = 0, dilation = 1;
  int hout = 0, wout = 0;

  ConvGeom& with_output() {
    const int eff = dilation * (k - 1) + 1;
    hout = (h + 2 * padding - eff) / stride + 1;
    wout = (w + 2 * padding - eff) / stride + 1;
    return *this;
  }
};

// NCHW convolution with zero padding. Backward kernels accumulate (+=) into
// their destination buffers; callers zero them when a plain value is wanted.
void conv2d_forward(const ConvGeom& g, const double* x, const double* w,
                    const double* bias, double* y);
void conv2d_backward_input(const ConvGeom& g, const double* dy, const double* w, double* dx);
void conv2d_backward_weight(const ConvGeom& g, const double* dy, const double* x, double* dw);
void conv2d_backward_bias(const ConvGeom& g, const double* dy, double* db);

// Batched GEMM family; all accumulate into y.
//   nn: y[b,m,n] += sum_k a[b,m,k] * bm[b,k,n]
//   nt: y[b,m,n] += sum_k a[b,m,k] * bm[b,n,k]
//   tn: y[b,m,n] += sum_r a[b,r,m] * bm[b,r,n]
void matmul_nn(int batch, int m, int k, int n, const double* a, const double* bm, double* y);
void matmul_nt(int batch, int m, int k, int n, const double* a, const double* bm, double* y);
void matmul_tn(int batch, int r, int m, int n, const double* a, const double* bm, double* y);

// Half-pixel-aligned bilinear resampling over independent planes.
void bilinear_forward(int planes, int h, int w, int oh, int ow, const double* x, double* y);
void bilinear_backward(int planes, int h, int w, int oh, int ow, const double* dy, double* dx);

// Source coordinate for output index i at the given in/out extents, clamped
// to the border; shared by the forward and backward resampling kernels.
inline void bilinear_axis(int in, int out, int i, int* lo, int* hi, double* frac) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  if (src > static_cast<double>(in - 1)) src = static_cast<double>(in - 1);
  const int l = static_cast<int>(src);
  *lo = l;
  *hi = l + 1 < in ? l + 1 : in - 1;
  *frac = src - static_cast<double>(l);
}

namespace detail {
constexpr int64_t kParallelGrain = 2048;
}

// Runs fn(i) for i in [0, n), across threads on the parallel backend. fn must
// be a pure per-index computation (no cross-index accumulation) so the result
// does not depend on the partitioning.
template <class F>
void parallel_for(int64_t n, F&& fn) {
#ifdef _OPENMP
  const bool par = backend() == Backend::parallel && n >= detail::kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < n; ++i) fn(i);
#else
  for (int64_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace cafct::kernels
