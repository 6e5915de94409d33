#include "cafct/kernels.hpp"

#include <atomic>

namespace cafct::kernels {

// Serial reference implementations.
void conv2d_forward_serial(const ConvGeom&, const double*, const double*, const double*, double*);
void conv2d_backward_input_serial(const ConvGeom&, const double*, const double*, double*);
void conv2d_backward_weight_serial(const ConvGeom&, const double*, const double*, double*);
void conv2d_backward_bias_serial(const ConvGeom&, const double*, double*);
void matmul_nn_serial(int, int, int, int, const double*, const double*, double*);
void matmul_nt_serial(int, int, int, int, const double*, const double*, double*);
void matmul_tn_serial(int, int, int, int, const double*, const double*, double*);
void bilinear_forward_serial(int, int, int, int, int, const double*, double*);
void bilinear_backward_serial(int, int, int, int, int, const double*, double*);

// OpenMP implementations.
void conv2d_forward_parallel(const ConvGeom&, const double*, const double*, const double*, double*);
void conv2d_backward_input_parallel(const ConvGeom&, const double*, const double*, double*);
void conv2d_backward_weight_parallel(const ConvGeom&, const double*, const double*, double*);
void conv2d_backward_bias_parallel(const ConvGeom&, const double*, double*);
void matmul_nn_parallel(int, int, int, int, const double*, const double*, double*);
void matmul_nt_parallel(int, int, int, int, const double*, const double*, double*);
void matmul_tn_parallel(int, int, int, int, const double*, const double*, double*);
void bilinear_forward_parallel(int, int, int, int, int, const double*, double*);
void bilinear_backward_parallel(int, int, int, int, int, const double*, double*);

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

void conv2d_forward(const ConvGeom& g, const double* x, const double* w,
                    const double* bias, double* y) {
  if (backend() == Backend::serial) {
    conv2d_forward_serial(g, x, w, bias, y);
  } else {
    conv2d_forward_parallel(g, x, w, bias, y);
  }
}

void conv2d_backward_input(const ConvGeom& g, const double* dy, const double* w, double* dx) {
  if (backend() == Backend::serial) {
    conv2d_backward_input_serial(g, dy, w, dx);
  } else {
    conv2d_backward_input_parallel(g, dy, w, dx);
  }
}

void conv2d_backward_weight(const ConvGeom& g, const double* dy, const double* x, double* dw) {
  if (backend() == Backend::serial) {
    conv2d_backward_weight_serial(g, dy, x, dw);
  } else {
    conv2d_backward_weight_parallel(g, dy, x, dw);
  }
}

void conv2d_backward_bias(const ConvGeom& g, const double* dy, double* db) {
  if (backend() == Backend::serial) {
    conv2d_backward_bias_serial(g, dy, db);
  } else {
    conv2d_backward_bias_parallel(g, dy, db);
  }
}

void matmul_nn(int batch, int m, int k, int n, const double* a, const double* bm, double* y) {
  if (backend() == Backend::serial) {
    matmul_nn_serial(batch, m, k, n, a, bm, y);
  } else {
    matmul_nn_parallel(batch, m, k, n, a, bm, y);
  }
}

void matmul_nt(int batch, int m, int k, int n, const double* a, const double* bm, double* y) {
  if (backend() == Backend::serial) {
    matmul_nt_serial(batch, m, k, n, a, bm, y);
  } else {
    matmul_nt_parallel(batch, m, k, n, a, bm, y);
  }
}

void matmul_tn(int batch, int r, int m, int n, const double* a, const double* bm, double* y) {
  if (backend() == Backend::serial) {
    matmul_tn_serial(batch, r, m, n, a, bm, y);
  } else {
    matmul_tn_parallel(batch, r, m, n, a, bm, y);
  }
}

void bilinear_forward(int planes, int h, int w, int oh, int ow, const double* x, double* y) {
  if (backend() == Backend::serial) {
    bilinear_forward_serial(planes, h, w, oh, ow, x, y);
  } else {
    bilinear_forward_parallel(planes, h, w, oh, ow, x, y);
  }
}

void bilinear_backward(int planes, int h, int w, int oh, int ow, const double* dy, double* dx) {
  if (backend() == Backend::serial) {
    bilinear_backward_serial(planes, h, w, oh, ow, dy, dx);
  } else {
    bilinear_backward_parallel(planes, h, w, oh, ow, dy, dx);
  }
}

}  // namespace cafct::kernels
