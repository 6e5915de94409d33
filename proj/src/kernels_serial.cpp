// Naive single-threaded reference kernels. Kept deliberately close to the
// textbook loop nests so they can serve as an independent check on the
// parallel implementations.

#include "cafct/kernels.hpp"

namespace cafct::kernels {

void conv2d_forward_serial(const ConvGeom& g, const double* x, const double* w,
                           const double* bias, double* y) {
  const int64_t x_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t y_plane = static_cast<int64_t>(g.hout) * g.wout;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.cout; ++co) {
      for (int oy = 0; oy < g.hout; ++oy) {
        for (int ox = 0; ox < g.wout; ++ox) {
          double acc = bias ? bias[co] : 0.0;
          for (int ci = 0; ci < g.cin; ++ci) {
            for (int kh = 0; kh < g.k; ++kh) {
              const int iy = oy * g.stride - g.padding + kh * g.dilation;
              if (iy < 0 || iy >= g.h) continue;
              for (int kw = 0; kw < g.k; ++kw) {
                const int ix = ox * g.stride - g.padding + kw * g.dilation;
                if (ix < 0 || ix >= g.w) continue;
                acc += x[(static_cast<int64_t>(n) * g.cin + ci) * x_plane + static_cast<int64_t>(iy) * g.w + ix] *
                       w[((static_cast<int64_t>(co) * g.cin + ci) * g.k + kh) * g.k + kw];
              }
            }
          }
          y[(static_cast<int64_t>(n) * g.cout + co) * y_plane + static_cast<int64_t>(oy) * g.wout + ox] = acc;
        }
      }
    }
  }
}

// Scatter form: walk every output position and push its contribution back.
void conv2d_backward_input_serial(const ConvGeom& g, const double* dy, const double* w, double* dx) {
  const int64_t x_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t y_plane = static_cast<int64_t>(g.hout) * g.wout;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.cout; ++co) {
      for (int oy = 0; oy < g.hout; ++oy) {
        for (int ox = 0; ox < g.wout; ++ox) {
          const double gy = dy[(static_cast<int64_t>(n) * g.cout + co) * y_plane + static_cast<int64_t>(oy) * g.wout + ox];
          for (int ci = 0; ci < g.cin; ++ci) {
            for (int kh = 0; kh < g.k; ++kh) {
              const int iy = oy * g.stride - g.padding + kh * g.dilation;
              if (iy < 0 || iy >= g.h) continue;
              for (int kw = 0; kw < g.k; ++kw) {
                const int ix = ox * g.stride - g.padding + kw * g.dilation;
                if (ix < 0 || ix >= g.w) continue;
                dx[(static_cast<int64_t>(n) * g.cin + ci) * x_plane + static_cast<int64_t>(iy) * g.w + ix] +=
                    gy * w[((static_cast<int64_t>(co) * g.cin + ci) * g.k + kh) * g.k + kw];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight_serial(const ConvGeom& g, const double* dy, const double* x, double* dw) {
  const int64_t x_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t y_plane = static_cast<int64_t>(g.hout) * g.wout;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.cout; ++co) {
      for (int oy = 0; oy < g.hout; ++oy) {
        for (int ox = 0; ox < g.wout; ++ox) {
          const double gy = dy[(static_cast<int64_t>(n) * g.cout + co) * y_plane + static_cast<int64_t>(oy) * g.wout + ox];
          for (int ci = 0; ci < g.cin; ++ci) {
            for (int kh = 0; kh < g.k; ++kh) {
              const int iy = oy * g.stride - g.padding + kh * g.dilation;
              if (iy < 0 || iy >= g.h) continue;
              for (int kw = 0; kw < g.k; ++kw) {
                const int ix = ox * g.stride - g.padding + kw * g.dilation;
                if (ix < 0 || ix >= g.w) continue;
                dw[((static_cast<int64_t>(co) * g.cin + ci) * g.k + kh) * g.k + kw] +=
                    gy * x[(static_cast<int64_t>(n) * g.cin + ci) * x_plane + static_cast<int64_t>(iy) * g.w + ix];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_bias_serial(const ConvGeom& g, const double* dy, double* db) {
  const int64_t y_plane = static_cast<int64_t>(g.hout) * g.wout;
  for (int n = 0; n < g.n; ++n) {
    for (int co = 0; co < g.cout; ++co) {
      const double* plane = dy + (static_cast<int64_t>(n) * g.cout + co) * y_plane;
      for (int64_t i = 0; i < y_plane; ++i) db[co] += plane[i];
    }
  }
}

void matmul_nn_serial(int batch, int m, int k, int n, const double* a, const double* bm, double* y) {
  for (int b = 0; b < batch; ++b) {
    const double* ab = a + static_cast<int64_t>(b) * m * k;
    const double* bb = bm + static_cast<int64_t>(b) * k * n;
    double* yb = y + static_cast<int64_t>(b) * m * n;
    for (int i = 0; i < m; ++i) {
      for (int kk = 0; kk < k; ++kk) {
        const double av = ab[static_cast<int64_t>(i) * k + kk];
        for (int j = 0; j < n; ++j) {
          yb[static_cast<int64_t>(i) * n + j] += av * bb[static_cast<int64_t>(kk) * n + j];
        }
      }
    }
  }
}

void matmul_nt_serial(int batch, int m, int k, int n, const double* a, const double* bm, double* y) {
  for (int b = 0; b < batch; ++b) {
    const double* ab = a + static_cast<int64_t>(b) * m * k;
    const double* bb = bm + static_cast<int64_t>(b) * n * k;
    double* yb = y + static_cast<int64_t>(b) * m * n;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk) {
          acc += ab[static_cast<int64_t>(i) * k + kk] * bb[static_cast<int64_t>(j) * k + kk];
        }
        yb[static_cast<int64_t>(i) * n + j] += acc;
      }
    }
  }
}

void matmul_tn_serial(int batch, int r, int m, int n, const double* a, const double* bm, double* y) {
  for (int b = 0; b < batch; ++b) {
    const double* ab = a + static_cast<int64_t>(b) * r * m;
    const double* bb = bm + static_cast<int64_t>(b) * r * n;
    double* yb = y + static_cast<int64_t>(b) * m * n;
    for (int rr = 0; rr < r; ++rr) {
      for (int i = 0; i < m; ++i) {
        const double av = ab[static_cast<int64_t>(rr) * m + i];
        for (int j = 0; j < n; ++j) {
          yb[static_cast<int64_t>(i) * n + j] += av * bb[static_cast<int64_t>(rr) * n + j];
        }
      }
    }
  }
}

void bilinear_forward_serial(int planes, int h, int w, int oh, int ow, const double* x, double* y) {
  for (int p = 0; p < planes; ++p) {
    const double* xp = x + static_cast<int64_t>(p) * h * w;
    double* yp = y + static_cast<int64_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      int y0, y1;
      double fy;
      bilinear_axis(h, oh, oy, &y0, &y1, &fy);
      for (int ox = 0; ox < ow; ++ox) {
        int x0, x1;
        double fx;
        bilinear_axis(w, ow, ox, &x0, &x1, &fx);
        const double top = xp[static_cast<int64_t>(y0) * w + x0] * (1.0 - fx) + xp[static_cast<int64_t>(y0) * w + x1] * fx;
        const double bot = xp[static_cast<int64_t>(y1) * w + x0] * (1.0 - fx) + xp[static_cast<int64_t>(y1) * w + x1] * fx;
        yp[static_cast<int64_t>(oy) * ow + ox] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
}

void bilinear_backward_serial(int planes, int h, int w, int oh, int ow, const double* dy, double* dx) {
  for (int p = 0; p < planes; ++p) {
    const double* gp = dy + static_cast<int64_t>(p) * oh * ow;
    double* dp = dx + static_cast<int64_t>(p) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      int y0, y1;
      double fy;
      bilinear_axis(h, oh, oy, &y0, &y1, &fy);
      for (int ox = 0; ox < ow; ++ox) {
        int x0, x1;
        double fx;
        bilinear_axis(w, ow, ox, &x0, &x1, &fx);
        const double g = gp[static_cast<int64_t>(oy) * ow + ox];
        dp[static_cast<int64_t>(y0) * w + x0] += g * (1.0 - fy) * (1.0 - fx);
        dp[static_cast<int64_t>(y0) * w + x1] += g * (1.0 - fy) * fx;
        dp[static_cast<int64_t>(y1) * w + x0] += g * fy * (1.0 - fx);
        dp[static_cast<int64_t>(y1) * w + x1] += g * fy * fx;
      }
    }
  }
}

}  // namespace cafct::kernels
