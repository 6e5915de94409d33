// OpenMP kernels. All loops are arranged gather-style: each destination
// element is produced by one thread with a fixed inner summation order, so
// outputs do not depend on the thread count or schedule.

#include "cafct/kernels.hpp"

namespace cafct::kernels {

namespace {

template <class F>
void omp_for(int64_t n, F&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) fn(i);
#else
  for (int64_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace

void conv2d_forward_parallel(const ConvGeom& g, const double* x, const double* w,
                             const double* bias, double* y) {
  const int64_t x_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t y_plane = static_cast<int64_t>(g.hout) * g.wout;
  const int64_t rows = static_cast<int64_t>(g.n) * g.cout * g.hout;
  omp_for(rows, [&](int64_t row) {
    const int oy = static_cast<int>(row % g.hout);
    const int co = static_cast<int>((row / g.hout) % g.cout);
    const int n = static_cast<int>(row / (static_cast<int64_t>(g.hout) * g.cout));
    double* yrow = y + (static_cast<int64_t>(n) * g.cout + co) * y_plane + static_cast<int64_t>(oy) * g.wout;
    for (int ox = 0; ox < g.wout; ++ox) {
      double acc = bias ? bias[co] : 0.0;
      for (int ci = 0; ci < g.cin; ++ci) {
        const double* xc = x + (static_cast<int64_t>(n) * g.cin + ci) * x_plane;
        const double* wc = w + (static_cast<int64_t>(co) * g.cin + ci) * g.k * g.k;
        for (int kh = 0; kh < g.k; ++kh) {
          const int iy = oy * g.stride - g.padding + kh * g.dilation;
          if (iy < 0 || iy >= g.h) continue;
          const double* xrow = xc + static_cast<int64_t>(iy) * g.w;
          const double* wrow = wc + static_cast<int64_t>(kh) * g.k;
          for (int kw = 0; kw < g.k; ++kw) {
            const int ix = ox * g.stride - g.padding + kw * g.dilation;
            if (ix < 0 || ix >= g.w) continue;
            acc += xrow[ix] * wrow[kw];
          }
        }
      }
      yrow[ox] = acc;
    }
  });
}

// Gather form: each input-gradient element sums the output positions that
// touched it (stride-divisibility test picks them out).
void conv2d_backward_input_parallel(const ConvGeom& g, const double* dy, const double* w, double* dx) {
  const int64_t x_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t y_plane = static_cast<int64_t>(g.hout) * g.wout;
  const int64_t rows = static_cast<int64_t>(g.n) * g.cin * g.h;
  omp_for(rows, [&](int64_t row) {
    const int iy = static_cast<int>(row % g.h);
    const int ci = static_cast<int>((row / g.h) % g.cin);
    const int n = static_cast<int>(row / (static_cast<int64_t>(g.h) * g.cin));
    double* drow = dx + (static_cast<int64_t>(n) * g.cin + ci) * x_plane + static_cast<int64_t>(iy) * g.w;
    for (int ix = 0; ix < g.w; ++ix) {
      double acc = 0.0;
      for (int co = 0; co < g.cout; ++co) {
        const double* gyc = dy + (static_cast<int64_t>(n) * g.cout + co) * y_plane;
        const double* wc = w + (static_cast<int64_t>(co) * g.cin + ci) * g.k * g.k;
        for (int kh = 0; kh < g.k; ++kh) {
          const int ty = iy + g.padding - kh * g.dilation;
          if (ty < 0 || ty % g.stride != 0) continue;
          const int oy = ty / g.stride;
          if (oy >= g.hout) continue;
          for (int kw = 0; kw < g.k; ++kw) {
            const int tx = ix + g.padding - kw * g.dilation;
            if (tx < 0 || tx % g.stride != 0) continue;
            const int ox = tx / g.stride;
            if (ox >= g.wout) continue;
            acc += gyc[static_cast<int64_t>(oy) * g.wout + ox] * wc[static_cast<int64_t>(kh) * g.k + kw];
          }
        }
      }
      drow[ix] += acc;
    }
  });
}

void conv2d_backward_weight_parallel(const ConvGeom& g, const double* dy, const double* x, double* dw) {
  const int64_t x_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t y_plane = static_cast<int64_t>(g.hout) * g.wout;
  const int64_t taps = static_cast<int64_t>(g.cout) * g.cin * g.k * g.k;
  omp_for(taps, [&](int64_t tap) {
    const int kw = static_cast<int>(tap % g.k);
    const int kh = static_cast<int>((tap / g.k) % g.k);
    const int ci = static_cast<int>((tap / (static_cast<int64_t>(g.k) * g.k)) % g.cin);
    const int co = static_cast<int>(tap / (static_cast<int64_t>(g.k) * g.k * g.cin));
    double acc = 0.0;
    for (int n = 0; n < g.n; ++n) {
      const double* gyc = dy + (static_cast<int64_t>(n) * g.cout + co) * y_plane;
      const double* xc = x + (static_cast<int64_t>(n) * g.cin + ci) * x_plane;
      for (int oy = 0; oy < g.hout; ++oy) {
        const int iy = oy * g.stride - g.padding + kh * g.dilation;
        if (iy < 0 || iy >= g.h) continue;
        for (int ox = 0; ox < g.wout; ++ox) {
          const int ix = ox * g.stride - g.padding + kw * g.dilation;
          if (ix < 0 || ix >= g.w) continue;
          acc += gyc[static_cast<int64_t>(oy) * g.wout + ox] * xc[static_cast<int64_t>(iy) * g.w + ix];
        }
      }
    }
    dw[tap] += acc;
  });
}

void conv2d_backward_bias_parallel(const ConvGeom& g, const double* dy, double* db) {
  const int64_t y_plane = static_cast<int64_t>(g.hout) * g.wout;
  omp_for(g.cout, [&](int64_t co) {
    double acc = 0.0;
    for (int n = 0; n < g.n; ++n) {
      const double* plane = dy + (static_cast<int64_t>(n) * g.cout + co) * y_plane;
      for (int64_t i = 0; i < y_plane; ++i) acc += plane[i];
    }
    db[co] += acc;
  });
}

void matmul_nn_parallel(int batch, int m, int k, int n, const double* a, const double* bm, double* y) {
  omp_for(static_cast<int64_t>(batch) * m, [&](int64_t row) {
    const int b = static_cast<int>(row / m);
    const int i = static_cast<int>(row % m);
    const double* arow = a + (static_cast<int64_t>(b) * m + i) * k;
    const double* bb = bm + static_cast<int64_t>(b) * k * n;
    double* yrow = y + (static_cast<int64_t>(b) * m + i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = bb + static_cast<int64_t>(kk) * n;
      for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  });
}

void matmul_nt_parallel(int batch, int m, int k, int n, const double* a, const double* bm, double* y) {
  omp_for(static_cast<int64_t>(batch) * m, [&](int64_t row) {
    const int b = static_cast<int>(row / m);
    const int i = static_cast<int>(row % m);
    const double* arow = a + (static_cast<int64_t>(b) * m + i) * k;
    const double* bb = bm + static_cast<int64_t>(b) * n * k;
    double* yrow = y + (static_cast<int64_t>(b) * m + i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = bb + static_cast<int64_t>(j) * k;
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      yrow[j] += acc;
    }
  });
}

void matmul_tn_parallel(int batch, int r, int m, int n, const double* a, const double* bm, double* y) {
  omp_for(static_cast<int64_t>(batch) * m, [&](int64_t row) {
    const int b = static_cast<int>(row / m);
    const int i = static_cast<int>(row % m);
    const double* ab = a + static_cast<int64_t>(b) * r * m;
    const double* bb = bm + static_cast<int64_t>(b) * r * n;
    double* yrow = y + (static_cast<int64_t>(b) * m + i) * n;
    for (int rr = 0; rr < r; ++rr) {
      const double av = ab[static_cast<int64_t>(rr) * m + i];
      const double* brow = bb + static_cast<int64_t>(rr) * n;
      for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  });
}

void bilinear_forward_parallel(int planes, int h, int w, int oh, int ow, const double* x, double* y) {
  omp_for(static_cast<int64_t>(planes) * oh, [&](int64_t row) {
    const int p = static_cast<int>(row / oh);
    const int oy = static_cast<int>(row % oh);
    const double* xp = x + static_cast<int64_t>(p) * h * w;
    double* yrow = y + static_cast<int64_t>(p) * oh * ow + static_cast<int64_t>(oy) * ow;
    int y0, y1;
    double fy;
    bilinear_axis(h, oh, oy, &y0, &y1, &fy);
    for (int ox = 0; ox < ow; ++ox) {
      int x0, x1;
      double fx;
      bilinear_axis(w, ow, ox, &x0, &x1, &fx);
      const double top = xp[static_cast<int64_t>(y0) * w + x0] * (1.0 - fx) + xp[static_cast<int64_t>(y0) * w + x1] * fx;
      const double bot = xp[static_cast<int64_t>(y1) * w + x0] * (1.0 - fx) + xp[static_cast<int64_t>(y1) * w + x1] * fx;
      yrow[ox] = top * (1.0 - fy) + bot * fy;
    }
  });
}

// Scatter per plane; planes are independent so one thread owns a whole plane.
void bilinear_backward_parallel(int planes, int h, int w, int oh, int ow, const double* dy, double* dx) {
  omp_for(planes, [&](int64_t p) {
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
  });
}

}  // namespace cafct::kernels
