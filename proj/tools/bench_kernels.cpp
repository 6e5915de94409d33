// Times the serial reference kernels against the OpenMP kernels on
// training-shaped workloads and cross-checks their outputs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cafct/kernels.hpp"
#include "cafct/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using cafct::Rng;
namespace kernels = cafct::kernels;

std::vector<double> rand_vec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

struct Row {
  std::string name;
  double serial_ms, parallel_ms, diff;
};

Row bench(const std::string& name, size_t out_size, int reps,
          const std::function<void(double*)>& run) {
  Row row{name, 0, 0, 0};
  std::vector<double> serial_out(out_size, 0.0);
  std::vector<double> parallel_out(out_size, 0.0);

  kernels::set_backend(kernels::Backend::serial);
  row.serial_ms = time_ms([&] {
    std::fill(serial_out.begin(), serial_out.end(), 0.0);
    run(serial_out.data());
  }, reps);

  kernels::set_backend(kernels::Backend::parallel);
  row.parallel_ms = time_ms([&] {
    std::fill(parallel_out.begin(), parallel_out.end(), 0.0);
    run(parallel_out.data());
  }, reps);

  row.diff = max_abs_diff(serial_out, parallel_out);
  return row;
}

}  // namespace

int main() {
  Rng rng(42);
  std::vector<Row> rows;

  {
    kernels::ConvGeom g;
    g.n = 8;
    g.cin = 32;
    g.h = 32;
    g.w = 32;
    g.cout = 32;
    g.k = 3;
    g.stride = 1;
    g.padding = 1;
    g.with_output();
    const auto x = rand_vec(static_cast<size_t>(g.n) * g.cin * g.h * g.w, rng);
    const auto w = rand_vec(static_cast<size_t>(g.cout) * g.cin * g.k * g.k, rng);
    const size_t ysz = static_cast<size_t>(g.n) * g.cout * g.hout * g.wout;
    rows.push_back(bench("conv2d fwd 8x32x32x32 k3", ysz, 5,
                         [&](double* out) { kernels::conv2d_forward(g, x.data(), w.data(), nullptr, out); }));
    const auto dy = rand_vec(ysz, rng);
    rows.push_back(bench("conv2d dinput", x.size(), 5,
                         [&](double* out) { kernels::conv2d_backward_input(g, dy.data(), w.data(), out); }));
    rows.push_back(bench("conv2d dweight", w.size(), 5,
                         [&](double* out) { kernels::conv2d_backward_weight(g, dy.data(), x.data(), out); }));
  }
  {
    kernels::ConvGeom g;
    g.n = 8;
    g.cin = 64;
    g.h = 8;
    g.w = 8;
    g.cout = 64;
    g.k = 3;
    g.stride = 1;
    g.padding = 6;
    g.dilation = 6;
    g.with_output();
    const auto x = rand_vec(static_cast<size_t>(g.n) * g.cin * g.h * g.w, rng);
    const auto w = rand_vec(static_cast<size_t>(g.cout) * g.cin * g.k * g.k, rng);
    const size_t ysz = static_cast<size_t>(g.n) * g.cout * g.hout * g.wout;
    rows.push_back(bench("conv2d fwd dilated d6", ysz, 10,
                         [&](double* out) { kernels::conv2d_forward(g, x.data(), w.data(), nullptr, out); }));
  }
  {
    const int batch = 16, m = 1024, k = 16, n = 1024;  // attention-score shape
    const auto a = rand_vec(static_cast<size_t>(batch) * m * k, rng);
    const auto b = rand_vec(static_cast<size_t>(batch) * n * k, rng);
    rows.push_back(bench("matmul_nt 16x1024x16x1024", static_cast<size_t>(batch) * m * n, 3,
                         [&](double* out) { kernels::matmul_nt(batch, m, k, n, a.data(), b.data(), out); }));
  }
  {
    const int batch = 16, m = 1024, k = 1024, n = 16;
    const auto a = rand_vec(static_cast<size_t>(batch) * m * k, rng);
    const auto b = rand_vec(static_cast<size_t>(batch) * k * n, rng);
    rows.push_back(bench("matmul_nn 16x1024x1024x16", static_cast<size_t>(batch) * m * n, 3,
                         [&](double* out) { kernels::matmul_nn(batch, m, k, n, a.data(), b.data(), out); }));
  }
  {
    const int planes = 256, h = 32, w = 32, oh = 64, ow = 64;
    const auto x = rand_vec(static_cast<size_t>(planes) * h * w, rng);
    rows.push_back(bench("bilinear 256x32x32 -> 64x64", static_cast<size_t>(planes) * oh * ow, 10,
                         [&](double* out) { kernels::bilinear_forward(planes, h, w, oh, ow, x.data(), out); }));
  }

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (built without OpenMP)\n");
#endif
  std::printf("%-30s %12s %12s %9s %12s\n", "kernel", "serial ms", "parallel ms", "speedup", "max |diff|");
  bool ok = true;
  for (const auto& r : rows) {
    std::printf("%-30s %12.3f %12.3f %8.2fx %12.3e\n", r.name.c_str(), r.serial_ms, r.parallel_ms,
                r.serial_ms / r.parallel_ms, r.diff);
    ok = ok && r.diff < 1e-10;
  }
  if (!ok) {
    std::fprintf(stderr, "serial and parallel kernels disagree\n");
    return 1;
  }
  return 0;
}
