#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cafct/tensor.hpp"

namespace cafct {

// Paired grayscale image ([0,1]) and strictly binary mask.
struct SegSample {
  std::string id;
  Tensor image;  // [1,H,W]
  Tensor mask;   // [1,H,W]
};

struct Ellipse {
  double cx = 0, cy = 0;      // center, pixel coordinates
  double rx = 1, ry = 1;      // semi-axes
  double angle = 0;           // rotation, radians
  double intensity = 0.7;

  // Pixel (row, col) is sampled at the point (col, row).
  bool contains(double x, double y) const;
};

struct SyntheticSample {
  SegSample sample;
  std::vector<Ellipse> ellipses;
};

// Dark noisy background with 1-3 brighter elliptical lesions; the mask is the
// exact analytic union of the ellipse interiors. Deterministic per
// (n, size, seed).
std::vector<SyntheticSample> generate_synthetic_dataset(int n, int size, uint64_t seed);

// Directory layout images/<id>.pgm + masks/<id>.pgm, paired by stem.
void write_dataset(const std::vector<SyntheticSample>& samples, const std::string& dir);
std::vector<SegSample> load_dataset(const std::string& dir);

double foreground_fraction(const std::vector<SegSample>& samples);

}  // namespace cafct
