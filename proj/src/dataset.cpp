#include "cafct/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "cafct/pgm.hpp"
#include "cafct/rng.hpp"

namespace fs = std::filesystem;

namespace cafct {

bool Ellipse::contains(double x, double y) const {
  const double dx = x - cx;
  const double dy = y - cy;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double u = (dx * c + dy * s) / rx;
  const double v = (-dx * s + dy * c) / ry;
  return u * u + v * v <= 1.0;
}

std::vector<SyntheticSample> generate_synthetic_dataset(int n, int size, uint64_t seed) {
  check_arg(n >= 1, "generate_synthetic_dataset: n must be >= 1");
  check_arg(size >= 16, "generate_synthetic_dataset: size must be >= 16");
  Rng rng(seed);
  const double background = 0.12;
  const double noise_sigma = 0.05;

  std::vector<SyntheticSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    SyntheticSample item;
    char id[32];
    std::snprintf(id, sizeof(id), "sample_%04d", i);
    item.sample.id = id;

    const int lesions = rng.uniform_int(1, 3);
    for (int e = 0; e < lesions; ++e) {
      Ellipse el;
      el.cx = rng.uniform(0.2, 0.8) * size;
      el.cy = rng.uniform(0.2, 0.8) * size;
      el.rx = rng.uniform(0.07, 0.16) * size;
      el.ry = rng.uniform(0.07, 0.16) * size;
      el.angle = rng.uniform(0.0, 3.14159265358979323846);
      el.intensity = rng.uniform(0.55, 0.9);
      item.ellipses.push_back(el);
    }

    std::vector<double> image(static_cast<size_t>(size) * size);
    std::vector<double> mask(static_cast<size_t>(size) * size, 0.0);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const size_t at = static_cast<size_t>(r) * size + c;
        double level = background;
        for (const auto& el : item.ellipses) {
          if (el.contains(static_cast<double>(c), static_cast<double>(r))) {
            mask[at] = 1.0;
            level = std::max(level, el.intensity);
          }
        }
        const double v = level + noise_sigma * rng.normal();
        image[at] = std::min(1.0, std::max(0.0, v));
      }
    }
    item.sample.image = Tensor::from_data({1, size, size}, std::move(image));
    item.sample.mask = Tensor::from_data({1, size, size}, std::move(mask));
    out.push_back(std::move(item));
  }
  return out;
}

void write_dataset(const std::vector<SyntheticSample>& samples, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  for (const auto& item : samples) {
    write_image_pgm(item.sample.image, (fs::path(dir) / "images" / (item.sample.id + ".pgm")).string());
    write_mask_pgm(item.sample.mask, (fs::path(dir) / "masks" / (item.sample.id + ".pgm")).string());
  }
}

std::vector<SegSample> load_dataset(const std::string& dir) {
  const fs::path images = fs::path(dir) / "images";
  const fs::path masks = fs::path(dir) / "masks";
  if (!fs::is_directory(images)) throw std::runtime_error("dataset: missing directory " + images.string());
  if (!fs::is_directory(masks)) throw std::runtime_error("dataset: missing directory " + masks.string());

  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (entry.path().extension() == ".pgm") stems.push_back(entry.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw std::runtime_error("dataset: no .pgm images in " + images.string());

  std::vector<SegSample> out;
  out.reserve(stems.size());
  for (const auto& stem : stems) {
    const fs::path mask_path = masks / (stem + ".pgm");
    if (!fs::exists(mask_path)) throw std::runtime_error("dataset: no mask for image stem '" + stem + "'");
    SegSample s;
    s.id = stem;
    s.image = read_image_pgm((images / (stem + ".pgm")).string());
    s.mask = read_mask_pgm(mask_path.string());
    check_arg(s.image.shape() == s.mask.shape(),
              "dataset: image and mask shapes differ for '" + stem + "'");
    out.push_back(std::move(s));
  }
  return out;
}

double foreground_fraction(const std::vector<SegSample>& samples) {
  check_arg(!samples.empty(), "foreground_fraction: empty dataset");
  double fg = 0.0, total = 0.0;
  for (const auto& s : samples) {
    const double* m = s.mask.data();
    for (int64_t i = 0; i < s.mask.size(); ++i) fg += m[i];
    total += static_cast<double>(s.mask.size());
  }
  return fg / total;
}

}  // namespace cafct
