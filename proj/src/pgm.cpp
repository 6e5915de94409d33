#include "cafct/pgm.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace cafct {

namespace {

struct PgmData {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> bytes;
};

[[noreturn]] void fail(const std::string& path, size_t pos, const std::string& what) {
  throw std::runtime_error("pgm: " + what + " at byte " + std::to_string(pos) + " in " + path);
}

PgmData read_pgm_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  size_t pos = 0;
  auto skip_space = [&] {
    while (pos < raw.size()) {
      const char c = raw[pos];
      if (c == '#') {
        while (pos < raw.size() && raw[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> int {
    skip_space();
    const size_t start = pos;
    long value = 0;
    while (pos < raw.size() && raw[pos] >= '0' && raw[pos] <= '9') {
      value = value * 10 + (raw[pos] - '0');
      if (value > 1 << 20) fail(path, start, "unreasonable header value");
      ++pos;
    }
    if (pos == start) fail(path, pos, "expected integer in header");
    return static_cast<int>(value);
  };

  if (raw.size() < 2 || raw[0] != 'P' || raw[1] != '5') {
    fail(path, 0, std::string("bad magic (expected P5, got '") + raw.substr(0, std::min<size_t>(2, raw.size())) + "')");
  }
  pos = 2;
  PgmData pgm;
  pgm.width = read_int();
  pgm.height = read_int();
  const size_t maxval_pos = pos;
  const int maxval = read_int();
  if (pgm.width < 1 || pgm.height < 1) fail(path, 2, "nonpositive dimensions");
  if (maxval != 255) fail(path, maxval_pos, "maxval " + std::to_string(maxval) + " unsupported (need 255)");
  // Single whitespace byte separates the header from the payload.
  if (pos >= raw.size() || !(raw[pos] == ' ' || raw[pos] == '\t' || raw[pos] == '\r' || raw[pos] == '\n')) {
    fail(path, pos, "missing whitespace before payload");
  }
  ++pos;
  const size_t expected = static_cast<size_t>(pgm.width) * static_cast<size_t>(pgm.height);
  if (raw.size() - pos < expected) fail(path, raw.size(), "truncated payload");
  pgm.bytes.assign(raw.begin() + static_cast<std::ptrdiff_t>(pos),
                   raw.begin() + static_cast<std::ptrdiff_t>(pos + expected));
  return pgm;
}

}  // namespace

Tensor read_image_pgm(const std::string& path) {
  const PgmData pgm = read_pgm_bytes(path);
  std::vector<double> data(pgm.bytes.size());
  for (size_t i = 0; i < pgm.bytes.size(); ++i) data[i] = static_cast<double>(pgm.bytes[i]) / 255.0;
  return Tensor::from_data({1, pgm.height, pgm.width}, std::move(data));
}

Tensor read_mask_pgm(const std::string& path) {
  const PgmData pgm = read_pgm_bytes(path);
  std::vector<double> data(pgm.bytes.size());
  for (size_t i = 0; i < pgm.bytes.size(); ++i) data[i] = pgm.bytes[i] >= 128 ? 1.0 : 0.0;
  return Tensor::from_data({1, pgm.height, pgm.width}, std::move(data));
}

namespace {

void write_pgm_bytes(const std::string& path, int h, int w, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot write " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("pgm: short write to " + path);
}

void check_hw(const Tensor& t, const char* op) {
  check_arg(t.rank() == 3 && t.dim(0) == 1, std::string(op) + ": expected [1,H,W], got " + shape_str(t.shape()));
}

}  // namespace

void write_image_pgm(const Tensor& image, const std::string& path) {
  check_hw(image, "write_image_pgm");
  const double* v = image.data();
  std::vector<unsigned char> bytes(static_cast<size_t>(image.size()));
  for (size_t i = 0; i < bytes.size(); ++i) {
    const double clamped = std::min(1.0, std::max(0.0, v[i]));
    bytes[i] = static_cast<unsigned char>(std::lround(clamped * 255.0));
  }
  write_pgm_bytes(path, image.dim(1), image.dim(2), bytes);
}

void write_mask_pgm(const Tensor& mask, const std::string& path) {
  check_hw(mask, "write_mask_pgm");
  const double* v = mask.data();
  std::vector<unsigned char> bytes(static_cast<size_t>(mask.size()));
  for (size_t i = 0; i < bytes.size(); ++i) {
    check_arg(v[i] == 0.0 || v[i] == 1.0, "write_mask_pgm: mask is not binary");
    bytes[i] = v[i] == 1.0 ? 255 : 0;
  }
  write_pgm_bytes(path, mask.dim(1), mask.dim(2), bytes);
}

}  // namespace cafct
