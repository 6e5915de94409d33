#pragma once

#include <string>

#include "cafct/tensor.hpp"

namespace cafct {

// 8-bit binary PGM ("P5", maxval 255). Reads scale to [0,1] by /255; mask
// reads threshold the raw bytes at 128. Malformed files are rejected with the
// offending byte position.
Tensor read_image_pgm(const std::string& path);  // [1,H,W]
Tensor read_mask_pgm(const std::string& path);   // [1,H,W], values in {0,1}

void write_image_pgm(const Tensor& image, const std::string& path);  // values clamped to [0,1]
void write_mask_pgm(const Tensor& mask, const std::string& path);    // {0,1} -> bytes 0/255

}  // namespace cafct
