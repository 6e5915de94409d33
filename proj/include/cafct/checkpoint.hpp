#pragma once

#include <string>

#include "cafct/config.hpp"
#include "cafct/rng.hpp"

namespace cafct {

// Single binary file: magic "CAFCT\0", version u16, length-prefixed config
// text, epoch counter, RNG state, then one record per tensor (name length,
// name bytes, rank, extents, little-endian float64 payload). Records cover
// the trainable parameters and the batch-norm running buffers; a load
// reproduces bit-identical eval-mode outputs.
void save_checkpoint(const std::string& path, CafctModel& model, const TrainConfig& cfg,
                     int64_t epoch, const Rng& rng);

struct LoadedCheckpoint {
  TrainConfig config;
  CafctModel model;
  int64_t epoch = 0;
  Rng rng;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cafct
