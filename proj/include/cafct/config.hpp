#pragma once

#include <cstdint>
#include <string>

#include "cafct/gates_decoder.hpp"

namespace cafct {

// Desk-scale defaults: 64x64 inputs, base width 16, ASPP rates 2/3/4 (paper
// rates 6/12/18 degenerate to mostly-padding taps on a 4x4 bottleneck and
// stay available as overrides). batch_size 8 and learning_rate 0.001 follow
// the training recipe; everything is overridable from the config file.
struct TrainConfig {
  ModelConfig model;

  int batch_size = 8;
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 40;
  uint64_t seed = 1;
  double w_bce = 1.0;
  double w_dice = 1.0;
  std::string data_dir = "data";
  std::string checkpoint_path = "cafct.ckpt";

  TrainConfig() { model.aspp_rates = {2, 3, 4}; }

  void validate() const;
};

// Flat `key = value` text, one pair per line, '#' comments. Unknown keys are
// rejected.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);

// Canonical full-precision echo of every field; parses back to an identical
// config.
std::string serialize_config(const TrainConfig& cfg);

}  // namespace cafct
