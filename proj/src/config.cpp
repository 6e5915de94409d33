#include "cafct/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cafct {

void TrainConfig::validate() const {
  model.validate();
  check_arg(batch_size >= 1, "config: batch_size must be >= 1");
  // 0 is the documented degenerate step (an epoch leaves parameters
  // bit-identical); negative rates are rejected.
  check_arg(learning_rate >= 0.0, "config: learning_rate must be nonnegative");
  check_arg(momentum >= 0.0 && momentum < 1.0, "config: momentum must be in [0,1)");
  check_arg(weight_decay >= 0.0, "config: weight_decay must be nonnegative");
  check_arg(epochs >= 1, "config: epochs must be >= 1");
  check_arg(w_bce >= 0.0 && w_dice >= 0.0 && (w_bce > 0.0 || w_dice > 0.0),
            "config: loss weights must be nonnegative and not both zero");
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

long long parse_int(const std::string& key, const std::string& value) {
  size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + value + "'");
  }
  if (used != value.size()) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + value + "'");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value + "'");
  }
  if (used != value.size()) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

std::array<int, 3> parse_rates(const std::string& key, const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) parts.push_back(trim(part));
  if (parts.size() != 3) {
    throw std::invalid_argument("config: key '" + key + "' expects three comma-separated integers, got '" + value + "'");
  }
  std::array<int, 3> rates{};
  for (size_t i = 0; i < 3; ++i) rates[i] = static_cast<int>(parse_int(key, parts[i]));
  return rates;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::stringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) + " is not 'key = value': '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "input_size") {
      cfg.model.encoder.input_size = static_cast<int>(parse_int(key, value));
    } else if (key == "base_channels") {
      cfg.model.encoder.base_channels = static_cast<int>(parse_int(key, value));
    } else if (key == "patch_size") {
      cfg.model.encoder.patch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "depth") {
      cfg.model.encoder.depth_per_stage = static_cast<int>(parse_int(key, value));
    } else if (key == "heads") {
      cfg.model.encoder.heads = static_cast<int>(parse_int(key, value));
    } else if (key == "cnn_blocks") {
      cfg.model.encoder.cnn_blocks_per_stage = static_cast<int>(parse_int(key, value));
    } else if (key == "se_ratio") {
      cfg.model.se_ratio = static_cast<int>(parse_int(key, value));
    } else if (key == "aspp_rates") {
      cfg.model.aspp_rates = parse_rates(key, value);
    } else if (key == "inter_channel_rule") {
      cfg.model.inter_channel_divisor = static_cast<int>(parse_int(key, value));
    } else if (key == "batch_size") {
      cfg.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "learning_rate") {
      cfg.learning_rate = parse_double(key, value);
    } else if (key == "momentum") {
      cfg.momentum = parse_double(key, value);
    } else if (key == "weight_decay") {
      cfg.weight_decay = parse_double(key, value);
    } else if (key == "epochs") {
      cfg.epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "seed") {
      cfg.seed = static_cast<uint64_t>(parse_int(key, value));
    } else if (key == "w_bce") {
      cfg.w_bce = parse_double(key, value);
    } else if (key == "w_dice") {
      cfg.w_dice = parse_double(key, value);
    } else if (key == "data_dir") {
      cfg.data_dir = value;
    } else if (key == "checkpoint_path") {
      cfg.checkpoint_path = value;
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "' on line " + std::to_string(line_no));
    }
  }
  return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  char buf[96];
  std::string out;
  auto put_int = [&](const char* key, long long v) {
    out += key;
    out += " = ";
    out += std::to_string(v);
    out += "\n";
  };
  auto put_double = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    out += buf;
  };
  put_int("input_size", cfg.model.encoder.input_size);
  put_int("base_channels", cfg.model.encoder.base_channels);
  put_int("patch_size", cfg.model.encoder.patch_size);
  put_int("depth", cfg.model.encoder.depth_per_stage);
  put_int("heads", cfg.model.encoder.heads);
  put_int("cnn_blocks", cfg.model.encoder.cnn_blocks_per_stage);
  put_int("se_ratio", cfg.model.se_ratio);
  out += "aspp_rates = " + std::to_string(cfg.model.aspp_rates[0]) + "," + std::to_string(cfg.model.aspp_rates[1]) +
         "," + std::to_string(cfg.model.aspp_rates[2]) + "\n";
  put_int("inter_channel_rule", cfg.model.inter_channel_divisor);
  put_int("batch_size", cfg.batch_size);
  put_double("learning_rate", cfg.learning_rate);
  put_double("momentum", cfg.momentum);
  put_double("weight_decay", cfg.weight_decay);
  put_int("epochs", cfg.epochs);
  put_int("seed", static_cast<long long>(cfg.seed));
  put_double("w_bce", cfg.w_bce);
  put_double("w_dice", cfg.w_dice);
  out += "data_dir = " + cfg.data_dir + "\n";
  out += "checkpoint_path = " + cfg.checkpoint_path + "\n";
  return out;
}

}  // namespace cafct
