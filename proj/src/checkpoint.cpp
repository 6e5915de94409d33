#include "cafct/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts are unsupported");

namespace cafct {

namespace {

constexpr char kMagic[6] = {'C', 'A', 'F', 'C', 'T', '\0'};
constexpr uint16_t kVersion = 1;

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated read in " + path);
  return v;
}

void put_tensor(std::ofstream& out, const std::string& name, const Tensor& t) {
  put<uint32_t>(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<uint32_t>(out, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put<uint64_t>(out, static_cast<uint64_t>(t.dim(i)));
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, CafctModel& model, const TrainConfig& cfg,
                     int64_t epoch, const Rng& rng) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);

  out.write(kMagic, sizeof(kMagic));
  put<uint16_t>(out, kVersion);

  const std::string config_text = serialize_config(cfg);
  put<uint32_t>(out, static_cast<uint32_t>(config_text.size()));
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));

  put<int64_t>(out, epoch);
  for (uint64_t word : rng.state()) put<uint64_t>(out, word);

  auto params = model.parameters();
  auto buffers = model.buffers();
  put<uint64_t>(out, static_cast<uint64_t>(params.size() + buffers.size()));
  for (const auto& p : params) put_tensor(out, p.name, p.tensor);
  for (const auto& b : buffers) put_tensor(out, b.name, b.tensor);

  if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);

  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto version = take<uint16_t>(in, path);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  }

  const auto config_len = take<uint32_t>(in, path);
  std::string config_text(config_len, '\0');
  in.read(config_text.data(), config_len);
  if (!in) throw std::runtime_error("checkpoint: truncated config block in " + path);

  LoadedCheckpoint loaded;
  loaded.config = parse_config_text(config_text);
  loaded.epoch = take<int64_t>(in, path);
  std::array<uint64_t, 4> state{};
  for (auto& word : state) word = take<uint64_t>(in, path);
  loaded.rng.set_state(state);

  // Build the model skeleton, then overwrite every tensor from the records.
  Rng scratch(0);
  loaded.model = CafctModel(loaded.config.model, scratch);

  const auto record_count = take<uint64_t>(in, path);
  std::map<std::string, std::pair<Shape, std::vector<double>>> records;
  for (uint64_t r = 0; r < record_count; ++r) {
    const auto name_len = take<uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = take<uint32_t>(in, path);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<int>(take<uint64_t>(in, path));
    std::vector<double> payload(static_cast<size_t>(numel(shape)));
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor record '" + name + "' in " + path);
    records.emplace(std::move(name), std::make_pair(std::move(shape), std::move(payload)));
  }

  auto restore = [&](std::vector<Parameter>&& slots) {
    for (auto& slot : slots) {
      auto it = records.find(slot.name);
      if (it == records.end()) throw std::runtime_error("checkpoint: missing tensor '" + slot.name + "' in " + path);
      check_arg(it->second.first == slot.tensor.shape(),
                "checkpoint: tensor '" + slot.name + "' has shape " + shape_str(it->second.first) +
                    ", model expects " + shape_str(slot.tensor.shape()));
      std::memcpy(slot.tensor.data(), it->second.second.data(),
                  it->second.second.size() * sizeof(double));
      records.erase(it);
    }
  };
  restore(loaded.model.parameters());
  restore(loaded.model.buffers());
  if (!records.empty()) {
    throw std::runtime_error("checkpoint: unexpected tensor '" + records.begin()->first + "' in " + path);
  }
  return loaded;
}

}  // namespace cafct
