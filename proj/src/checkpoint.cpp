#include "avcn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "avcn/config.hpp"
#include "json.hpp"

using nlohmann::json;

namespace avcn {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'C', 'K'};

void wr_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}
void wr_u64(std::ostream& os, uint64_t v) {
  wr_u32(os, static_cast<uint32_t>(v));
  wr_u32(os, static_cast<uint32_t>(v >> 32));
}
uint32_t rd_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}
uint64_t rd_u64(std::istream& is) {
  const uint64_t lo = rd_u32(is);
  const uint64_t hi = rd_u32(is);
  return lo | hi << 32;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t, CkptDtype dtype) {
  wr_u32(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  os.put(dtype == CkptDtype::f32 ? 0 : 1);
  wr_u32(os, static_cast<uint32_t>(t.shape.size()));
  for (int d : t.shape) wr_u32(os, static_cast<uint32_t>(d));
  if (dtype == CkptDtype::f32) {
    for (double v : t.v) {
      const float f = static_cast<float>(v);
      os.write(reinterpret_cast<const char*>(&f), 4);
    }
  } else {
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * 8));
  }
}

std::pair<std::string, Tensor> read_tensor(std::istream& is) {
  const uint32_t name_len = rd_u32(is);
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  const int dtype = is.get();
  const uint32_t ndim = rd_u32(is);
  std::vector<int> shape(ndim);
  for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(rd_u32(is));
  Tensor t(shape);
  if (dtype == 0) {
    std::vector<float> buf(t.v.size());
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    for (size_t i = 0; i < buf.size(); ++i) t.v[i] = static_cast<double>(buf[i]);
  } else if (dtype == 1) {
    is.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * 8));
  } else {
    throw std::runtime_error("checkpoint: unknown tensor dtype");
  }
  if (!is) throw std::runtime_error("checkpoint: truncated tensor payload");
  return {std::move(name), std::move(t)};
}

json trainer_to_json(const TrainerState& t) {
  json j;
  j["epoch"] = t.epoch;
  j["step"] = t.step;
  j["current_lr"] = t.current_lr;
  j["best_val_loss"] = t.best_val_loss;
  j["epochs_since_best"] = t.epochs_since_best;
  j["plateau_bad_epochs"] = t.plateau_bad_epochs;
  j["adam_t"] = t.adam_t;
  j["rng"] = t.rng_state;
  return j;
}

TrainerState trainer_from_json(const json& j) {
  TrainerState t;
  t.epoch = j.at("epoch").get<int>();
  t.step = j.at("step").get<int64_t>();
  t.current_lr = j.at("current_lr").get<double>();
  t.best_val_loss = j.at("best_val_loss").get<double>();
  t.epochs_since_best = j.at("epochs_since_best").get<int>();
  t.plateau_bad_epochs = j.at("plateau_bad_epochs").get<int>();
  t.adam_t = j.at("adam_t").get<int64_t>();
  t.rng_state = j.at("rng").get<std::string>();
  return t;
}

json read_header(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  const uint32_t version = rd_u32(is);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  const uint64_t hlen = rd_u64(is);
  std::string htext(hlen, '\0');
  is.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  return json::parse(htext);
}

}  // namespace

void save_checkpoint(const std::string& path, Separator& model, CkptDtype dtype,
                     const TrainerState* trainer,
                     const std::vector<std::pair<std::string, const Tensor*>>& extra) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);

  json header;
  header["format"] = "avcn-checkpoint";
  header["model"] = json::parse(model_config_to_json(model.cfg));
  header["trainer"] = trainer != nullptr ? trainer_to_json(*trainer) : json(nullptr);
  const std::string htext = header.dump();

  os.write(kMagic, 4);
  wr_u32(os, 1);
  wr_u64(os, htext.size());
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));

  ParamList params;
  model.collect(params);
  wr_u64(os, params.size() + extra.size());
  for (const ParamRef& p : params) write_tensor(os, p.name, *p.value, dtype);
  for (const auto& [name, t] : extra) write_tensor(os, name, *t, dtype);
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, Separator& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);

  const json header = read_header(is);
  LoadedCheckpoint loaded;
  loaded.config = model_config_from_json_text(header.at("model").dump());
  if (!header.at("trainer").is_null()) loaded.trainer = trainer_from_json(header.at("trainer"));

  model.init(loaded.config, /*seed=*/0);
  ParamList params;
  model.collect(params);

  std::map<std::string, Tensor> entries;
  const uint64_t n = rd_u64(is);
  for (uint64_t i = 0; i < n; ++i) {
    auto [name, t] = read_tensor(is);
    entries.emplace(std::move(name), std::move(t));
  }

  for (const ParamRef& p : params) {
    auto it = entries.find(p.name);
    if (it == entries.end())
      throw std::runtime_error("checkpoint: missing parameter " + p.name);
    if (it->second.shape != p.value->shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    p.value->v = it->second.v;
    entries.erase(it);
  }
  loaded.extra = std::move(entries);
  return loaded;
}

ModelConfig peek_checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  const json header = read_header(is);
  return model_config_from_json_text(header.at("model").dump());
}

}  // namespace avcn
