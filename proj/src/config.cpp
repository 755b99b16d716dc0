#include "avcn/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

using nlohmann::json;

namespace avcn {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (known.find(it.key()) == known.end())
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config: bad value type for key '") + key + "'");
    }
  }
}

json model_to_json(const ModelConfig& m) {
  json j;
  j["blocks"] = m.blocks;
  j["hidden"] = m.hidden;
  j["bottleneck"] = m.bottleneck;
  j["ffn_hidden"] = m.ffn_hidden;
  j["audio_kernel"] = m.audio_kernel;
  j["time_kernel"] = m.time_kernel;
  j["freq_kernel"] = m.freq_kernel;
  j["groups"] = m.groups;
  j["heads"] = m.heads;
  j["attn_embed"] = m.attn_embed;
  j["win_length"] = m.win_length;
  j["hop"] = m.hop;
  j["speakers"] = m.speakers;
  j["vtcn_blocks"] = m.vtcn_blocks;
  j["visual_dim"] = m.visual_dim;
  j["dropout"] = m.dropout;
  j["pe_max_frames"] = m.pe_max_frames;
  j["sample_rate"] = m.sample_rate;
  return j;
}

ModelConfig model_from_json(const json& j) {
  reject_unknown(j,
                 {"blocks", "hidden", "bottleneck", "ffn_hidden", "audio_kernel", "time_kernel",
                  "freq_kernel", "groups", "heads", "attn_embed", "win_length", "hop", "speakers",
                  "vtcn_blocks", "visual_dim", "dropout", "pe_max_frames", "sample_rate"},
                 "model");
  ModelConfig m;
  take(j, "blocks", m.blocks);
  take(j, "hidden", m.hidden);
  take(j, "bottleneck", m.bottleneck);
  take(j, "ffn_hidden", m.ffn_hidden);
  take(j, "audio_kernel", m.audio_kernel);
  take(j, "time_kernel", m.time_kernel);
  take(j, "freq_kernel", m.freq_kernel);
  take(j, "groups", m.groups);
  take(j, "heads", m.heads);
  take(j, "attn_embed", m.attn_embed);
  take(j, "win_length", m.win_length);
  take(j, "hop", m.hop);
  take(j, "speakers", m.speakers);
  take(j, "vtcn_blocks", m.vtcn_blocks);
  take(j, "visual_dim", m.visual_dim);
  take(j, "dropout", m.dropout);
  take(j, "pe_max_frames", m.pe_max_frames);
  take(j, "sample_rate", m.sample_rate);
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return m;
}

json train_to_json(const TrainConfig& t) {
  json j;
  j["lr_max"] = t.lr_max;
  j["lr_min"] = t.lr_min;
  j["warmup_epochs"] = t.warmup_epochs;
  j["plateau_patience"] = t.plateau_patience;
  j["plateau_factor"] = t.plateau_factor;
  j["early_stop_patience"] = t.early_stop_patience;
  j["batch_size"] = t.batch_size;
  j["max_epochs"] = t.max_epochs;
  j["max_steps"] = t.max_steps;
  j["seed"] = t.seed;
  j["precision"] = t.precision;
  j["mag_weight"] = t.mag_weight;
  j["sisdr_weight"] = t.sisdr_weight;
  return j;
}

TrainConfig train_from_json(const json& j) {
  reject_unknown(j,
                 {"lr_max", "lr_min", "warmup_epochs", "plateau_patience", "plateau_factor",
                  "early_stop_patience", "batch_size", "max_epochs", "max_steps", "seed",
                  "precision", "mag_weight", "sisdr_weight"},
                 "train");
  TrainConfig t;
  take(j, "lr_max", t.lr_max);
  take(j, "lr_min", t.lr_min);
  take(j, "warmup_epochs", t.warmup_epochs);
  take(j, "plateau_patience", t.plateau_patience);
  take(j, "plateau_factor", t.plateau_factor);
  take(j, "early_stop_patience", t.early_stop_patience);
  take(j, "batch_size", t.batch_size);
  take(j, "max_epochs", t.max_epochs);
  take(j, "max_steps", t.max_steps);
  take(j, "seed", t.seed);
  take(j, "precision", t.precision);
  take(j, "mag_weight", t.mag_weight);
  take(j, "sisdr_weight", t.sisdr_weight);
  try {
    t.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return t;
}

json data_to_json(const CorpusConfig& d) {
  json j;
  j["out_dir"] = d.out_dir;
  j["split"] = d.split;
  j["num_items"] = d.num_items;
  j["speakers"] = d.speakers;
  j["duration_s"] = d.duration_s;
  j["tir_range"] = {d.tir_min, d.tir_max};
  j["with_noise"] = d.with_noise;
  j["snr_range"] = {d.snr_min, d.snr_max};
  j["master_seed"] = d.master_seed;
  j["visual_dim"] = d.visual_dim;
  j["sample_rate"] = d.sample_rate;
  return j;
}

CorpusConfig data_from_json(const json& j) {
  reject_unknown(j,
                 {"out_dir", "split", "num_items", "speakers", "duration_s", "tir_range",
                  "with_noise", "snr_range", "master_seed", "visual_dim", "sample_rate"},
                 "data");
  CorpusConfig d;
  take(j, "out_dir", d.out_dir);
  take(j, "split", d.split);
  take(j, "num_items", d.num_items);
  take(j, "speakers", d.speakers);
  take(j, "duration_s", d.duration_s);
  if (j.contains("tir_range")) {
    const auto r = j.at("tir_range").get<std::vector<double>>();
    if (r.size() != 2) throw ConfigError("config: tir_range must be [lo, hi]");
    d.tir_min = r[0];
    d.tir_max = r[1];
  }
  take(j, "with_noise", d.with_noise);
  if (j.contains("snr_range")) {
    const auto r = j.at("snr_range").get<std::vector<double>>();
    if (r.size() != 2) throw ConfigError("config: snr_range must be [lo, hi]");
    d.snr_min = r[0];
    d.snr_max = r[1];
  }
  take(j, "master_seed", d.master_seed);
  take(j, "visual_dim", d.visual_dim);
  take(j, "sample_rate", d.sample_rate);
  if (d.tir_min > d.tir_max) throw ConfigError("config: inverted tir_range");
  if (d.with_noise && d.snr_min > d.snr_max) throw ConfigError("config: inverted snr_range");
  if (d.num_items < 1 || d.speakers < 1 || d.duration_s <= 0.0)
    throw ConfigError("config: bad data sizes");
  return d;
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return default_run_config();
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  reject_unknown(j, {"model", "train", "data"}, "top level");
  RunConfig cfg;
  if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
  if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
  if (j.contains("data")) cfg.data = data_from_json(j.at("data"));
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["model"] = model_to_json(cfg.model);
  j["train"] = train_to_json(cfg.train);
  j["data"] = data_to_json(cfg.data);
  return j.dump(2);
}

std::string model_config_to_json(const ModelConfig& cfg) { return model_to_json(cfg).dump(); }

ModelConfig model_config_from_json_text(const std::string& text) {
  return model_from_json(json::parse(text));
}

}  // namespace avcn
