#include "avcn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "avcn/rng.hpp"
#include "avcn/wav_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avcn {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kVisualFps = 25.0;

// piecewise-linear resampling of control points to n samples
std::vector<double> interp_controls(const std::vector<double>& ctrl, int64_t n) {
  std::vector<double> out(static_cast<size_t>(n));
  const int64_t nc = static_cast<int64_t>(ctrl.size());
  for (int64_t i = 0; i < n; ++i) {
    const double pos = nc > 1 ? static_cast<double>(i) * (nc - 1) / std::max<int64_t>(n - 1, 1) : 0.0;
    const int64_t lo = static_cast<int64_t>(pos);
    const int64_t hi = std::min(lo + 1, nc - 1);
    const double w = pos - lo;
    out[static_cast<size_t>(i)] =
        (1.0 - w) * ctrl[static_cast<size_t>(lo)] + w * ctrl[static_cast<size_t>(hi)];
  }
  return out;
}

double mean_power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

}  // namespace

SpeakerSignal synth_speaker(const SpeakerSpec& spec) {
  if (spec.duration_s <= 0.0) throw std::invalid_argument("synth_speaker: duration must be > 0");
  Rng rng(spec.seed);
  const int sr = 16000;
  const int64_t n = static_cast<int64_t>(std::llround(spec.duration_s * sr));

  // f0 random walk on 50 Hz control points, reflected into the allowed band
  const int64_t nc_f0 = std::max<int64_t>(2, static_cast<int64_t>(spec.duration_s * 50.0));
  std::vector<double> f0_ctrl(static_cast<size_t>(nc_f0));
  double f0 = rng.uniform(spec.f0_min * 1.1, spec.f0_max * 0.9);
  for (int64_t i = 0; i < nc_f0; ++i) {
    f0 += rng.uniform(-4.0, 4.0);
    if (f0 < spec.f0_min) f0 = 2.0 * spec.f0_min - f0;
    if (f0 > spec.f0_max) f0 = 2.0 * spec.f0_max - f0;
    f0_ctrl[static_cast<size_t>(i)] = f0;
  }
  const std::vector<double> f0_track = interp_controls(f0_ctrl, n);

  // syllabic envelope: sinusoidal gate at a per-speaker rate, roughened by
  // smoothed noise
  const double rate = rng.uniform(spec.mod_rate_min, spec.mod_rate_max);
  const double phase = rng.uniform(0.0, kTwoPi);
  const int64_t nc_env = std::max<int64_t>(4, static_cast<int64_t>(spec.duration_s * kVisualFps));
  std::vector<double> noise_ctrl(static_cast<size_t>(nc_env));
  for (double& v : noise_ctrl) v = rng.uniform01();
  std::vector<double> smooth(noise_ctrl.size(), 0.0);
  for (size_t i = 0; i < noise_ctrl.size(); ++i) {
    double s = 0.0;
    int cnt = 0;
    for (int j = -2; j <= 2; ++j) {
      const int64_t k = static_cast<int64_t>(i) + j;
      if (k >= 0 && k < nc_env) {
        s += noise_ctrl[static_cast<size_t>(k)];
        ++cnt;
      }
    }
    smooth[i] = s / cnt;
  }
  const std::vector<double> rough = interp_controls(smooth, n);

  auto envelope_at = [&](double t, double rough_v) {
    const double base = 0.5 * (1.0 + std::sin(kTwoPi * rate * t + phase));
    const double g = base * (0.5 + 0.5 * rough_v);
    return (1.0 - spec.mod_depth) + spec.mod_depth * g;
  };

  double harm_phase[5];
  for (double& p : harm_phase) p = rng.uniform(0.0, kTwoPi);

  SpeakerSignal sig;
  sig.wave.sample_rate = sr;
  sig.wave.samples.resize(static_cast<size_t>(n));
  double theta = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    theta += kTwoPi * f0_track[static_cast<size_t>(i)] / sr;
    const double env = envelope_at(static_cast<double>(i) / sr, rough[static_cast<size_t>(i)]);
    double s = 0.0;
    for (int hh = 1; hh <= 5; ++hh)
      s += std::sin(hh * theta + harm_phase[hh - 1]) / hh;
    sig.wave.samples[static_cast<size_t>(i)] = env * s;
  }
  const double rms = std::sqrt(mean_power(sig.wave.samples));
  const double gain = rms > 0.0 ? 0.1 / rms : 1.0;
  for (double& s : sig.wave.samples) s *= gain;

  const int mv = static_cast<int>(std::llround(spec.duration_s * kVisualFps));
  sig.envelope.resize(static_cast<size_t>(std::max(mv, 1)));
  for (size_t i = 0; i < sig.envelope.size(); ++i) {
    const double t = (static_cast<double>(i) + 0.5) / kVisualFps;
    const int64_t si = std::min<int64_t>(static_cast<int64_t>(t * sr), n - 1);
    sig.envelope[i] = envelope_at(t, rough[static_cast<size_t>(si)]);
  }
  return sig;
}

VisualEmbeddingSequence synth_visual(const std::vector<double>& envelope,
                                     const std::string& id_token, int fv) {
  if (fv < 8) throw std::invalid_argument("synth_visual: embedding dim must be >= 8");
  Rng rng(hash_string(id_token));

  double basis[8];
  double norm = 0.0;
  for (double& b : basis) {
    b = rng.normal();
    norm += b * b;
  }
  norm = std::sqrt(norm);
  for (double& b : basis) b /= norm;

  VisualEmbeddingSequence emb;
  emb.frames = static_cast<int>(envelope.size());
  emb.dim = fv;
  emb.fps = kVisualFps;
  emb.data.resize(static_cast<size_t>(emb.frames) * fv);
  for (int t = 0; t < emb.frames; ++t) {
    for (int j = 0; j < 8; ++j) emb.at(t, j) = envelope[static_cast<size_t>(t)] * basis[j];
    for (int j = 8; j < fv; ++j) emb.at(t, j) = 0.05 * (rng.uniform01() - 0.5);
  }
  return emb;
}

Waveform synth_noise(uint64_t seed, int64_t length, int sample_rate) {
  Rng rng(seed);
  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.resize(static_cast<size_t>(length));
  // Kellet-style 1/f shaping of white noise
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  for (int64_t i = 0; i < length; ++i) {
    const double w = rng.uniform(-1.0, 1.0);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    out.samples[static_cast<size_t>(i)] = b0 + b1 + b2 + w * 0.1848;
  }
  const double rms = std::sqrt(mean_power(out.samples));
  if (rms > 0.0)
    for (double& s : out.samples) s *= 0.1 / rms;
  return out;
}

MixResult mix(const std::vector<Waveform>& sources, double tir_db, const Waveform* noise,
              std::optional<double> snr_db) {
  if (sources.empty()) throw std::invalid_argument("mix: no sources");
  int64_t len = sources[0].length();
  for (const Waveform& s : sources) len = std::min(len, s.length());
  if (noise != nullptr) len = std::min(len, noise->length());
  if (len < 1) throw std::invalid_argument("mix: empty input");

  MixResult res;
  res.source_gains.assign(sources.size(), 1.0);

  std::vector<double> p(sources.size());
  for (size_t c = 0; c < sources.size(); ++c) {
    std::vector<double> head(sources[c].samples.begin(), sources[c].samples.begin() + len);
    p[c] = mean_power(head);
    if (p[c] <= 0.0) throw std::invalid_argument("mix: zero-power source");
  }
  for (size_t c = 1; c < sources.size(); ++c)
    res.source_gains[c] = std::sqrt(p[0] / (p[c] * std::pow(10.0, tir_db / 10.0)));

  std::vector<double> y(static_cast<size_t>(len), 0.0);
  for (size_t c = 0; c < sources.size(); ++c)
    for (int64_t i = 0; i < len; ++i)
      y[static_cast<size_t>(i)] += res.source_gains[c] * sources[c].samples[static_cast<size_t>(i)];

  if (noise != nullptr) {
    if (!snr_db.has_value()) throw std::invalid_argument("mix: noise given without snr");
    const double pn = mean_power({noise->samples.begin(), noise->samples.begin() + len});
    if (pn <= 0.0) throw std::invalid_argument("mix: zero-power noise");
    const double ps = mean_power(y);
    res.noise_gain = std::sqrt(ps / (pn * std::pow(10.0, *snr_db / 10.0)));
    for (int64_t i = 0; i < len; ++i)
      y[static_cast<size_t>(i)] += res.noise_gain * noise->samples[static_cast<size_t>(i)];
  }

  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  if (peak > 0.99) {
    res.peak_gain = 0.99 / peak;
    for (double& v : y) v *= res.peak_gain;
    for (double& g : res.source_gains) g *= res.peak_gain;
    res.noise_gain *= res.peak_gain;
  }

  res.mixture.sample_rate = sources[0].sample_rate;
  res.mixture.samples = std::move(y);
  return res;
}

namespace {

uint64_t split_offset(const std::string& split) {
  uint64_t idx;
  if (split == "train") idx = 0;
  else if (split == "val" || split == "valid") idx = 1;
  else if (split == "test") idx = 2;
  else idx = 3 + (hash_string(split) & 0xff);
  return (idx + 1) << 42;
}

}  // namespace

MixtureManifest build_corpus(const CorpusConfig& cfg) {
  if (cfg.num_items < 1 || cfg.speakers < 1) throw std::invalid_argument("corpus: bad item/speaker count");
  if (cfg.tir_min > cfg.tir_max) throw std::invalid_argument("corpus: inverted tir range");
  if (cfg.with_noise && cfg.snr_min > cfg.snr_max)
    throw std::invalid_argument("corpus: inverted snr range");

  const fs::path base(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(base / "wav", ec);
  fs::create_directories(base / "emb", ec);
  if (!fs::exists(base / "wav") || !fs::exists(base / "emb"))
    throw std::runtime_error("corpus: cannot create output directories under " + cfg.out_dir);

  MixtureManifest manifest;
  manifest.split = cfg.split;
  manifest.base_dir = cfg.out_dir;

  const uint64_t offset = split_offset(cfg.split);
  for (int i = 0; i < cfg.num_items; ++i) {
    const uint64_t item_seed = derive_seed(cfg.master_seed ^ hash_string(cfg.split), static_cast<uint64_t>(i));
    Rng item_rng(item_seed);

    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%05d", cfg.split.c_str(), i);
    ManifestItem item;
    item.id = idbuf;
    item.seed = item_seed;
    item.tir_db = item_rng.uniform(cfg.tir_min, cfg.tir_max);
    if (cfg.with_noise) item.snr_db = item_rng.uniform(cfg.snr_min, cfg.snr_max);

    std::vector<Waveform> sources;
    std::vector<std::vector<double>> envelopes;
    for (int c = 0; c < cfg.speakers; ++c) {
      SpeakerSpec spk;
      // speaker seeds live in disjoint ranges per split
      spk.seed = offset |
                 (derive_seed(cfg.master_seed, static_cast<uint64_t>(i) * cfg.speakers + c) &
                  ((1ULL << 40) - 1));
      spk.duration_s = cfg.duration_s;
      spk.id = item.id + "_s" + std::to_string(c);
      SpeakerSignal sig = synth_speaker(spk);
      sources.push_back(std::move(sig.wave));
      envelopes.push_back(std::move(sig.envelope));
    }

    Waveform noise;
    if (cfg.with_noise)
      noise = synth_noise(derive_seed(item_seed, 0xabcdef), sources[0].length(), cfg.sample_rate);

    MixResult mr = mix(sources, item.tir_db, cfg.with_noise ? &noise : nullptr, item.snr_db);

    try {
      item.mixture = "wav/" + item.id + "_mix.wav";
      write_wav((base / item.mixture).string(), mr.mixture, WavFormat::float32);
      for (int c = 0; c < cfg.speakers; ++c) {
        Waveform scaled = sources[static_cast<size_t>(c)];
        scaled.samples.resize(mr.mixture.samples.size());
        for (double& s : scaled.samples) s *= mr.source_gains[static_cast<size_t>(c)];
        const std::string spath = "wav/" + item.id + "_s" + std::to_string(c) + ".wav";
        write_wav((base / spath).string(), scaled, WavFormat::float32);
        item.sources.push_back(spath);

        VisualEmbeddingSequence emb = synth_visual(envelopes[static_cast<size_t>(c)],
                                                   item.id + "_s" + std::to_string(c),
                                                   cfg.visual_dim);
        const std::string epath = "emb/" + item.id + "_s" + std::to_string(c) + ".aveb";
        save_embeddings((base / epath).string(), emb);
        item.embeddings.push_back(epath);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("corpus: item " + std::to_string(i) + ": " + e.what());
    }
    manifest.items.push_back(std::move(item));
  }

  write_manifest((base / (cfg.split + ".jsonl")).string(), manifest);
  return manifest;
}

void write_manifest(const std::string& path, const MixtureManifest& manifest) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("manifest: cannot write " + path);
  for (const ManifestItem& it : manifest.items) {
    json j;
    j["id"] = it.id;
    j["mixture"] = it.mixture;
    j["sources"] = it.sources;
    j["embeddings"] = it.embeddings;
    j["tir_db"] = it.tir_db;
    if (it.snr_db.has_value())
      j["snr_db"] = *it.snr_db;
    else
      j["snr_db"] = nullptr;
    j["seed"] = it.seed;
    os << j.dump() << "\n";
  }
}

MixtureManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open " + path);
  MixtureManifest manifest;
  manifest.base_dir = fs::path(path).parent_path().string();
  if (manifest.base_dir.empty()) manifest.base_dir = ".";
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ManifestItem it;
    it.id = j.at("id").get<std::string>();
    it.mixture = j.at("mixture").get<std::string>();
    it.sources = j.at("sources").get<std::vector<std::string>>();
    it.embeddings = j.at("embeddings").get<std::vector<std::string>>();
    it.tir_db = j.at("tir_db").get<double>();
    if (j.contains("snr_db") && !j.at("snr_db").is_null())
      it.snr_db = j.at("snr_db").get<double>();
    it.seed = j.at("seed").get<uint64_t>();
    manifest.items.push_back(std::move(it));
  }
  return manifest;
}

}  // namespace avcn
