// Deterministic synthetic audiovisual corpus: harmonic voices gated by
// syllabic envelopes, paired embedding streams carrying the envelope cue,
// and TIR/SNR-controlled mixing. Everything is a pure function of the seeds.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "avcn/aveb.hpp"
#include "avcn/dsp.hpp"

namespace avcn {

struct SpeakerSpec {
  uint64_t seed = 0;
  double f0_min = 100.0, f0_max = 320.0;   // Hz, walk stays inside
  double mod_rate_min = 2.0, mod_rate_max = 6.0;  // syllabic envelope, Hz
  double mod_depth = 0.9;
  double duration_s = 3.0;
  std::string id;
};

struct SpeakerSignal {
  Waveform wave;
  std::vector<double> envelope;  // sampled at 25 fps
};

SpeakerSignal synth_speaker(const SpeakerSpec& spec);

// embedding[t] = envelope[t] * basis(id) on the first 8 dims, then a small
// deterministic noise floor; keeps the audio-visual pairing learnable
VisualEmbeddingSequence synth_visual(const std::vector<double>& envelope,
                                     const std::string& id_token, int fv);

// pink-ish background noise
Waveform synth_noise(uint64_t seed, int64_t length, int sample_rate);

struct MixResult {
  Waveform mixture;
  std::vector<double> source_gains;  // per input source, includes peak guard
  double noise_gain = 0.0;
  double peak_gain = 1.0;
};

// Source 0 is the level reference; later sources are scaled to the requested
// TIR, noise to the requested SNR against the speech mix. A peak guard keeps
// |x| <= 0.99 and its gain is recorded (and applies to the sources too).
MixResult mix(const std::vector<Waveform>& sources, double tir_db,
              const Waveform* noise, std::optional<double> snr_db);

struct CorpusConfig {
  std::string out_dir;
  std::string split = "train";
  int num_items = 8;
  int speakers = 2;
  double duration_s = 3.0;
  double tir_min = -5.0, tir_max = 5.0;
  bool with_noise = false;
  double snr_min = -5.0, snr_max = 20.0;
  uint64_t master_seed = 77;
  int visual_dim = 512;
  int sample_rate = 16000;
};

struct ManifestItem {
  std::string id;
  std::string mixture;                  // path relative to the manifest
  std::vector<std::string> sources;     // visual order == source order
  std::vector<std::string> embeddings;
  double tir_db = 0.0;
  std::optional<double> snr_db;
  uint64_t seed = 0;
};

struct MixtureManifest {
  std::string split;
  std::string base_dir;  // directory holding the manifest file
  std::vector<ManifestItem> items;
};

MixtureManifest build_corpus(const CorpusConfig& cfg);

void write_manifest(const std::string& path, const MixtureManifest& manifest);
MixtureManifest read_manifest(const std::string& path);

}  // namespace avcn
