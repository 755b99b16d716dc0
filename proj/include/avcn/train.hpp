// Training harness: Adam, cosine warmup + reduce-on-plateau schedule, early
// stopping, checkpointing and the evaluation driver.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "avcn/checkpoint.hpp"
#include "avcn/loss.hpp"
#include "avcn/model.hpp"
#include "avcn/synth.hpp"

namespace avcn {

struct TrainConfig {
  double lr_max = 1e-3;
  double lr_min = 1e-6;
  int warmup_epochs = 10;
  int plateau_patience = 3;
  double plateau_factor = 0.9;
  int early_stop_patience = 10;
  int batch_size = 2;
  int max_epochs = 200;
  int64_t max_steps = 0;  // 0 = no step cap
  uint64_t seed = 1234;
  std::string precision = "double";  // or "single"
  double mag_weight = 1.0;
  double sisdr_weight = 1.0;

  void validate() const;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cosine warmup from lr_min to lr_max over warmup_epochs; afterwards the
// plateau-adjusted rate carried in the state.
double lr_at(int epoch, const TrainerState& state, const TrainConfig& cfg);

// Validation bookkeeping shared by the real loop and schedule tests: updates
// best/plateau counters, applies the x0.9 reduction after plateau_patience
// stagnant epochs (post warmup), and reports when early stopping fires.
bool schedule_epoch_end(int epoch, double val_loss, const TrainConfig& cfg, TrainerState& state);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<Tensor> m, v;

  void init(const ParamList& params);
  void step(const ParamList& params, double lr);
};

struct CorpusItem {
  std::string id;
  Waveform mixture;
  std::vector<Waveform> sources;
  std::vector<VisualEmbeddingSequence> embeddings;
};

std::vector<CorpusItem> load_items(const MixtureManifest& manifest);

// loss of one item; when grad is non-null it receives dLoss/d(estimate_c)
LossReport item_loss(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets,
                     const StftConfig& stft_cfg, double mag_weight, double sisdr_weight,
                     std::vector<std::vector<double>>* grad);

struct TrainResult {
  std::vector<EpochRecord> history;
  TrainerState state;
  std::string best_checkpoint;
  std::string last_checkpoint;
  int64_t steps = 0;
};

// resume_checkpoint (optional) restores parameters, optimizer moments, rng
// and schedule state; the run then continues at the recorded epoch exactly
// as the uninterrupted run would.
TrainResult train(Separator& model, const MixtureManifest& train_manifest,
                  const MixtureManifest& val_manifest, const TrainConfig& cfg,
                  const std::string& out_dir, const std::string& resume_checkpoint = "");

using SepFn = std::function<std::vector<Waveform>(const Waveform&,
                                                  const std::vector<VisualEmbeddingSequence>&)>;

// Per-item metrics against the manifest sources (speaker-averaged), JSONL
// report via MetricReport. Missing files are recorded and skipped.
MetricReport evaluate(const SepFn& separate_fn, const MixtureManifest& manifest,
                      const std::string& export_dir = "");

}  // namespace avcn
