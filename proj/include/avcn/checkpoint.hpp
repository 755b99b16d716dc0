// Versioned checkpoint container: canonical parameter paths mapped to
// little-endian tensors (float32 or float64 payloads) plus a model-config
// echo and optional trainer state. Loading validates every shape.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avcn/model.hpp"

namespace avcn {

enum class CkptDtype { f32, f64 };

struct TrainerState {
  int epoch = 0;
  int64_t step = 0;
  double current_lr = 0.0;
  double best_val_loss = 0.0;
  int epochs_since_best = 0;
  int plateau_bad_epochs = 0;
  int64_t adam_t = 0;
  std::string rng_state;
};

// extra entries (e.g. optimizer moments) ride along under their own names
void save_checkpoint(const std::string& path, Separator& model, CkptDtype dtype,
                     const TrainerState* trainer = nullptr,
                     const std::vector<std::pair<std::string, const Tensor*>>& extra = {});

struct LoadedCheckpoint {
  ModelConfig config;
  std::optional<TrainerState> trainer;
  std::map<std::string, Tensor> extra;
};

// rebuilds the model from the embedded config and fills every parameter
LoadedCheckpoint load_checkpoint(const std::string& path, Separator& model);

// config echo only (for info commands)
ModelConfig peek_checkpoint_config(const std::string& path);

}  // namespace avcn
