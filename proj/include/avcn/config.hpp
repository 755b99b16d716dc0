// JSON run configuration: model + training + data sections with strict key
// validation. CLI flags override file values.
#pragma once

#include <stdexcept>
#include <string>

#include "avcn/model.hpp"
#include "avcn/synth.hpp"
#include "avcn/train.hpp"

namespace avcn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  CorpusConfig data;
};

// Parses and validates a config file; unknown keys are rejected. A missing
// path yields the defaults.
RunConfig load_run_config(const std::string& path);
RunConfig default_run_config();

std::string run_config_to_json(const RunConfig& cfg);
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json_text(const std::string& text);

}  // namespace avcn
