#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "contrastlab/augmentation.hpp"
#include "contrastlab/data.hpp"
#include "contrastlab/detector.hpp"
#include "contrastlab/errors.hpp"
#include "contrastlab/loss.hpp"
#include "contrastlab/model.hpp"

namespace contrastlab {

using Json = nlohmann::ordered_json;

// Every knob of a run. Serialised as one JSON document; see configs/.
struct ExperimentConfig {
  DatasetSpec dataset;
  ModelSpec model;
  LossConfig loss;
  AugmentationConfig augmentation;
  std::size_t batch_pairs = 256;  // N source images per batch, 2N rows
  double learning_rate = 1e-3;
  int max_epochs = 1500;
  std::uint64_t run_seed = 0;
  DetectorConfig detector;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string output_dir = "runs/default";
  // Zeroes wall-clock columns so metrics files are byte-reproducible.
  bool deterministic = false;

  // Preset for the 8x8 synthetic dataset and the MLP backbone.
  static ExperimentConfig tiny();
};

// A bad dotted override or an unknown key: reported before any work starts.
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

Json to_json(const ExperimentConfig& cfg);

// Missing keys keep their defaults. Unknown keys throw UsageError; values of
// the wrong type throw ConfigError naming the dotted field path.
ExperimentConfig config_from_json(const Json& j);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Applies "a.b.c=value" to `doc`. The value is parsed as JSON when possible
// and taken as a string otherwise. The path must exist in the full default
// schema, otherwise UsageError.
void apply_override(Json& doc, const std::string& assignment);

// Field-level problems, one message per field, each starting with the
// dotted path. Empty when the config is valid for a training run.
std::vector<std::string> validation_errors(const ExperimentConfig& cfg);

// Throws ConfigError whose message joins validation_errors().
void validate(const ExperimentConfig& cfg);

Json to_json(const DetectorConfig& cfg);
Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& j);
Json to_json(const OnsetReport& report);

// Stable short identifier of a configuration.
std::string config_digest(const ExperimentConfig& cfg);

}  // namespace contrastlab
