#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "contrastlab/config.hpp"
#include "contrastlab/data.hpp"
#include "contrastlab/model.hpp"
#include "contrastlab/optimizer.hpp"
#include "contrastlab/telemetry.hpp"

namespace contrastlab {

// A batch produced a non-finite embedding or loss. snapshot() holds the
// epoch, batch position, source indices and the last completed metrics.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, Json snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const Json& snapshot() const noexcept { return snapshot_; }

 private:
  Json snapshot_;
};

// Problems that block Trainer construction. Unlike validation_errors() a
// zero learning rate is accepted here.
std::vector<std::string> trainer_errors(const ExperimentConfig& cfg);

// Owns the data, model and optimizer of one run.
//
// Training batches: train positions shuffled by (run_seed, epoch), cut into
// batches of N sources, and the incomplete tail dropped. Views of epoch e
// use seeds derive_seed(run_seed, e, source_index).
//
// Validation batches: validation positions in split order, truncated to a
// multiple of N and cut into consecutive batches. Views always use epoch 0,
// so with frozen parameters evaluate() returns the same row every time.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg);

  // Runs epoch() + 1 and returns its train row.
  EpochMetrics train_epoch();
  // Validation row labelled with the current epoch. No parameter updates.
  EpochMetrics evaluate();

  // Loads parameters and buffers from a checkpoint sidecar and sets epoch()
  // to the checkpoint's epoch. Throws ConfigError if its model spec differs
  // from the config's.
  void restore(const std::string& sidecar_path);

  int epoch() const noexcept { return epoch_; }
  const ExperimentConfig& config() const noexcept { return cfg_; }
  Model& model() noexcept { return model_; }
  const ImageCollection& images() const noexcept { return images_; }
  const std::vector<std::size_t>& train_positions() const noexcept { return train_; }
  const std::vector<std::size_t>& validation_positions() const noexcept { return validation_; }
  const ChannelStats& normalization() const noexcept { return normalization_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  // Counts, class balance and normalisation, as echoed into the manifest.
  Json dataset_summary() const;

 private:
  double elapsed_since(double start) const;

  ExperimentConfig cfg_;
  ImageCollection images_;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> validation_;
  std::vector<std::string> warnings_;
  ChannelStats normalization_;
  Model model_;
  Adam optimizer_;
  int epoch_ = 0;
  EpochMetrics last_train_;
};

struct RunHooks {
  // Replaces the validation positive term as the monitored series.
  std::function<double(const EpochMetrics& val)> monitored_value;
  std::function<void(const EpochMetrics& train, const EpochMetrics& val)> on_epoch;
};

struct RunResult {
  int final_epoch = 0;
  std::string stop_reason;  // "max_epochs", "positive_term_onset" or "aborted"
  std::string manifest_path;
  std::string metrics_path;
  std::vector<std::string> checkpoint_paths;
  OnsetReport positive_onset;  // validation positive term (or the hook's series)
  OnsetReport total_onset;     // validation total loss
};

// Full run into cfg.output_dir: metrics.csv, manifest.json and checkpoints.
// The output directory is checked before any data is loaded. On abort the
// manifest and abort_snapshot.json are written and TrainingAborted rethrown.
RunResult run(const ExperimentConfig& cfg, const RunHooks& hooks = {});

}  // namespace contrastlab
