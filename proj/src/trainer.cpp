#include "contrastlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "contrastlab/checkpoint.hpp"
#include "contrastlab/detector.hpp"
#include "contrastlab/errors.hpp"
#include "contrastlab/loss.hpp"
#include "contrastlab/rng.hpp"

namespace fs = std::filesystem;

namespace contrastlab {

namespace {

constexpr std::uint64_t kSplitTag = 0x73706c6974ULL;    // "split"
constexpr std::uint64_t kModelTag = 0x6d6f64656cULL;    // "model"
constexpr std::uint64_t kShuffleTag = 0x73687566ULL;    // "shuf"

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

ExperimentConfig checked(ExperimentConfig cfg) {
  const auto errors = trainer_errors(cfg);
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

Json metrics_json(const EpochMetrics& m) {
  return Json{{"epoch", m.epoch},
              {"split", std::string(split_name(m.split))},
              {"total_loss", m.total_loss},
              {"positive_term", m.positive_term},
              {"negative_term", m.negative_term}};
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

struct Accumulator {
  double total = 0, positive = 0, negative = 0, weight = 0;

  void add(const LossDecomposition& d, double rows) {
    total += d.total * rows;
    positive += d.positive_term * rows;
    negative += d.negative_term * rows;
    weight += rows;
  }
  EpochMetrics result(int epoch, Split split) const {
    EpochMetrics m;
    m.epoch = epoch;
    m.split = split;
    m.total_loss = total / weight;
    m.positive_term = positive / weight;
    m.negative_term = negative / weight;
    return m;
  }
};

Matrix to_matrix(const Tensor& z) {
  return Eigen::Map<const Matrix>(z.data(), static_cast<Index>(z.dim(0)), static_cast<Index>(z.dim(1)));
}

}  // namespace

std::vector<std::string> trainer_errors(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  for (auto& e : validation_errors(cfg)) {
    if (e.starts_with("learning_rate") && cfg.learning_rate == 0.0) continue;
    errors.push_back(std::move(e));
  }
  return errors;
}

Trainer::Trainer(ExperimentConfig cfg)
    : cfg_(checked(std::move(cfg))),
      images_(load_dataset(cfg_.dataset)),
      model_(cfg_.model, mix64(cfg_.run_seed ^ kModelTag)),
      optimizer_(model_.parameters(), AdamConfig{cfg_.learning_rate}) {
  const std::size_t side = std::min(images_.height(), images_.width());
  if (cfg_.augmentation.crop_size > side + 2 * cfg_.augmentation.pad_pixels(side)) {
    throw ConfigError("augmentation.crop_size (" + std::to_string(cfg_.augmentation.crop_size) +
                      ") exceeds the padded image side of the dataset");
  }
  SplitIndices parts = split(images_, cfg_.dataset.train_fraction, mix64(cfg_.run_seed ^ kSplitTag));
  train_ = std::move(parts.train);
  validation_ = std::move(parts.validation);
  warnings_ = std::move(parts.warnings);

  const std::size_t n = cfg_.batch_pairs;
  if (train_.size() < n) {
    throw ConfigError("training split has " + std::to_string(train_.size()) + " images, fewer than batch_pairs (" +
                      std::to_string(n) + ")");
  }
  if (validation_.size() < n) {
    throw ConfigError("validation split has " + std::to_string(validation_.size()) +
                      " images, fewer than batch_pairs (" + std::to_string(n) + "); one batch needs 2N views");
  }
  if (validation_.size() % n != 0) {
    warnings_.push_back("validation split truncated from " + std::to_string(validation_.size()) + " to " +
                        std::to_string(validation_.size() / n * n) + " images (a multiple of batch_pairs)");
    validation_.resize(validation_.size() / n * n);
  }
  normalization_ = channel_stats(images_, train_);
}

double Trainer::elapsed_since(double start) const { return cfg_.deterministic ? 0.0 : now_seconds() - start; }

EpochMetrics Trainer::train_epoch() {
  const double start = now_seconds();
  const int epoch = epoch_ + 1;
  std::vector<std::size_t> order = train_;
  Rng rng(derive_seed(cfg_.run_seed, static_cast<std::uint64_t>(epoch), kShuffleTag));
  rng.shuffle(order.begin(), order.end());

  const std::size_t n = cfg_.batch_pairs;
  Accumulator acc;
  for (std::size_t b = 0; b + n <= order.size(); b += n) {
    const std::span<const std::size_t> positions(order.data() + b, n);
    const PairBatch batch = assemble_pair_batch(images_, positions, static_cast<std::uint64_t>(epoch),
                                                cfg_.augmentation, cfg_.run_seed, normalization_);
    const Tensor z = model_.forward(batch.images, true);
    const Matrix zm = to_matrix(z);
    const auto abort = [&](const std::string& why) {
      Json snapshot{{"reason", why},
                    {"epoch", epoch},
                    {"batch_index", b / n},
                    {"source_indices", batch.source_indices},
                    {"last_train_metrics", last_train_.epoch > 0 ? metrics_json(last_train_) : Json(nullptr)}};
      throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(b / n) + ": " + why,
                            std::move(snapshot));
    };
    if (!all_finite(zm)) abort("non-finite embedding");
    LossWithGradient lg;
    try {
      lg = ntxent_loss_with_gradient(EmbeddingBatch(zm), cfg_.loss);
    } catch (const InvalidArgument& e) {
      abort(e.what());
    }
    if (!std::isfinite(lg.loss.total) || !all_finite(lg.gradient)) abort("non-finite loss");
    acc.add(lg.loss, static_cast<double>(2 * n));

    Tensor grad_z(z.shape());
    std::copy(lg.gradient.data(), lg.gradient.data() + lg.gradient.size(), grad_z.data());
    model_.zero_grad();
    model_.backward(grad_z);
    optimizer_.step();
  }
  epoch_ = epoch;
  EpochMetrics m = acc.result(epoch, Split::Train);
  m.wall_time_s = elapsed_since(start);
  last_train_ = m;
  return m;
}

EpochMetrics Trainer::evaluate() {
  const double start = now_seconds();
  const std::size_t n = cfg_.batch_pairs;
  Accumulator acc;
  for (std::size_t b = 0; b + n <= validation_.size(); b += n) {
    const std::span<const std::size_t> positions(validation_.data() + b, n);
    const PairBatch batch = assemble_pair_batch(images_, positions, 0, cfg_.augmentation, cfg_.run_seed,
                                                normalization_);
    const Matrix zm = to_matrix(model_.forward(batch.images, false));
    if (!all_finite(zm)) {
      throw TrainingAborted("non-finite validation embedding at epoch " + std::to_string(epoch_),
                            Json{{"reason", "non-finite validation embedding"},
                                 {"epoch", epoch_},
                                 {"batch_index", b / n},
                                 {"source_indices", batch.source_indices}});
    }
    acc.add(decompose_loss(EmbeddingBatch(zm), cfg_.loss), static_cast<double>(2 * n));
  }
  EpochMetrics m = acc.result(epoch_, Split::Val);
  m.wall_time_s = elapsed_since(start);
  return m;
}

void Trainer::restore(const std::string& sidecar_path) {
  CheckpointInfo info;
  Model loaded = load_checkpoint(sidecar_path, &info);
  if (to_json(info.spec) != to_json(cfg_.model)) {
    throw ConfigError("checkpoint model " + to_json(info.spec).dump() + " does not match config model " +
                      to_json(cfg_.model).dump());
  }
  const auto src = loaded.parameters();
  const auto dst = model_.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
  const auto src_buffers = loaded.buffers();
  const auto dst_buffers = model_.buffers();
  for (std::size_t i = 0; i < dst_buffers.size(); ++i) *dst_buffers[i] = *src_buffers[i];
  epoch_ = info.epoch;
}

Json Trainer::dataset_summary() const {
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;
  for (const auto& name : cfg_.dataset.included_classes) per_class[name] = {0, 0};
  for (std::size_t p : train_) per_class[images_.class_names()[images_.label(p)]].first++;
  for (std::size_t p : validation_) per_class[images_.class_names()[images_.label(p)]].second++;
  Json classes = Json::object();
  for (const auto& [name, counts] : per_class) classes[name] = {{"train", counts.first}, {"validation", counts.second}};
  return Json{{"source", std::string(source_name(cfg_.dataset.source))},
              {"images", images_.size()},
              {"train", train_.size()},
              {"validation", validation_.size()},
              {"batches_per_epoch", train_.size() / cfg_.batch_pairs},
              {"validation_batches", validation_.size() / cfg_.batch_pairs},
              {"classes", classes},
              {"normalization", {{"mean", normalization_.mean}, {"stddev", normalization_.stddev}}},
              {"warnings", warnings_}};
}

namespace {

void write_json(const fs::path& path, const Json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write", tmp.string());
    out << j.dump(2) << '\n';
    if (!out.flush()) throw IoError("error writing", tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to", path.string());
}

std::string relative_to(const fs::path& p, const fs::path& base) { return fs::relative(p, base).generic_string(); }

}  // namespace

RunResult run(const ExperimentConfig& cfg, const RunHooks& hooks) {
  validate(cfg);
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory", dir.string());

  RunResult result;
  result.metrics_path = (dir / "metrics.csv").string();
  result.manifest_path = (dir / "manifest.json").string();
  MetricsWriter writer(result.metrics_path, MetricsWriter::Mode::Truncate);

  Trainer trainer(cfg);
  const std::string run_id = config_digest(cfg);

  Json manifest;
  manifest["run_id"] = run_id;
  manifest["status"] = "running";
  manifest["config"] = to_json(cfg);
  manifest["dataset"] = trainer.dataset_summary();
  manifest["model"] = {{"parameter_count", trainer.model().parameter_count()}};
  manifest["monitored_series"] = hooks.monitored_value ? "hook" : "val.positive_term";
  manifest["final_epoch"] = 0;
  manifest["stop_reason"] = nullptr;
  manifest["files"] = {{"metrics", "metrics.csv"}, {"checkpoints", Json::array()}};
  write_json(result.manifest_path, manifest);

  Series monitored, val_total;
  bool onset_checkpointed = false;
  const auto checkpoint = [&](const std::string& stem) {
    const std::string path = save_checkpoint(trainer.model(), trainer.epoch(), run_id, dir.string(), stem);
    result.checkpoint_paths.push_back(path);
    manifest["files"]["checkpoints"].push_back(relative_to(path, dir));
  };
  const auto finish = [&](const std::string& reason) {
    result.final_epoch = trainer.epoch();
    result.stop_reason = reason;
    DetectorConfig det = cfg.detector;
    if (!monitored.empty()) {
      result.positive_onset = detect_onset(monitored, det, hooks.monitored_value ? "hook" : "val.positive_term");
      result.total_onset = detect_onset(val_total, det, "val.total_loss");
    }
    manifest["status"] = reason == "aborted" ? "aborted" : "finished";
    manifest["final_epoch"] = result.final_epoch;
    manifest["stop_reason"] = reason;
    manifest["onsets"] = {{"positive_term", to_json(result.positive_onset)},
                          {"total_loss", to_json(result.total_onset)},
                          {"verdict", std::string(order_name(compare_onsets(result.positive_onset,
                                                                             result.total_onset)))}};
    write_json(result.manifest_path, manifest);
  };

  try {
    std::string reason = "max_epochs";
    while (trainer.epoch() < cfg.max_epochs) {
      const EpochMetrics train = trainer.train_epoch();
      const EpochMetrics val = trainer.evaluate();
      writer.append(train);
      writer.append(val);
      if (hooks.on_epoch) hooks.on_epoch(train, val);

      monitored.push_back({val.epoch, hooks.monitored_value ? hooks.monitored_value(val) : val.positive_term});
      val_total.push_back({val.epoch, val.total_loss});

      const bool periodic = cfg.checkpoint_every > 0 && val.epoch % cfg.checkpoint_every == 0;
      bool fired = false;
      if (!onset_checkpointed || cfg.detector.early_stop) {
        fired = detect_onset(monitored, cfg.detector).fired();
      }
      if (fired && !onset_checkpointed) {
        checkpoint("onset");
        onset_checkpointed = true;
      }
      if (periodic) checkpoint("epoch_" + std::to_string(val.epoch));
      if (fired && cfg.detector.early_stop) {
        reason = "positive_term_onset";
        break;
      }
    }
    checkpoint("final");
    finish(reason);
  } catch (const TrainingAborted& e) {
    Json snapshot = e.snapshot();
    snapshot["message"] = e.what();
    write_json(dir / "abort_snapshot.json", snapshot);
    manifest["files"]["abort_snapshot"] = "abort_snapshot.json";
    finish("aborted");
    throw;
  }
  return result;
}

}  // namespace contrastlab
