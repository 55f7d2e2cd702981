#include "contrastlab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "contrastlab/config.hpp"
#include "contrastlab/detector.hpp"
#include "contrastlab/errors.hpp"
#include "contrastlab/plot.hpp"
#include "contrastlab/telemetry.hpp"
#include "contrastlab/trainer.hpp"

namespace fs = std::filesystem;

namespace contrastlab {

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::string output_dir;
};

struct DetectorArgs {
  std::optional<std::size_t> window, patience, warmup;
  std::optional<double> min_delta, min_delta_fraction;
  std::string config;

  DetectorConfig resolve() const {
    DetectorConfig cfg;
    if (!config.empty()) cfg = load_config(config).detector;
    if (window) cfg.smoothing_window = *window;
    if (patience) cfg.patience = *patience;
    if (warmup) cfg.warmup = *warmup;
    if (min_delta) cfg.min_delta = *min_delta;
    if (min_delta_fraction) cfg.min_delta_fraction = *min_delta_fraction;
    cfg.validate();
    return cfg;
  }
};

void add_detector_flags(CLI::App* cmd, DetectorArgs& d) {
  cmd->add_option("--window", d.window, "Smoothing window in epochs (1 disables smoothing)");
  cmd->add_option("--min-delta", d.min_delta, "Absolute rise above the running minimum");
  cmd->add_option("--min-delta-fraction", d.min_delta_fraction, "Rise as a fraction of the series range");
  cmd->add_option("--patience", d.patience, "Consecutive epochs the rise must last");
  cmd->add_option("--warmup", d.warmup, "Leading epochs ignored by the running minimum");
  cmd->add_option("--config", d.config, "Take detector defaults from this experiment config")->check(CLI::ExistingFile);
}

// File config, then --set overrides, then --output-dir.
ExperimentConfig effective_config(const ConfigArgs& a) {
  std::ifstream in(a.path);
  if (!in) throw IoError("cannot open config file", a.path);
  Json doc;
  try {
    doc = Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + a.path + " is not valid JSON: " + e.what());
  }
  for (const auto& o : a.overrides) apply_override(doc, o);
  ExperimentConfig cfg = config_from_json(doc);
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  return cfg;
}

int report_invalid(const std::vector<std::string>& errors, std::ostream& err) {
  err << "invalid configuration:\n";
  for (const auto& e : errors) err << "  " << e << '\n';
  return kExitUsage;
}

int cmd_train(const ConfigArgs& args, int log_every, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = effective_config(args);
  if (const auto errors = validation_errors(cfg); !errors.empty()) return report_invalid(errors, err);
  RunHooks hooks;
  if (log_every > 0) {
    hooks.on_epoch = [&](const EpochMetrics& train, const EpochMetrics& val) {
      if (train.epoch % log_every != 0 && train.epoch != 1) return;
      err << "epoch " << train.epoch << "  train " << format_double(train.total_loss) << "  val "
          << format_double(val.total_loss) << " (pos " << format_double(val.positive_term) << ", neg "
          << format_double(val.negative_term) << ")\n";
    };
  }
  try {
    const RunResult r = run(cfg, hooks);
    err << "stopped at epoch " << r.final_epoch << ": " << r.stop_reason << '\n';
    out << r.manifest_path << '\n';
  } catch (const TrainingAborted& e) {
    err << "error: " << e.what() << '\n';
    out << (fs::path(cfg.output_dir) / "manifest.json").string() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_evaluate(const ConfigArgs& args, const std::string& checkpoint, std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = effective_config(args);
  auto errors = trainer_errors(cfg);
  if (!errors.empty()) return report_invalid(errors, err);
  Trainer trainer(cfg);
  trainer.restore(checkpoint);
  const EpochMetrics m = trainer.evaluate();
  out << Json{{"checkpoint", checkpoint},
              {"epoch", m.epoch},
              {"split", "val"},
              {"total_loss", m.total_loss},
              {"positive_term", m.positive_term},
              {"negative_term", m.negative_term}}
             .dump(2)
      << '\n';
  return kExitOk;
}

int cmd_detect(const std::string& metrics, const std::string& split, const DetectorArgs& d, std::ostream& out) {
  const DetectorConfig cfg = d.resolve();
  const Split s = parse_split(split);
  const auto rows = read_metrics(metrics);
  const std::string prefix = std::string(split_name(s)) + ".";
  const OnsetReport pos = detect_onset(select_series(rows, s, MetricColumn::PositiveTerm), cfg, prefix + "positive_term");
  const OnsetReport total = detect_onset(select_series(rows, s, MetricColumn::TotalLoss), cfg, prefix + "total_loss");
  out << Json{{"metrics", metrics},
              {"detector", to_json(cfg)},
              {"positive_term", to_json(pos)},
              {"total_loss", to_json(total)},
              {"verdict", std::string(order_name(compare_onsets(pos, total)))}}
             .dump(2)
      << '\n';
  return kExitOk;
}

int cmd_plot(const std::string& metrics, const std::string& base, const DetectorArgs& d, std::ostream& out,
             std::ostream& err) {
  const DetectorConfig cfg = d.resolve();
  const PlotFiles files = plot_metrics(read_metrics(metrics), base, cfg);
  for (const auto& w : files.warnings) err << "warning: " << w << '\n';
  out << files.loss_figure << '\n' << files.terms_figure << '\n' << files.sidecar << '\n';
  return kExitOk;
}

void write_if_changed(const fs::path& path, const std::string& bytes) {
  {
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::stringstream ss;
      ss << in.rdbuf();
      if (ss.str() == bytes) return;
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write", path.string());
  out << bytes;
  if (!out.flush()) throw IoError("error writing", path.string());
}

int cmd_make_tiny_fixture(const std::string& dir_arg, std::ostream& out) {
  const fs::path dir = fs::absolute(dir_arg).lexically_normal();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create fixture directory", dir.string());

  ExperimentConfig cfg = ExperimentConfig::tiny();
  cfg.dataset.root = dir.string();
  cfg.output_dir = (dir / "run").string();

  const fs::path blob = dir / kTinyDatasetFile;
  const fs::path tmp = dir / (std::string(kTinyDatasetFile) + ".tmp");
  write_tiny_dataset(generate_synthetic_tiny(cfg.dataset.synthetic_count, cfg.dataset.synthetic_seed), tmp.string());
  std::stringstream bytes;
  bytes << std::ifstream(tmp, std::ios::binary).rdbuf();
  fs::remove(tmp);
  write_if_changed(blob, bytes.str());
  write_if_changed(dir / "tiny.json", to_json(cfg).dump(2) + "\n");
  out << (dir / "tiny.json").string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive training with NT-Xent loss decomposition and overfitting-onset detection", "clab"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  int log_every = 10;
  auto* train = app.add_subcommand("train", "Run an experiment");
  train->add_option("--config", train_args.path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--set", train_args.overrides, "Dotted override such as loss.temperature=0.2 (repeatable)");
  train->add_option("--output-dir", train_args.output_dir, "Overrides output_dir");
  train->add_option("--log-every", log_every, "Progress line every N epochs on stderr (0 silences)");

  ConfigArgs eval_args;
  std::string checkpoint;
  auto* evaluate = app.add_subcommand("evaluate", "Validation metrics of a checkpoint");
  evaluate->add_option("--config", eval_args.path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--set", eval_args.overrides, "Dotted override (repeatable)");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint sidecar (.json)")->required();

  std::string metrics_path, split = "val";
  DetectorArgs detect_args;
  auto* detect = app.add_subcommand("detect", "Onset reports for the positive term and total loss");
  detect->add_option("metrics", metrics_path, "metrics.csv")->required();
  detect->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));
  add_detector_flags(detect, detect_args);

  std::string plot_metrics_path, plot_base;
  DetectorArgs plot_detector;
  auto* plot = app.add_subcommand("plot", "SVG figures of the loss curves and their terms");
  plot->add_option("metrics", plot_metrics_path, "metrics.csv")->required();
  plot->add_option("--output", plot_base, "Output path prefix; writes <prefix>_loss.svg, _terms.svg, _plots.json")
      ->required();
  add_detector_flags(plot, plot_detector);

  std::string fixture_dir;
  auto* fixture = app.add_subcommand("make-tiny-fixture", "Write the synthetic-tiny dataset and a tiny config");
  fixture->add_option("dir", fixture_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_args, log_every, out, err);
    if (*evaluate) return cmd_evaluate(eval_args, checkpoint, out, err);
    if (*detect) return cmd_detect(metrics_path, split, detect_args, out);
    if (*plot) return cmd_plot(plot_metrics_path, plot_base, plot_detector, out, err);
    if (*fixture) return cmd_make_tiny_fixture(fixture_dir, out);
  } catch (const ConfigError& e) {  // includes UsageError
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace contrastlab
