#include "contrastlab/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "contrastlab/errors.hpp"
#include "contrastlab/rng.hpp"

namespace contrastlab {

namespace {

// Reads fields of one JSON object, tracking which keys were consumed so
// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(display(path_) + " must be an object");
  }
  // Throws UsageError if the object has keys nothing asked for.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw UsageError("unknown config key '" + field(key) + "'");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field(key) + ": wrong type (" + it->type_name() + ")");
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T value{};
    read(key, value);
    out = value;
  }

  template <typename Fn>
  void read_object(const char* key, Fn&& fn) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    ObjectReader sub(*it, field(key));
    fn(sub, *it);
    sub.finish();
  }

  template <typename Parse, typename T>
  void read_enum(const char* key, T& out, Parse parse) {
    std::string name;
    bool present = j_.contains(key);
    read(key, name);
    if (present) out = parse(name);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  static std::string display(const std::string& p) { return p.empty() ? "config" : p; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Unsigned fields must not silently wrap from negative JSON numbers.
template <typename T>
void read_count(ObjectReader& r, const char* key, const Json& parent, T& out) {
  if (parent.contains(key) && parent[key].is_number_integer() && parent[key].template get<long long>() < 0) {
    throw ConfigError(r.field(key) + " must be >= 0");
  }
  r.read(key, out);
}

Json to_json(const DatasetSpec& d) {
  Json j;
  j["source"] = std::string(source_name(d.source));
  j["included_classes"] = d.included_classes;
  j["train_fraction"] = d.train_fraction;
  j["subset_size"] = d.subset_size ? Json(*d.subset_size) : Json(nullptr);
  j["root"] = d.root;
  j["synthetic_count"] = d.synthetic_count;
  j["synthetic_seed"] = d.synthetic_seed;
  return j;
}

Json to_json(const AugmentationConfig& a) {
  Json j;
  j["pad_fraction"] = a.pad_fraction;
  j["crop_size"] = a.crop_size;
  j["hflip_prob"] = a.hflip_prob;
  j["jitter"] = Json{{"brightness", a.jitter.brightness},
                     {"contrast", a.jitter.contrast},
                     {"saturation", a.jitter.saturation},
                     {"hue", a.jitter.hue}};
  j["jitter_prob"] = a.jitter_prob;
  j["grayscale_prob"] = a.grayscale_prob;
  j["blur_kernel_fraction"] = a.blur_kernel_fraction;
  j["blur_sigma_range"] = Json::array({a.blur_sigma_min, a.blur_sigma_max});
  return j;
}

void collect_errors(std::vector<std::string>& errors, const std::function<void()>& check) {
  try {
    check();
  } catch (const std::exception& e) {
    errors.emplace_back(e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::tiny() {
  ExperimentConfig cfg;
  cfg.dataset.source = DatasetSource::SyntheticTiny;
  cfg.dataset.included_classes = synthetic_tiny_classes();
  cfg.dataset.synthetic_count = 96;
  cfg.dataset.train_fraction = 2.0 / 3.0;
  cfg.model = ModelSpec::tiny_mlp();
  cfg.augmentation.crop_size = kTinyImageSide;
  cfg.batch_pairs = 8;
  cfg.max_epochs = 300;
  cfg.deterministic = true;
  cfg.output_dir = "runs/tiny";
  return cfg;
}

Json to_json(const ModelSpec& m) {
  Json j;
  j["backbone"] = std::string(backbone_name(m.backbone));
  j["backbone_output_dim"] = m.backbone_output_dim;
  j["projection_hidden_dim"] = m.projection_hidden_dim;
  j["projection_output_dim"] = m.projection_output_dim;
  j["input_size"] = m.input_size;
  return j;
}

Json to_json(const DetectorConfig& d) {
  Json j;
  j["smoothing_window"] = d.smoothing_window;
  j["min_delta"] = d.min_delta ? Json(*d.min_delta) : Json(nullptr);
  j["min_delta_fraction"] = d.min_delta_fraction;
  j["patience"] = d.patience;
  j["warmup"] = d.warmup;
  j["early_stop"] = d.early_stop;
  return j;
}

Json to_json(const OnsetReport& r) {
  Json j;
  j["series"] = r.series_name;
  j["onset_epoch"] = r.onset_epoch ? Json(*r.onset_epoch) : Json(nullptr);
  j["fired_epoch"] = r.fired_epoch ? Json(*r.fired_epoch) : Json(nullptr);
  j["minimum_value"] = std::isfinite(r.minimum_value) ? Json(r.minimum_value) : Json(nullptr);
  j["min_delta"] = r.min_delta;
  return j;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["dataset"] = to_json(c.dataset);
  j["model"] = to_json(c.model);
  j["loss"] = Json{{"temperature", c.loss.temperature}};
  j["augmentation"] = to_json(c.augmentation);
  j["batch_pairs"] = c.batch_pairs;
  j["learning_rate"] = c.learning_rate;
  j["max_epochs"] = c.max_epochs;
  j["run_seed"] = c.run_seed;
  j["detector"] = to_json(c.detector);
  j["checkpoint_every"] = c.checkpoint_every;
  j["output_dir"] = c.output_dir;
  j["deterministic"] = c.deterministic;
  return j;
}

namespace {

void read_model(ObjectReader& r, const Json& j, ModelSpec& m) {
  r.read_enum("backbone", m.backbone, parse_backbone);
  // A backbone switch without explicit dims picks that backbone's defaults.
  if (m.backbone == Backbone::TinyMlp) m = ModelSpec::tiny_mlp();
  read_count(r, "backbone_output_dim", j, m.backbone_output_dim);
  read_count(r, "projection_hidden_dim", j, m.projection_hidden_dim);
  read_count(r, "projection_output_dim", j, m.projection_output_dim);
  read_count(r, "input_size", j, m.input_size);
}

}  // namespace

ModelSpec model_spec_from_json(const Json& j) {
  ModelSpec m;
  ObjectReader r(j, "model");
  read_model(r, j, m);
  r.finish();
  return m;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  ObjectReader r(j, "");
  r.read_object("dataset", [&](ObjectReader& d, const Json& dj) {
    d.read_enum("source", c.dataset.source, parse_source);
    d.read("included_classes", c.dataset.included_classes);
    d.read("train_fraction", c.dataset.train_fraction);
    if (dj.contains("subset_size") && dj["subset_size"].is_number_integer() &&
        dj["subset_size"].get<long long>() < 0) {
      throw ConfigError("dataset.subset_size must be >= 0");
    }
    d.read_optional("subset_size", c.dataset.subset_size);
    d.read("root", c.dataset.root);
    read_count(d, "synthetic_count", dj, c.dataset.synthetic_count);
    d.read("synthetic_seed", c.dataset.synthetic_seed);
  });
  r.read_object("model", [&](ObjectReader& m, const Json& mj) { read_model(m, mj, c.model); });
  r.read_object("loss", [&](ObjectReader& l, const Json&) { l.read("temperature", c.loss.temperature); });
  r.read_object("augmentation", [&](ObjectReader& a, const Json& aj) {
    auto& aug = c.augmentation;
    a.read("pad_fraction", aug.pad_fraction);
    read_count(a, "crop_size", aj, aug.crop_size);
    a.read("hflip_prob", aug.hflip_prob);
    a.read_object("jitter", [&](ObjectReader& s, const Json&) {
      s.read("brightness", aug.jitter.brightness);
      s.read("contrast", aug.jitter.contrast);
      s.read("saturation", aug.jitter.saturation);
      s.read("hue", aug.jitter.hue);
    });
    a.read("jitter_prob", aug.jitter_prob);
    a.read("grayscale_prob", aug.grayscale_prob);
    a.read("blur_kernel_fraction", aug.blur_kernel_fraction);
    std::vector<double> sigma{aug.blur_sigma_min, aug.blur_sigma_max};
    a.read("blur_sigma_range", sigma);
    if (sigma.size() != 2) throw ConfigError("augmentation.blur_sigma_range must be [min, max]");
    aug.blur_sigma_min = sigma[0];
    aug.blur_sigma_max = sigma[1];
  });
  read_count(r, "batch_pairs", j, c.batch_pairs);
  r.read("learning_rate", c.learning_rate);
  r.read("max_epochs", c.max_epochs);
  r.read("run_seed", c.run_seed);
  r.read_object("detector", [&](ObjectReader& d, const Json& dj) {
    read_count(d, "smoothing_window", dj, c.detector.smoothing_window);
    d.read_optional("min_delta", c.detector.min_delta);
    d.read("min_delta_fraction", c.detector.min_delta_fraction);
    read_count(d, "patience", dj, c.detector.patience);
    read_count(d, "warmup", dj, c.detector.warmup);
    d.read("early_stop", c.detector.early_stop);
  });
  r.read("checkpoint_every", c.checkpoint_every);
  r.read("output_dir", c.output_dir);
  r.read("deterministic", c.deterministic);
  r.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file", path);
  Json j;
  try {
    j = Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config file", path);
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("error writing config file", path);
}

void apply_override(Json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  // The schema is the full serialised form of the current document.
  const Json schema = to_json(config_from_json(doc));
  const Json* node = &schema;
  Json* target = &doc;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (!node->is_object() || !node->contains(path[i])) {
      throw UsageError("unknown override key '" + key + "'");
    }
    node = &(*node)[path[i]];
    if (i + 1 < path.size()) {
      if (!target->contains(path[i])) (*target)[path[i]] = Json::object();
      target = &(*target)[path[i]];
    }
  }
  if (node->is_object()) throw UsageError("override key '" + key + "' names a section, not a value");
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  (*target)[path.back()] = value;
}

std::vector<std::string> validation_errors(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  collect_errors(errors, [&] { c.dataset.validate(); });
  collect_errors(errors, [&] { c.model.validate(); });
  collect_errors(errors, [&] { c.loss.validate(); });
  collect_errors(errors, [&] { c.augmentation.validate(); });
  collect_errors(errors, [&] { c.detector.validate(); });
  if (c.batch_pairs < 2) {
    errors.push_back("batch_pairs must be >= 2 for training (N = 1 gives an identically zero loss)");
  }
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    errors.push_back("learning_rate must be a positive finite number");
  }
  if (c.max_epochs < 1) errors.push_back("max_epochs must be >= 1");
  if (c.checkpoint_every < 0) errors.push_back("checkpoint_every must be >= 0");
  if (c.output_dir.empty()) errors.push_back("output_dir must be nonempty");
  if (c.augmentation.crop_size != c.model.input_size) {
    errors.push_back("augmentation.crop_size (" + std::to_string(c.augmentation.crop_size) +
                     ") must equal model.input_size (" + std::to_string(c.model.input_size) + ")");
  }
  if (c.model.backbone == Backbone::TinyMlp && c.dataset.source == DatasetSource::Cifar10 &&
      c.model.input_size > 32) {
    errors.push_back("model.input_size exceeds the cifar10 image size");
  }
  return errors;
}

void validate(const ExperimentConfig& cfg) {
  const auto errors = validation_errors(cfg);
  if (errors.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

std::string config_digest(const ExperimentConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) h = (h ^ ch) * 0x100000001b3ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(mix64(h)));
  return buf;
}

}  // namespace contrastlab
