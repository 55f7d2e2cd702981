#include "contrastlab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "contrastlab/errors.hpp"

namespace fs = std::filesystem;

namespace contrastlab {

namespace {

constexpr double kPanelWidth = 720, kPanelHeight = 300;
constexpr double kLeft = 70, kRight = 20, kTop = 36, kBottom = 40;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

struct Line {
  std::string name;
  Series points;
};

struct Marker {
  int epoch;
  std::string label;
};

struct Panel {
  std::string title;
  std::string y_label;
  std::vector<Line> lines;
  std::vector<std::pair<double, std::string>> horizontal;  // value, label
  std::vector<Marker> markers;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Roughly five round tick values covering [lo, hi].
std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  return out;
}

void draw_panel(std::ostream& svg, const Panel& panel, double y0) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& line : panel.lines) {
    for (const auto& p : line.points) {
      xmin = std::min(xmin, double(p.epoch));
      xmax = std::max(xmax, double(p.epoch));
      ymin = std::min(ymin, p.value);
      ymax = std::max(ymax, p.value);
    }
  }
  for (const auto& [v, label] : panel.horizontal) {
    ymin = std::min(ymin, v);
    ymax = std::max(ymax, v);
  }
  const double px0 = kLeft, px1 = kPanelWidth - kRight;
  const double py0 = y0 + kTop, py1 = y0 + kPanelHeight - kBottom;
  svg << "<text x=\"" << kPanelWidth / 2 << "\" y=\"" << y0 + 22
      << "\" text-anchor=\"middle\" font-size=\"15\">" << escape(panel.title) << "</text>\n";
  svg << "<rect x=\"" << px0 << "\" y=\"" << py0 << "\" width=\"" << px1 - px0 << "\" height=\"" << py1 - py0
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  if (panel.lines.empty() || xmin > xmax) {
    svg << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << (py0 + py1) / 2
        << "\" text-anchor=\"middle\" fill=\"#888\">no data</text>\n";
    return;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const auto sx = [&](double x) { return px0 + (x - xmin) / (xmax - xmin) * (px1 - px0); };
  const auto sy = [&](double y) { return py1 - (y - ymin) / (ymax - ymin) * (py1 - py0); };

  for (double t : ticks(ymin, ymax)) {
    svg << "<line x1=\"" << px0 - 4 << "\" x2=\"" << px0 << "\" y1=\"" << sy(t) << "\" y2=\"" << sy(t)
        << "\" stroke=\"#444\"/><text x=\"" << px0 - 7 << "\" y=\"" << sy(t) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << num(t) << "</text>\n";
  }
  for (double t : ticks(xmin, xmax)) {
    svg << "<line x1=\"" << sx(t) << "\" x2=\"" << sx(t) << "\" y1=\"" << py1 << "\" y2=\"" << py1 + 4
        << "\" stroke=\"#444\"/><text x=\"" << sx(t) << "\" y=\"" << py1 + 17
        << "\" text-anchor=\"middle\" font-size=\"11\">" << num(t) << "</text>\n";
  }
  svg << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << py1 + 34
      << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";
  svg << "<text transform=\"translate(16," << (py0 + py1) / 2
      << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << escape(panel.y_label) << "</text>\n";

  for (const auto& [v, label] : panel.horizontal) {
    svg << "<line x1=\"" << px0 << "\" x2=\"" << px1 << "\" y1=\"" << sy(v) << "\" y2=\"" << sy(v)
        << "\" stroke=\"#555\" stroke-dasharray=\"6,4\"><title>" << escape(label) << "</title></line>\n";
  }
  for (const auto& m : panel.markers) {
    svg << "<line x1=\"" << sx(m.epoch) << "\" x2=\"" << sx(m.epoch) << "\" y1=\"" << py0 << "\" y2=\"" << py1
        << "\" stroke=\"#ff7f0e\" stroke-dasharray=\"3,3\"/><text x=\"" << sx(m.epoch) + 4 << "\" y=\""
        << py0 + 14 << "\" font-size=\"11\" fill=\"#ff7f0e\">" << escape(m.label) << "</text>\n";
  }
  for (std::size_t i = 0; i < panel.lines.size(); ++i) {
    const char* colour = kPalette[i % 4];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : panel.lines[i].points) svg << num(sx(p.epoch)) << ',' << num(sy(p.value)) << ' ';
    svg << "\"/>\n";
    const double ly = py0 + 16 + 16 * static_cast<double>(i);
    svg << "<line x1=\"" << px1 - 150 << "\" x2=\"" << px1 - 130 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4
        << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/><text x=\"" << px1 - 125 << "\" y=\"" << ly
        << "\" font-size=\"11\">" << escape(panel.lines[i].name) << "</text>\n";
  }
}

void write_svg(const fs::path& path, const std::vector<Panel>& panels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write plot", path.string());
  const double height = kPanelHeight * static_cast<double>(panels.size());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kPanelWidth << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << kPanelWidth << ' ' << height << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) draw_panel(out, panels[i], kPanelHeight * static_cast<double>(i));
  out << "</svg>\n";
  if (!out.flush()) throw IoError("error writing plot", path.string());
}

struct Figures {
  std::vector<Panel> loss;
  std::vector<Panel> terms;
  std::vector<std::string> warnings;
};

std::optional<Marker> onset_marker(const Series& s, const DetectorConfig& cfg, const std::string& name) {
  if (s.empty()) return std::nullopt;
  const OnsetReport r = detect_onset(s, cfg, name);
  if (!r.onset_epoch) return std::nullopt;
  return Marker{*r.onset_epoch, name + " onset"};
}

Figures build(const std::vector<EpochMetrics>& rows, const DetectorConfig& cfg) {
  if (rows.empty()) throw DataIntegrityError("no metrics rows to plot");
  const Series train_total = select_series(rows, Split::Train, MetricColumn::TotalLoss);
  const Series val_total = select_series(rows, Split::Val, MetricColumn::TotalLoss);
  const Series val_pos = select_series(rows, Split::Val, MetricColumn::PositiveTerm);
  const Series val_neg = select_series(rows, Split::Val, MetricColumn::NegativeTerm);

  Figures f;
  Panel loss{"Total loss", "loss", {}, {}, {}};
  if (!train_total.empty()) loss.lines.push_back({"train.total_loss", train_total});
  if (!val_total.empty()) {
    loss.lines.push_back({"val.total_loss", val_total});
    const auto lowest = std::min_element(val_total.begin(), val_total.end(),
                                         [](const auto& a, const auto& b) { return a.value < b.value; });
    loss.horizontal.emplace_back(lowest->value, "val.total_loss minimum");
    if (auto m = onset_marker(val_total, cfg, "val.total_loss")) loss.markers.push_back(*m);
  }
  if (train_total.empty()) f.warnings.push_back("metrics contain no train rows; figure shows validation only");
  if (val_total.empty()) f.warnings.push_back("metrics contain no val rows; figure shows train only");
  f.loss.push_back(std::move(loss));

  Panel pos{"Validation positive term", "positive term", {}, {}, {}};
  Panel neg{"Validation negative term", "negative term", {}, {}, {}};
  if (!val_pos.empty()) {
    pos.lines.push_back({"val.positive_term", val_pos});
    neg.lines.push_back({"val.negative_term", val_neg});
    if (auto m = onset_marker(val_pos, cfg, "val.positive_term")) pos.markers.push_back(*m);
    if (auto m = onset_marker(val_neg, cfg, "val.negative_term")) neg.markers.push_back(*m);
  }
  f.terms.push_back(std::move(pos));
  f.terms.push_back(std::move(neg));
  return f;
}

Json describe(const std::vector<Panel>& panels, const std::string& file) {
  Json out{{"file", file}, {"panels", Json::array()}};
  for (const auto& p : panels) {
    Json panel{{"title", p.title}, {"series", Json::array()}, {"reference_lines", Json::array()},
               {"markers", Json::array()}};
    for (const auto& line : p.lines) {
      panel["series"].push_back({{"name", line.name},
                                 {"points", line.points.size()},
                                 {"first_epoch", line.points.front().epoch},
                                 {"last_epoch", line.points.back().epoch}});
    }
    for (const auto& [v, label] : p.horizontal) {
      panel["reference_lines"].push_back({{"orientation", "horizontal"}, {"value", v}, {"label", label}});
    }
    for (const auto& m : p.markers) {
      panel["markers"].push_back({{"orientation", "vertical"}, {"epoch", m.epoch}, {"label", m.label}});
    }
    out["panels"].push_back(std::move(panel));
  }
  return out;
}

Json describe_all(const Figures& f, const std::string& loss_file, const std::string& terms_file) {
  return Json{{"figures", Json::array({describe(f.loss, loss_file), describe(f.terms, terms_file)})},
              {"warnings", f.warnings}};
}

}  // namespace

Json plot_description(const std::vector<EpochMetrics>& rows, const DetectorConfig& detector,
                      std::vector<std::string>* warnings) {
  const Figures f = build(rows, detector);
  if (warnings) *warnings = f.warnings;
  return describe_all(f, "loss.svg", "terms.svg");
}

PlotFiles plot_metrics(const std::vector<EpochMetrics>& rows, const std::string& output_base,
                       const DetectorConfig& detector) {
  const Figures f = build(rows, detector);
  PlotFiles files;
  files.loss_figure = output_base + "_loss.svg";
  files.terms_figure = output_base + "_terms.svg";
  files.sidecar = output_base + "_plots.json";
  files.warnings = f.warnings;
  const fs::path parent = fs::path(output_base).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
  }
  write_svg(files.loss_figure, f.loss);
  write_svg(files.terms_figure, f.terms);
  std::ofstream out(files.sidecar, std::ios::trunc);
  if (!out) throw IoError("cannot write plot sidecar", files.sidecar);
  out << describe_all(f, fs::path(files.loss_figure).filename().string(),
                      fs::path(files.terms_figure).filename().string())
             .dump(2)
      << '\n';
  if (!out.flush()) throw IoError("error writing plot sidecar", files.sidecar);
  return files;
}

}  // namespace contrastlab
