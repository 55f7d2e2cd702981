#include "contrastlab/telemetry.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "contrastlab/errors.hpp"

namespace contrastlab {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, const char* column) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ParseError("line " + std::to_string(line) + ": cannot parse " + column + " from '" +
                         std::string(text) + "'",
                     line);
  }
  return value;
}

}  // namespace

std::string_view split_name(Split s) noexcept { return s == Split::Train ? "train" : "val"; }

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  throw InvalidArgument("split must be train or val, got '" + std::string(name) + "'");
}

std::string_view column_name(MetricColumn c) noexcept {
  switch (c) {
    case MetricColumn::TotalLoss: return "total_loss";
    case MetricColumn::PositiveTerm: return "positive_term";
    case MetricColumn::NegativeTerm: return "negative_term";
    case MetricColumn::WallTime: return "wall_time_s";
  }
  return "";
}

MetricColumn parse_column(std::string_view name) {
  for (auto c : {MetricColumn::TotalLoss, MetricColumn::PositiveTerm, MetricColumn::NegativeTerm,
                 MetricColumn::WallTime}) {
    if (column_name(c) == name) return c;
  }
  throw InvalidArgument("unknown metrics column '" + std::string(name) + "'");
}

double column_value(const EpochMetrics& row, MetricColumn c) noexcept {
  switch (c) {
    case MetricColumn::TotalLoss: return row.total_loss;
    case MetricColumn::PositiveTerm: return row.positive_term;
    case MetricColumn::NegativeTerm: return row.negative_term;
    case MetricColumn::WallTime: return row.wall_time_s;
  }
  return 0.0;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

std::string format_row(const EpochMetrics& row) {
  std::string out = std::to_string(row.epoch);
  out += ',';
  out += split_name(row.split);
  for (double v : {row.total_loss, row.positive_term, row.negative_term, row.wall_time_s}) {
    out += ',';
    out += format_double(v);
  }
  return out;
}

MetricsWriter::MetricsWriter(std::string path, Mode mode) : path_(std::move(path)) {
  bool write_header = true;
  if (mode == Mode::Append) {
    std::ifstream in(path_);
    std::string first;
    if (in && std::getline(in, first)) {
      if (!first.empty() && first.back() == '\r') first.pop_back();
      if (first != kMetricsHeader) {
        throw ParseError("metrics file header does not match schema: " + path_, 1);
      }
      write_header = false;
    }
  }
  out_.open(path_, mode == Mode::Append ? std::ios::app : std::ios::trunc);
  if (!out_) throw IoError("cannot open metrics file for writing", path_);
  if (write_header) {
    out_ << kMetricsHeader << '\n';
    out_.flush();
    if (!out_) throw IoError("cannot write metrics header", path_);
  }
}

void MetricsWriter::append(const EpochMetrics& row) {
  if (row.epoch < 0) throw InvalidArgument("metrics row epoch must be >= 0");
  out_ << format_row(row) << '\n';
  out_.flush();
  if (!out_) throw IoError("failed to append metrics row", path_);
}

std::vector<EpochMetrics> read_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open metrics file", path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<EpochMetrics> rows;
  std::size_t line_no = 0, pos = 0;
  bool header_seen = false;
  // An unterminated final line is an in-flight append and is not returned.
  while (true) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kMetricsHeader) throw ParseError("line 1: header does not match metrics schema", 1);
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 6) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 6 fields, got " + std::to_string(f.size()),
                       line_no);
    }
    EpochMetrics row;
    row.epoch = parse_number<int>(f[0], line_no, "epoch");
    if (f[1] == "train") {
      row.split = Split::Train;
    } else if (f[1] == "val") {
      row.split = Split::Val;
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": unknown split '" + std::string(f[1]) + "'", line_no);
    }
    row.total_loss = parse_number<double>(f[2], line_no, "total_loss");
    row.positive_term = parse_number<double>(f[3], line_no, "positive_term");
    row.negative_term = parse_number<double>(f[4], line_no, "negative_term");
    row.wall_time_s = parse_number<double>(f[5], line_no, "wall_time_s");
    rows.push_back(row);
  }
  if (!header_seen) throw ParseError("metrics file is empty or has no header: " + path, 1);
  return rows;
}

Series select_series(const std::vector<EpochMetrics>& rows, Split split, MetricColumn column) {
  std::map<int, double> by_epoch;
  for (const auto& row : rows) {
    if (row.split != split) continue;
    if (!by_epoch.emplace(row.epoch, column_value(row, column)).second) {
      throw DataIntegrityError("duplicate metrics row for epoch " + std::to_string(row.epoch) + " split " +
                               std::string(split_name(split)));
    }
  }
  Series out;
  out.reserve(by_epoch.size());
  for (auto [epoch, value] : by_epoch) out.push_back({epoch, value});
  return out;
}

Series read_series(const std::string& path, Split split, MetricColumn column) {
  return select_series(read_metrics(path), split, column);
}

}  // namespace contrastlab
