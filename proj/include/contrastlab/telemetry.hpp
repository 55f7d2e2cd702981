#pragma once

#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace contrastlab {

enum class Split { Train, Val };

std::string_view split_name(Split s) noexcept;
Split parse_split(std::string_view name);

// One row of the metrics table.
struct EpochMetrics {
  int epoch = 0;
  Split split = Split::Train;
  double total_loss = 0.0;
  double positive_term = 0.0;
  double negative_term = 0.0;
  double wall_time_s = 0.0;

  bool operator==(const EpochMetrics&) const = default;
};

enum class MetricColumn { TotalLoss, PositiveTerm, NegativeTerm, WallTime };

std::string_view column_name(MetricColumn c) noexcept;
MetricColumn parse_column(std::string_view name);
double column_value(const EpochMetrics& row, MetricColumn c) noexcept;

// Exact header line of every metrics file.
inline constexpr std::string_view kMetricsHeader =
    "epoch,split,total_loss,positive_term,negative_term,wall_time_s";

// Decimal rendering with 17 significant digits; parses back to the same double.
std::string format_double(double value);

std::string format_row(const EpochMetrics& row);

// Append-only writer. A new file gets the header; an existing file must
// already start with it. Every append is flushed before returning.
class MetricsWriter {
 public:
  enum class Mode { Truncate, Append };

  explicit MetricsWriter(std::string path, Mode mode = Mode::Truncate);

  void append(const EpochMetrics& row);
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

// All rows in file order. Throws IoError when unreadable, ParseError (with
// the 1-based line number) on a bad header or row.
std::vector<EpochMetrics> read_metrics(const std::string& path);

struct SeriesPoint {
  int epoch;
  double value;

  bool operator==(const SeriesPoint&) const = default;
};

using Series = std::vector<SeriesPoint>;

// Rows of one split sorted by epoch. Throws DataIntegrityError on a repeated
// (epoch, split).
Series read_series(const std::string& path, Split split, MetricColumn column);
Series select_series(const std::vector<EpochMetrics>& rows, Split split, MetricColumn column);

}  // namespace contrastlab
