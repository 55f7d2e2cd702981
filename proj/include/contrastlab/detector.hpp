#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "contrastlab/telemetry.hpp"

namespace contrastlab {

struct DetectorConfig {
  // Width of the centred moving average; 1 disables smoothing. Even widths
  // use the next smaller odd width.
  std::size_t smoothing_window = 11;
  // Absolute rise above the running minimum that counts as overfitting.
  // When unset, min_delta_fraction times the smoothed series range is used.
  std::optional<double> min_delta;
  double min_delta_fraction = 0.01;
  std::size_t patience = 25;
  // Leading points of the series that never update the running minimum.
  std::size_t warmup = 20;
  // Trainer only: stop the run when the monitored series fires.
  bool early_stop = false;

  void validate() const;
};

struct OnsetReport {
  std::string series_name;
  std::optional<int> onset_epoch;  // epoch of the running minimum before the sustained rise
  std::optional<int> fired_epoch;  // epoch at which the rise had lasted `patience` epochs
  double minimum_value = 0.0;      // smoothed running minimum (at onset when fired)
  double min_delta = 0.0;          // the threshold actually applied

  bool fired() const noexcept { return fired_epoch.has_value(); }
};

// Centred moving average, the window shrinking symmetrically at the ends.
std::vector<double> centered_moving_average(const std::vector<double>& values, std::size_t window);

// Running-minimum onset rule. Throws InvalidArgument for an empty series and
// DataIntegrityError for epochs that are not strictly increasing.
OnsetReport detect_onset(const Series& series, const DetectorConfig& cfg, std::string series_name = {});

enum class OnsetOrder { Earlier, Later, Equal, Incomparable };

std::string_view order_name(OnsetOrder o) noexcept;

// Position of the positive-term onset relative to the total-loss onset.
OnsetOrder compare_onsets(const OnsetReport& positive, const OnsetReport& total);

}  // namespace contrastlab
