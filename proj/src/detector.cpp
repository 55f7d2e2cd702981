#include "contrastlab/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "contrastlab/errors.hpp"

namespace contrastlab {

void DetectorConfig::validate() const {
  if (smoothing_window < 1) throw ConfigError("detector.smoothing_window must be >= 1");
  if (patience < 1) throw ConfigError("detector.patience must be >= 1");
  if (min_delta && !(*min_delta >= 0.0)) throw ConfigError("detector.min_delta must be >= 0");
  if (!(min_delta_fraction >= 0.0)) throw ConfigError("detector.min_delta_fraction must be >= 0");
}

std::vector<double> centered_moving_average(const std::vector<double>& values, std::size_t window) {
  const std::size_t n = values.size();
  const std::size_t half = window > 0 ? (window - 1) / 2 : 0;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + values[i];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = std::min({half, i, n - 1 - i});
    if (h == 0) {
      out[i] = values[i];
    } else {
      out[i] = (prefix[i + h + 1] - prefix[i - h]) / static_cast<double>(2 * h + 1);
    }
  }
  return out;
}

OnsetReport detect_onset(const Series& series, const DetectorConfig& cfg, std::string series_name) {
  cfg.validate();
  if (series.empty()) throw InvalidArgument("detect_onset: empty series");
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].epoch <= series[i - 1].epoch) {
      throw DataIntegrityError("detect_onset: epochs not strictly increasing at epoch " +
                               std::to_string(series[i].epoch));
    }
  }
  std::vector<double> raw;
  raw.reserve(series.size());
  for (const auto& p : series) raw.push_back(p.value);
  const std::vector<double> smooth = centered_moving_average(raw, cfg.smoothing_window);

  OnsetReport report;
  report.series_name = std::move(series_name);
  if (cfg.min_delta) {
    report.min_delta = *cfg.min_delta;
  } else {
    const auto [lo, hi] = std::minmax_element(smooth.begin(), smooth.end());
    report.min_delta = cfg.min_delta_fraction * (*hi - *lo);
  }

  double running_min = std::numeric_limits<double>::quiet_NaN();
  std::size_t min_at = 0;
  std::size_t streak = 0;
  for (std::size_t i = cfg.warmup; i < smooth.size(); ++i) {
    const double v = smooth[i];
    if (std::isnan(running_min) || v < running_min) {
      running_min = v;
      min_at = i;
      streak = 0;
      continue;
    }
    if (v - running_min > report.min_delta) {
      if (++streak == cfg.patience) {
        report.onset_epoch = series[min_at].epoch;
        report.fired_epoch = series[i].epoch;
        break;
      }
    } else {
      streak = 0;
    }
  }
  report.minimum_value = running_min;
  return report;
}

std::string_view order_name(OnsetOrder o) noexcept {
  switch (o) {
    case OnsetOrder::Earlier: return "earlier";
    case OnsetOrder::Later: return "later";
    case OnsetOrder::Equal: return "equal";
    case OnsetOrder::Incomparable: return "incomparable";
  }
  return "incomparable";
}

OnsetOrder compare_onsets(const OnsetReport& positive, const OnsetReport& total) {
  if (!positive.onset_epoch || !total.onset_epoch) return OnsetOrder::Incomparable;
  if (*positive.onset_epoch < *total.onset_epoch) return OnsetOrder::Earlier;
  if (*positive.onset_epoch > *total.onset_epoch) return OnsetOrder::Later;
  return OnsetOrder::Equal;
}

}  // namespace contrastlab
