#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "contrastlab/detector.hpp"
#include "contrastlab/errors.hpp"

using namespace contrastlab;

namespace {

Series make_series(int first, int last, const std::function<double(int)>& f) {
  Series s;
  for (int e = first; e <= last; ++e) s.push_back({e, f(e)});
  return s;
}

Series v_curve() {
  return make_series(1, 200, [](int e) { return std::abs(e - 100) * 0.01; });
}

DetectorConfig v_config() {
  DetectorConfig cfg;
  cfg.smoothing_window = 1;
  cfg.min_delta = 0.02;
  cfg.patience = 5;
  cfg.warmup = 0;
  return cfg;
}

// Noisy parabola with its minimum at `turn`.
Series noisy_u(std::uint64_t seed, int turn) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, 0.02);
  return make_series(1, 300, [&](int e) { return 1.0 + 0.00003 * (e - turn) * (e - turn) + noise(gen); });
}

}  // namespace

TEST(Detector, VCurveHandEvaluated) {
  // Minimum 0 at epoch 100; value exceeds 0.02 first at 103 and stays
  // above it, so five consecutive epochs complete at 107.
  const auto r = detect_onset(v_curve(), v_config(), "v");
  ASSERT_TRUE(r.fired());
  EXPECT_EQ(*r.onset_epoch, 100);
  EXPECT_EQ(*r.fired_epoch, 107);
  EXPECT_EQ(r.minimum_value, 0.0);
  EXPECT_EQ(r.series_name, "v");
}

TEST(Detector, DecreasingAndConstantSeriesNeverFire) {
  const auto falling = make_series(1, 100, [](int e) { return 10.0 - 0.1 * e; });
  const auto flat = make_series(1, 100, [](int) { return 0.5; });
  for (std::size_t window : {1u, 5u, 11u}) {
    DetectorConfig cfg;
    cfg.smoothing_window = window;
    cfg.patience = 3;
    cfg.warmup = 0;
    EXPECT_FALSE(detect_onset(falling, cfg).fired());
    EXPECT_FALSE(detect_onset(flat, cfg).fired());
    cfg.min_delta = 1e-3;
    EXPECT_FALSE(detect_onset(falling, cfg).fired());
    EXPECT_FALSE(detect_onset(flat, cfg).fired());
  }
}

TEST(Detector, NonIncreasingWithPlateausNeverFires) {
  const auto steps = make_series(1, 120, [](int e) { return -std::floor(e / 10.0); });
  DetectorConfig cfg = v_config();
  cfg.min_delta = 0.0;
  EXPECT_FALSE(detect_onset(steps, cfg).fired());
}

TEST(Detector, ShiftInvariance) {
  for (double shift : {-3.0, 0.5, 100.0, 1024.0}) {
    const auto shifted = make_series(1, 200, [&](int e) { return std::abs(e - 100) * 0.01 + shift; });
    EXPECT_EQ(detect_onset(shifted, v_config()).onset_epoch, 100) << shift;
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Series base = noisy_u(seed, 150);
    DetectorConfig cfg;
    cfg.patience = 10;
    cfg.min_delta = 0.05;
    const auto ref = detect_onset(base, cfg);
    Series shifted = base;
    for (auto& p : shifted) p.value += 7.0;
    EXPECT_EQ(detect_onset(shifted, cfg).onset_epoch, ref.onset_epoch);
  }
}

TEST(Detector, ScaleInvarianceWithScaledDelta) {
  for (double c : {0.25, 2.0, 8.0}) {
    const auto scaled = make_series(1, 200, [&](int e) { return std::abs(e - 100) * 0.01 * c; });
    DetectorConfig cfg = v_config();
    cfg.min_delta = 0.025 * c;
    EXPECT_EQ(detect_onset(scaled, cfg).onset_epoch, 100) << c;
  }
}

TEST(Detector, WarmupNeverContainsOnset) {
  // Series whose global minimum lies inside the warmup window.
  const auto s = make_series(1, 100, [](int e) { return e < 10 ? 0.0 : std::abs(e - 40) * 0.01; });
  DetectorConfig cfg = v_config();
  cfg.warmup = 20;
  const auto r = detect_onset(s, cfg);
  ASSERT_TRUE(r.fired());
  EXPECT_GT(*r.onset_epoch, 20);
  EXPECT_EQ(*r.onset_epoch, 40);
  cfg.warmup = 100;
  EXPECT_FALSE(detect_onset(s, cfg).fired());
}

TEST(Detector, FiredAtLeastPatienceAfterOnset) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    DetectorConfig cfg;
    cfg.patience = 1 + seed % 7;
    const auto r = detect_onset(noisy_u(seed, 100 + static_cast<int>(seed)), cfg);
    EXPECT_EQ(r.onset_epoch.has_value(), r.fired_epoch.has_value());
    if (r.fired()) EXPECT_GE(*r.fired_epoch, *r.onset_epoch + static_cast<int>(cfg.patience));
  }
}

TEST(Detector, RelativeDeltaDefault) {
  DetectorConfig cfg;
  cfg.warmup = 0;
  cfg.smoothing_window = 1;
  cfg.patience = 5;
  const auto r = detect_onset(v_curve(), cfg);
  EXPECT_NEAR(r.min_delta, 0.01 * 1.0, 1e-12);  // range of |e - 100| * 0.01 is [0, 1]
  EXPECT_EQ(*r.onset_epoch, 100);
  EXPECT_EQ(*r.fired_epoch, 106);  // exceeds 0.01 first at 102
}

TEST(Detector, Deterministic) {
  const Series s = noisy_u(4, 120);
  const DetectorConfig cfg;
  const auto a = detect_onset(s, cfg), b = detect_onset(s, cfg);
  EXPECT_EQ(a.onset_epoch, b.onset_epoch);
  EXPECT_EQ(a.fired_epoch, b.fired_epoch);
  EXPECT_EQ(a.minimum_value, b.minimum_value);
}

TEST(Detector, GrowingSeriesIsIdempotent) {
  // Re-running on each prefix fires no earlier than the full-series run.
  const Series s = noisy_u(9, 100);
  DetectorConfig cfg;
  cfg.min_delta = 0.05;
  const auto full = detect_onset(s, cfg);
  ASSERT_TRUE(full.fired());
  for (std::size_t n = 1; n <= s.size(); ++n) {
    const auto partial = detect_onset(Series(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n)), cfg);
    const auto again = detect_onset(Series(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n)), cfg);
    EXPECT_EQ(partial.onset_epoch, again.onset_epoch);
    EXPECT_EQ(partial.fired_epoch, again.fired_epoch);
    if (partial.fired()) {
      EXPECT_LE(*partial.fired_epoch, s[n - 1].epoch);
      break;
    }
  }
}

TEST(Detector, Errors) {
  EXPECT_THROW(detect_onset({}, DetectorConfig{}), InvalidArgument);
  EXPECT_THROW(detect_onset({{1, 0.0}, {1, 1.0}}, DetectorConfig{}), DataIntegrityError);
  EXPECT_THROW(detect_onset({{2, 0.0}, {1, 1.0}}, DetectorConfig{}), DataIntegrityError);
  DetectorConfig bad;
  bad.patience = 0;
  EXPECT_THROW(detect_onset({{1, 0.0}}, bad), ConfigError);
}

TEST(MovingAverage, ShrinksSymmetricallyAtBoundaries) {
  const std::vector<double> x{1, 2, 3, 4, 10};
  const auto y = centered_moving_average(x, 5);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 2.0);
  EXPECT_DOUBLE_EQ(y[2], 4.0);
  EXPECT_DOUBLE_EQ(y[3], 17.0 / 3.0);
  EXPECT_DOUBLE_EQ(y[4], 10.0);
  EXPECT_EQ(centered_moving_average(x, 1), x);
}

TEST(CompareOnsets, Verdicts) {
  OnsetReport pos, total;
  pos.onset_epoch = 120;
  pos.fired_epoch = 150;
  total.onset_epoch = 500;
  total.fired_epoch = 530;
  EXPECT_EQ(compare_onsets(pos, total), OnsetOrder::Earlier);
  EXPECT_EQ(compare_onsets(total, pos), OnsetOrder::Later);
  total.onset_epoch = 120;
  EXPECT_EQ(compare_onsets(pos, total), OnsetOrder::Equal);
  pos.onset_epoch.reset();
  pos.fired_epoch.reset();
  EXPECT_EQ(compare_onsets(pos, total), OnsetOrder::Incomparable);
  EXPECT_EQ(order_name(OnsetOrder::Incomparable), "incomparable");
}
