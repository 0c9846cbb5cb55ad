#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mobisec/detector.hpp"
#include "mobisec/features.hpp"

namespace mobisec {

struct CalibrationParams {
  std::size_t min_windows = 100;
  double sigma_min = 1.0;
  double lambda_min = 1.0;
  bool operator==(const CalibrationParams&) const = default;
};

struct BucketStats {
  double mu0 = 0.0;      // mean promotion count
  double sigma0 = 1.0;   // its standard deviation, floored
  double lambda0 = 1.0;  // mean message count (Poisson rate per window)
  std::uint64_t n = 0;   // windows behind the estimate
  bool operator==(const BucketStats&) const = default;
};

// Normal-behaviour statistics for one window scale, bucketed by hour of day.
struct ScaleBaseline {
  Scale scale = Scale::LONG;
  std::uint64_t width_ms = 0;
  std::array<std::optional<BucketStats>, 24> hours;
  BucketStats pooled;

  // Hour bucket of the window, or the pooled statistics if that hour was
  // never observed during calibration.
  const BucketStats& for_window(SimTime window_start) const;
  bool operator==(const ScaleBaseline&) const = default;
};

struct BaselineModel {
  std::optional<ScaleBaseline> short_scale;
  std::optional<ScaleBaseline> long_scale;
  std::map<Pseudonym, UserBaseline> users;

  const ScaleBaseline& scale(Scale s) const;
  bool operator==(const BaselineModel&) const = default;
};

// Calibrates one scale. sigma0 for each hour is the largest of the hour's own
// sample deviation, the pooled within-hour deviation and sigma_min; lambda0 is
// floored at lambda_min. Throws ValidationError if fewer than min_windows
// windows are given, naming the scale.
ScaleBaseline calibrate_scale(std::span<const WindowFeatures> windows, const CalibrationParams& params);

// Calibrates every scale present in the stream. Each scale present must meet
// min_windows, and at least one must be present.
BaselineModel calibrate(std::span<const WindowFeatures> windows, const CalibrationParams& params);

void to_json(json& j, const CalibrationParams& p);
void from_json(const json& j, CalibrationParams& p);
void to_json(json& j, const ScaleBaseline& b);
void from_json(const json& j, ScaleBaseline& b);
void to_json(json& j, const BaselineModel& m);
void from_json(const json& j, BaselineModel& m);

}  // namespace mobisec
