#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mobisec/attacks.hpp"
#include "mobisec/baseline.hpp"
#include "mobisec/cdr.hpp"
#include "mobisec/detector.hpp"
#include "mobisec/features.hpp"
#include "mobisec/rrc.hpp"
#include "mobisec/workload.hpp"

namespace mobisec {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kEnvPrefix = "MOBISEC_";

struct WindowConfig {
  std::uint64_t short_ms = 1000;
  std::uint64_t long_ms = 600'000;

  std::uint64_t width(Scale s) const { return s == Scale::SHORT ? short_ms : long_ms; }
  void validate() const;
  bool operator==(const WindowConfig&) const = default;
};

struct DetectorConfig {
  CusumParams cusum;
  BayesParams bayes;
  FusionParams fusion;
  UserScoreParams user;
  CalibrationParams calibration;
  // LONG windows of attack-free prefix used to calibrate inline when no
  // baseline file is given.
  std::size_t prefix_windows = 100;
  Scale detection_scale = Scale::LONG;
  bool user_scoring = true;
  std::optional<std::string> baseline_path;
  std::optional<std::string> model_path;

  void validate() const;
  bool operator==(const DetectorConfig&) const = default;
};

void to_json(json& j, const WindowConfig& w);
void from_json(const json& j, WindowConfig& w);
void to_json(json& j, const DetectorConfig& d);
void from_json(const json& j, DetectorConfig& d);

// Applies a TUNE patch (JSON merge patch over the cusum, bayes, fusion and
// user sections). Any other key is rejected.
DetectorConfig apply_detector_patch(const DetectorConfig& base, const json& patch);

struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::uint64_t duration_ms = 24 * kHourMs;
  std::uint64_t population = 10'000;
  bool labeled = true;
  UeProfile profile;
  DiurnalCurve diurnal;
  std::optional<std::string> profiles_csv;
  RrcParams rrc;
  Tariff tariff;
  double service_rate_per_s = 400.0;
  std::vector<AttackSpec> attacks;
  DetectorConfig detector;
  WindowConfig windows;
  std::string sim_epoch = "2026-01-01T00:00:00Z";
  std::optional<Salt> salt;  // derived from the seed when absent
  double speed = 60.0;       // live runs: simulated ms per wall-clock ms

  void validate() const;
  Salt effective_salt() const;
  bool operator==(const ScenarioConfig&) const = default;
};

void to_json(json& j, const ScenarioConfig& c);
void from_json(const json& j, ScenarioConfig& c);

ScenarioConfig load_config(const std::filesystem::path& path);

// Applies MOBISEC_SEED, MOBISEC_DURATION_MS, MOBISEC_POPULATION,
// MOBISEC_LABELED and MOBISEC_SPEED from `env` (name -> value).
void apply_env_overrides(ScenarioConfig& cfg, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> process_env();

// SHA-256 of the canonical JSON form.
std::string config_hash(const ScenarioConfig& cfg);

// Milliseconds since the Unix epoch for an ISO-8601 UTC timestamp
// (YYYY-MM-DDTHH:MM:SS[.fff][Z]). Throws ValidationError.
std::int64_t parse_iso8601_ms(std::string_view s);
std::string format_iso8601_ms(std::int64_t unix_ms);

}  // namespace mobisec
