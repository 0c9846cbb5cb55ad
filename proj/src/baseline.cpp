#include "mobisec/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mobisec/workload.hpp"

namespace mobisec {

const BucketStats& ScaleBaseline::for_window(SimTime window_start) const {
  const auto& h = hours[(window_start / kHourMs) % 24];
  return h ? *h : pooled;
}

const ScaleBaseline& BaselineModel::scale(Scale s) const {
  const auto& b = s == Scale::SHORT ? short_scale : long_scale;
  if (!b) throw ContractViolation("baseline has no " + std::string(to_string(s)) + " scale");
  return *b;
}

namespace {

struct Moments {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double msg_sum = 0.0;

  void add(double x, double msgs) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
    msg_sum += msgs;
  }
  double sample_sd() const { return n >= 2 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

}  // namespace

ScaleBaseline calibrate_scale(std::span<const WindowFeatures> windows, const CalibrationParams& params) {
  if (windows.empty()) throw ValidationError("calibrate: no windows");
  const Scale scale = windows.front().scale;
  if (windows.size() < params.min_windows) {
    throw ValidationError("calibrate: scale " + std::string(to_string(scale)) + " has " +
                          std::to_string(windows.size()) + " windows, need " + std::to_string(params.min_windows));
  }
  std::array<Moments, 24> by_hour;
  Moments all;
  for (const auto& w : windows) {
    if (w.scale != scale) throw ValidationError("calibrate_scale: mixed scales");
    const auto x = static_cast<double>(w.promotion_count);
    const auto m = static_cast<double>(w.msg_count);
    by_hour[(w.start / kHourMs) % 24].add(x, m);
    all.add(x, m);
  }

  // Within-hour deviation pooled over all hours that have >= 2 windows.
  double pooled_m2 = 0.0;
  std::uint64_t pooled_df = 0;
  for (const auto& h : by_hour) {
    if (h.n >= 2) {
      pooled_m2 += h.m2;
      pooled_df += h.n - 1;
    }
  }
  const double pooled_within = pooled_df > 0 ? std::sqrt(pooled_m2 / static_cast<double>(pooled_df)) : 0.0;

  ScaleBaseline out;
  out.scale = scale;
  out.width_ms = windows.front().width_ms;
  for (std::size_t h = 0; h < 24; ++h) {
    const auto& m = by_hour[h];
    if (m.n == 0) continue;
    BucketStats b;
    b.n = m.n;
    b.mu0 = m.mean;
    b.sigma0 = std::max({params.sigma_min, m.sample_sd(), pooled_within});
    b.lambda0 = std::max(params.lambda_min, m.msg_sum / static_cast<double>(m.n));
    out.hours[h] = b;
  }
  out.pooled.n = all.n;
  out.pooled.mu0 = all.mean;
  out.pooled.sigma0 = std::max({params.sigma_min, all.sample_sd(), pooled_within});
  out.pooled.lambda0 = std::max(params.lambda_min, all.msg_sum / static_cast<double>(all.n));
  return out;
}

BaselineModel calibrate(std::span<const WindowFeatures> windows, const CalibrationParams& params) {
  std::vector<WindowFeatures> short_w;
  std::vector<WindowFeatures> long_w;
  for (const auto& w : windows) (w.scale == Scale::SHORT ? short_w : long_w).push_back(w);
  if (short_w.empty() && long_w.empty()) throw ValidationError("calibrate: empty prefix");
  BaselineModel m;
  if (!short_w.empty()) m.short_scale = calibrate_scale(short_w, params);
  if (!long_w.empty()) m.long_scale = calibrate_scale(long_w, params);
  return m;
}

void to_json(json& j, const CalibrationParams& p) {
  j = json{{"min_windows", p.min_windows}, {"sigma_min", p.sigma_min}, {"lambda_min", p.lambda_min}};
}

void from_json(const json& j, CalibrationParams& p) {
  p.min_windows = j.value("min_windows", p.min_windows);
  p.sigma_min = j.value("sigma_min", p.sigma_min);
  p.lambda_min = j.value("lambda_min", p.lambda_min);
  if (p.min_windows < 1 || !(p.sigma_min > 0.0) || !(p.lambda_min > 0.0)) {
    throw ValidationError("calibration: need min_windows >= 1, sigma_min > 0, lambda_min > 0");
  }
}

namespace {

json bucket_json(const BucketStats& b) {
  return json{{"mu0", b.mu0}, {"sigma0", b.sigma0}, {"lambda0", b.lambda0}, {"n", b.n}};
}

BucketStats bucket_from(const json& j) {
  BucketStats b;
  b.mu0 = j.at("mu0").get<double>();
  b.sigma0 = j.at("sigma0").get<double>();
  b.lambda0 = j.at("lambda0").get<double>();
  b.n = j.at("n").get<std::uint64_t>();
  if (!(b.sigma0 > 0.0) || !(b.lambda0 > 0.0)) throw ValidationError("baseline: sigma0 and lambda0 must be > 0");
  return b;
}

}  // namespace

void to_json(json& j, const ScaleBaseline& b) {
  json hours = json::array();
  for (const auto& h : b.hours) hours.push_back(h ? bucket_json(*h) : json(nullptr));
  j = json{{"scale", b.scale}, {"width_ms", b.width_ms}, {"hours", hours}, {"pooled", bucket_json(b.pooled)}};
}

void from_json(const json& j, ScaleBaseline& b) {
  b.scale = j.at("scale").get<Scale>();
  b.width_ms = j.at("width_ms").get<std::uint64_t>();
  const auto& hours = j.at("hours");
  if (!hours.is_array() || hours.size() != 24) throw ValidationError("baseline: hours must have 24 entries");
  for (std::size_t h = 0; h < 24; ++h) {
    if (hours[h].is_null()) b.hours[h].reset();
    else b.hours[h] = bucket_from(hours[h]);
  }
  b.pooled = bucket_from(j.at("pooled"));
}

void to_json(json& j, const BaselineModel& m) {
  j = json{{"format", "mobisec-baseline"}, {"version", 1}};
  if (m.short_scale) j["short"] = *m.short_scale;
  if (m.long_scale) j["long"] = *m.long_scale;
  json users = json::object();
  for (const auto& [p, b] : m.users) users[p.hex()] = b;
  j["users"] = users;
}

void from_json(const json& j, BaselineModel& m) {
  if (j.value("format", std::string{}) != "mobisec-baseline" || j.value("version", 0) != 1) {
    throw ValidationError("baseline: unsupported format or version");
  }
  m = BaselineModel{};
  if (j.contains("short")) m.short_scale = j.at("short").get<ScaleBaseline>();
  if (j.contains("long")) m.long_scale = j.at("long").get<ScaleBaseline>();
  const json users = j.value("users", json::object());
  for (const auto& [k, v] : users.items()) m.users[Pseudonym::from_hex(k)] = v.get<UserBaseline>();
}

}  // namespace mobisec
