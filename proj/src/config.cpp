#include "mobisec/config.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "mobisec/crypto.hpp"

extern char** environ;

namespace mobisec {

void WindowConfig::validate() const {
  if (short_ms == 0 || long_ms == 0) throw ValidationError("windows: widths must be > 0");
  if (long_ms % short_ms != 0) throw ValidationError("windows: long_ms must be a multiple of short_ms");
  if (kHourMs % long_ms != 0 && long_ms % kHourMs != 0) {
    throw ValidationError("windows: long_ms must divide an hour or be a whole number of hours");
  }
}

void to_json(json& j, const WindowConfig& w) { j = json{{"short_ms", w.short_ms}, {"long_ms", w.long_ms}}; }
void from_json(const json& j, WindowConfig& w) {
  w = WindowConfig{};
  w.short_ms = j.value("short_ms", w.short_ms);
  w.long_ms = j.value("long_ms", w.long_ms);
  w.validate();
}

void DetectorConfig::validate() const {
  if (!(cusum.k >= 0.0) || !(cusum.h > 0.0)) throw ValidationError("detector: cusum needs k >= 0, h > 0");
  if (!(bayes.rho > 1.0) || !(bayes.h_llr > 0.0)) throw ValidationError("detector: bayes needs rho > 1, h_llr > 0");
  if (fusion.w_c < 0.0 || fusion.w_b < 0.0) throw ValidationError("detector: fusion weights must be >= 0");
  if (!(user.decay > 0.0 && user.decay < 1.0) || !(user.dev_floor > 0.0)) {
    throw ValidationError("detector: user scoring needs 0 < decay < 1, dev_floor > 0");
  }
  if (!baseline_path && prefix_windows == 0) {
    throw ValidationError("detector: need prefix_windows > 0 or a baseline_path");
  }
  if (!baseline_path && prefix_windows < calibration.min_windows) {
    throw ValidationError("detector: prefix_windows is below calibration.min_windows");
  }
}

void to_json(json& j, const DetectorConfig& d) {
  j = json{{"cusum", d.cusum},
           {"bayes", d.bayes},
           {"fusion", d.fusion},
           {"user", d.user},
           {"calibration", d.calibration},
           {"prefix_windows", d.prefix_windows},
           {"detection_scale", d.detection_scale},
           {"user_scoring", d.user_scoring}};
  if (d.baseline_path) j["baseline_path"] = *d.baseline_path;
  if (d.model_path) j["model_path"] = *d.model_path;
}

void from_json(const json& j, DetectorConfig& d) {
  d = DetectorConfig{};
  if (j.contains("cusum")) d.cusum = j.at("cusum").get<CusumParams>();
  if (j.contains("bayes")) d.bayes = j.at("bayes").get<BayesParams>();
  if (j.contains("fusion")) d.fusion = j.at("fusion").get<FusionParams>();
  if (j.contains("user")) d.user = j.at("user").get<UserScoreParams>();
  if (j.contains("calibration")) d.calibration = j.at("calibration").get<CalibrationParams>();
  d.prefix_windows = j.value("prefix_windows", d.prefix_windows);
  if (j.contains("detection_scale")) d.detection_scale = j.at("detection_scale").get<Scale>();
  d.user_scoring = j.value("user_scoring", d.user_scoring);
  if (j.contains("baseline_path")) d.baseline_path = j.at("baseline_path").get<std::string>();
  if (j.contains("model_path")) d.model_path = j.at("model_path").get<std::string>();
  d.validate();
}

DetectorConfig apply_detector_patch(const DetectorConfig& base, const json& patch) {
  if (!patch.is_object() || patch.empty()) throw ValidationError("tune: patch must be a non-empty object");
  for (const auto& [key, _] : patch.items()) {
    if (key != "cusum" && key != "bayes" && key != "fusion" && key != "user") {
      throw ValidationError("tune: '" + key + "' cannot be changed during a run");
    }
  }
  json j = base;
  j.merge_patch(patch);
  return j.get<DetectorConfig>();
}

void ScenarioConfig::validate() const {
  if (duration_ms == 0 && !attacks.empty()) throw ValidationError("scenario: attacks need a positive duration");
  if (population < 1) throw ValidationError("scenario: population must be >= 1");
  profile.validate();
  diurnal.validate();
  rrc.validate();
  tariff.validate();
  if (!(service_rate_per_s > 0.0)) throw ValidationError("scenario: service_rate_per_s must be > 0");
  windows.validate();
  detector.validate();
  if (!(speed > 0.0)) throw ValidationError("scenario: speed must be > 0");
  parse_iso8601_ms(sim_epoch);
  const SimTime prefix_end =
      detector.baseline_path ? 0 : static_cast<SimTime>(detector.prefix_windows) * windows.long_ms;
  for (const auto& a : attacks) {
    a.validate(population);
    if (a.stop > duration_ms) throw ValidationError("scenario: attack stops after the run ends");
    if (a.start < prefix_end) throw ValidationError("scenario: attack overlaps the calibration prefix");
  }
}

Salt ScenarioConfig::effective_salt() const {
  if (salt) return *salt;
  Salt s{};
  const auto a = derive_seed(seed, StreamTag::kSalt, 0);
  const auto b = derive_seed(seed, StreamTag::kSalt, 1);
  for (int i = 0; i < 8; ++i) {
    s[i] = static_cast<std::uint8_t>(a >> (8 * i));
    s[8 + i] = static_cast<std::uint8_t>(b >> (8 * i));
  }
  return s;
}

void to_json(json& j, const ScenarioConfig& c) {
  j = json{{"schema_version", kConfigSchemaVersion},
           {"seed", c.seed},
           {"duration_ms", c.duration_ms},
           {"population", c.population},
           {"labeled", c.labeled},
           {"profile", c.profile},
           {"diurnal", c.diurnal},
           {"rrc", c.rrc},
           {"tariff", c.tariff},
           {"queue", {{"service_rate_per_s", c.service_rate_per_s}}},
           {"attacks", c.attacks},
           {"detector", c.detector},
           {"windows", c.windows},
           {"sim_epoch", c.sim_epoch},
           {"speed", c.speed}};
  if (c.profiles_csv) j["profiles_csv"] = *c.profiles_csv;
  if (c.salt) j["salt"] = salt_to_hex(*c.salt);
}

void from_json(const json& j, ScenarioConfig& c) {
  if (!j.is_object()) throw ValidationError("scenario: expected a JSON object");
  const int version = j.value("schema_version", kConfigSchemaVersion);
  if (version != kConfigSchemaVersion) {
    throw ValidationError("scenario: unsupported schema_version " + std::to_string(version));
  }
  try {
    c = ScenarioConfig{};
    c.seed = j.value("seed", c.seed);
    c.duration_ms = j.value("duration_ms", c.duration_ms);
    c.population = j.value("population", c.population);
    c.labeled = j.value("labeled", c.labeled);
    if (j.contains("profile")) c.profile = j.at("profile").get<UeProfile>();
    if (j.contains("diurnal")) c.diurnal = j.at("diurnal").get<DiurnalCurve>();
    if (j.contains("profiles_csv")) c.profiles_csv = j.at("profiles_csv").get<std::string>();
    if (j.contains("rrc")) c.rrc = j.at("rrc").get<RrcParams>();
    if (j.contains("tariff")) c.tariff = j.at("tariff").get<Tariff>();
    if (j.contains("queue")) c.service_rate_per_s = j.at("queue").value("service_rate_per_s", c.service_rate_per_s);
    if (j.contains("attacks")) c.attacks = j.at("attacks").get<std::vector<AttackSpec>>();
    if (j.contains("detector")) c.detector = j.at("detector").get<DetectorConfig>();
    if (j.contains("windows")) c.windows = j.at("windows").get<WindowConfig>();
    c.sim_epoch = j.value("sim_epoch", c.sim_epoch);
    if (j.contains("salt")) c.salt = salt_from_hex(j.at("salt").get<std::string>());
    c.speed = j.value("speed", c.speed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
  c.validate();
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  auto cfg = j.get<ScenarioConfig>();
  if (cfg.profiles_csv && std::filesystem::path(*cfg.profiles_csv).is_relative()) {
    cfg.profiles_csv = (path.parent_path() / *cfg.profiles_csv).string();
  }
  return cfg;
}

void apply_env_overrides(ScenarioConfig& cfg, const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  auto get = [&](const char* name) -> std::optional<std::string> {
    if (auto it = env.find(prefix + name); it != env.end()) return it->second;
    return std::nullopt;
  };
  try {
    if (auto v = get("SEED")) cfg.seed = std::stoull(*v);
    if (auto v = get("DURATION_MS")) cfg.duration_ms = std::stoull(*v);
    if (auto v = get("POPULATION")) cfg.population = std::stoull(*v);
    if (auto v = get("LABELED")) cfg.labeled = (*v == "1" || *v == "true");
    if (auto v = get("SPEED")) cfg.speed = std::stod(*v);
  } catch (const std::logic_error& e) {
    throw ValidationError(std::string("environment override: ") + e.what());
  }
  cfg.validate();
}

std::map<std::string, std::string> process_env() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    std::string_view kv(*e);
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
  }
  return out;
}

std::string config_hash(const ScenarioConfig& cfg) {
  const json j = cfg;
  const auto d = sha256(j.dump());
  return to_hex(d);
}

std::int64_t parse_iso8601_ms(std::string_view s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  int consumed = 0;
  const std::string str(s);
  if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &sec, &consumed) != 6) {
    throw ValidationError("invalid ISO-8601 timestamp '" + str + "'");
  }
  std::int64_t ms = 0;
  std::size_t pos = static_cast<std::size_t>(consumed);
  if (pos < str.size() && str[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < str.size() && std::isdigit(static_cast<unsigned char>(str[pos]))) {
      if (digits < 3) ms = ms * 10 + (str[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) throw ValidationError("invalid ISO-8601 fraction in '" + str + "'");
    for (; digits < 3; ++digits) ms *= 10;
  }
  if (pos < str.size() && str[pos] == 'Z') ++pos;
  if (pos != str.size()) throw ValidationError("ISO-8601 timestamp must be UTC: '" + str + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) throw ValidationError("invalid ISO-8601 date '" + str + "'");
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return ((static_cast<std::int64_t>(days) * 24 + h) * 60 + mi) * 60'000LL + sec * 1000LL + ms;
}

std::string format_iso8601_ms(std::int64_t unix_ms) {
  using namespace std::chrono;
  const auto day_count = static_cast<int>(std::floor(static_cast<double>(unix_ms) / 86'400'000.0));
  const year_month_day ymd{sys_days{days{day_count}}};
  std::int64_t rem = unix_ms - static_cast<std::int64_t>(day_count) * 86'400'000LL;
  const int h = static_cast<int>(rem / 3'600'000);
  rem %= 3'600'000;
  const int mi = static_cast<int>(rem / 60'000);
  rem %= 60'000;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), h, mi,
                static_cast<int>(rem / 1000), static_cast<int>(rem % 1000));
  return buf;
}

}  // namespace mobisec
