#include "mobisec/workload.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mobisec {

void DiurnalCurve::validate() const {
  if (bins.size() != 24) {
    throw ValidationError("diurnal curve needs 24 hourly bins, got " + std::to_string(bins.size()));
  }
  for (double b : bins) {
    if (!(b > 0.0) || !std::isfinite(b)) throw ValidationError("diurnal curve bins must be finite and > 0");
  }
}

double diurnal_rate(const DiurnalCurve& curve, SimTime t) {
  curve.validate();
  return curve.bins[(t / kHourMs) % 24];
}

void UeProfile::validate() const {
  if (!(session_rate_per_hour > 0.0) || !std::isfinite(session_rate_per_hour)) {
    throw ValidationError("profile: session_rate_per_hour must be > 0");
  }
  double sum = 0.0;
  for (double p : mix) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("profile: mix probabilities must lie in [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("profile: mix must sum to 1");
  if (!(mean_call_duration_ms > 0.0) || !(mean_data_volume_bytes > 0.0)) {
    throw ValidationError("profile: means must be > 0");
  }
  if (!(premium_prob >= 0.0 && premium_prob <= 1.0)) throw ValidationError("profile: premium_prob must lie in [0,1]");
}

UeId endpoint_id(std::uint64_t index) { return UeId{mix64(index ^ 0x5EED'E17D'0000'0000ULL) | (1ULL << 63)}; }

UeId make_ue_id(std::uint64_t master_seed, std::uint64_t index) {
  return UeId{derive_seed(master_seed, StreamTag::kUeId, index) | (1ULL << 63)};
}

namespace {

// Advance from `from` (ms, fractional) until `budget` units of integrated
// intensity are consumed. Intensity per ms in hour h is base * bins[h].
double integrate_arrival(double from, double budget, double base_per_ms, const DiurnalCurve& curve) {
  double t = from;
  for (;;) {
    const auto hour = static_cast<std::uint64_t>(t / static_cast<double>(kHourMs));
    const double rate = base_per_ms * curve.bins[hour % 24];
    const double bin_end = static_cast<double>((hour + 1) * kHourMs);
    const double capacity = rate * (bin_end - t);
    if (budget <= capacity) return t + budget / rate;
    budget -= capacity;
    t = bin_end;
  }
}

Demand draw_demand(const std::array<double, 4>& mix, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    acc += mix[i];
    if (u < acc) return static_cast<Demand>(i);
  }
  // Rounding left u above the last cumulative value; pick the last nonzero.
  for (std::size_t i = mix.size(); i-- > 0;) {
    if (mix[i] > 0.0) return static_cast<Demand>(i);
  }
  return Demand::DATA_SMALL;
}

}  // namespace

SessionPlan next_session(const UeProfile& profile, Rng& rng, SimTime after, const DiurnalCurve& curve) {
  const double base_per_ms = profile.session_rate_per_hour / static_cast<double>(kHourMs);
  const double budget = rng.exponential(1.0);
  const double t = integrate_arrival(static_cast<double>(after), budget, base_per_ms, curve);

  SessionPlan plan;
  plan.ue = profile.ue;
  plan.t = static_cast<SimTime>(std::floor(t));
  plan.demand = draw_demand(profile.mix, rng.uniform());
  const double size_draw = rng.exponential(1.0);
  switch (plan.demand) {
    case Demand::VOICE:
      plan.duration_ms = static_cast<std::uint64_t>(std::llround(size_draw * profile.mean_call_duration_ms));
      break;
    case Demand::DATA_LARGE:
    case Demand::DATA_SMALL:
      plan.volume_bytes = static_cast<std::uint64_t>(std::llround(size_draw * profile.mean_data_volume_bytes));
      break;
    case Demand::SMS:
      break;
  }
  const double premium_draw = rng.uniform();
  plan.premium = (plan.demand == Demand::VOICE || plan.demand == Demand::SMS) && premium_draw < profile.premium_prob;
  plan.peer = endpoint_id(rng.below(kPeerPool));
  return plan;
}

std::vector<UeProfile> homogeneous_population(const UeProfile& shape, std::span<const UeId> ids) {
  std::vector<UeProfile> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    UeProfile p = shape;
    p.ue = id;
    out.push_back(p);
  }
  return out;
}

std::vector<UeProfile> load_profiles_csv(const std::filesystem::path& path, const UeProfile& defaults) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open profile CSV " + path.string());
  std::vector<UeProfile> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.rfind("ue_id", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 7 && cells.size() != 9) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected 7 or 9 columns");
    }
    try {
      UeProfile p = defaults;
      p.ue = UeId{std::stoull(cells[0])};
      p.session_rate_per_hour = std::stod(cells[1]);
      for (std::size_t i = 0; i < 4; ++i) p.mix[i] = std::stod(cells[2 + i]);
      p.premium_prob = std::stod(cells[6]);
      if (cells.size() == 9) {
        p.mean_call_duration_ms = std::stod(cells[7]);
        p.mean_data_volume_bytes = std::stod(cells[8]);
      }
      p.validate();
      out.push_back(p);
    } catch (const std::logic_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void to_json(json& j, const UeProfile& p) {
  j = json{{"session_rate_per_hour", p.session_rate_per_hour},
           {"mix", p.mix},
           {"mean_call_duration_ms", p.mean_call_duration_ms},
           {"mean_data_volume_bytes", p.mean_data_volume_bytes},
           {"premium_prob", p.premium_prob}};
}

void from_json(const json& j, UeProfile& p) {
  p = UeProfile{};
  p.session_rate_per_hour = j.value("session_rate_per_hour", p.session_rate_per_hour);
  if (j.contains("mix")) p.mix = j.at("mix").get<std::array<double, 4>>();
  p.mean_call_duration_ms = j.value("mean_call_duration_ms", p.mean_call_duration_ms);
  p.mean_data_volume_bytes = j.value("mean_data_volume_bytes", p.mean_data_volume_bytes);
  p.premium_prob = j.value("premium_prob", p.premium_prob);
  p.validate();
}

void to_json(json& j, const DiurnalCurve& c) { j = c.bins; }
void from_json(const json& j, DiurnalCurve& c) {
  c.bins = j.get<std::vector<double>>();
  c.validate();
}

}  // namespace mobisec
