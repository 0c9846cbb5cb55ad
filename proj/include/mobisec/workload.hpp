#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "mobisec/rng.hpp"
#include "mobisec/rrc.hpp"
#include "mobisec/types.hpp"

namespace mobisec {

inline constexpr SimTime kHourMs = 3'600'000;

// Hour-of-day rate multipliers, hour 0 starting at scenario start.
struct DiurnalCurve {
  std::vector<double> bins = std::vector<double>(24, 1.0);

  void validate() const;
  bool operator==(const DiurnalCurve&) const = default;
};

double diurnal_rate(const DiurnalCurve& curve, SimTime t);

struct UeProfile {
  UeId ue;
  double session_rate_per_hour = 2.0;
  // Probabilities over Demand in enumeration order.
  std::array<double, 4> mix{0.3, 0.4, 0.1, 0.2};
  double mean_call_duration_ms = 120'000.0;
  double mean_data_volume_bytes = 200'000.0;
  double premium_prob = 0.001;

  void validate() const;
  bool operator==(const UeProfile&) const = default;
};

struct SessionPlan {
  UeId ue;
  SimTime t = 0;
  Demand demand = Demand::DATA_SMALL;
  std::uint64_t duration_ms = 0;
  std::uint64_t volume_bytes = 0;
  bool premium = false;
  UeId peer;  // opaque endpoint the session talks to

  bool operator==(const SessionPlan&) const = default;
};

// Number of distinct opaque endpoints sessions draw their peer from.
inline constexpr std::uint64_t kPeerPool = 100'000;

// Opaque 64-bit id of endpoint `index`. The top bit is always set, which also
// holds for user ids (see make_ue_id), so raw identifiers never look like the
// small integers that appear in exported streams.
UeId endpoint_id(std::uint64_t index);
UeId make_ue_id(std::uint64_t master_seed, std::uint64_t index);

// Next session strictly after `after` (or at it, if the draw rounds down to
// the same millisecond). Arrivals follow a Poisson process whose rate is
// session_rate_per_hour scaled by the diurnal curve; the piecewise-constant
// rate is integrated exactly across hour boundaries.
SessionPlan next_session(const UeProfile& profile, Rng& rng, SimTime after, const DiurnalCurve& curve);

std::vector<UeProfile> homogeneous_population(const UeProfile& shape, std::span<const UeId> ids);

// CSV columns: ue_id,rate,p_data_large,p_data_small,p_voice,p_sms,premium_prob
// with optional mean_call_duration_ms,mean_data_volume_bytes.
std::vector<UeProfile> load_profiles_csv(const std::filesystem::path& path, const UeProfile& defaults);

void to_json(json& j, const UeProfile& p);
void from_json(const json& j, UeProfile& p);
void to_json(json& j, const DiurnalCurve& c);
void from_json(const json& j, DiurnalCurve& c);

}  // namespace mobisec
