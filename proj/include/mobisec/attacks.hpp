#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mobisec/rng.hpp"
#include "mobisec/rrc.hpp"
#include "mobisec/types.hpp"

namespace mobisec {

enum class ActionKind : std::uint8_t { TRIGGER_DATA_SMALL, EMIT_PREMIUM_CDR, EMIT_SPAM_SMS, EMIT_DDOS_MSG };

template <>
struct EnumNames<ActionKind> {
  static constexpr std::array<std::string_view, 4> names{"TRIGGER_DATA_SMALL", "EMIT_PREMIUM_CDR", "EMIT_SPAM_SMS",
                                                         "EMIT_DDOS_MSG"};
};
MOBISEC_ENUM_JSON(ActionKind)

// Class-specific knobs; only the fields of the spec's class are read.
struct AttackParams {
  // Signaling storm. nullopt period means AUTO (see storm_period).
  std::optional<std::uint64_t> trigger_period_ms;
  std::uint64_t epsilon_ms = 100;
  // Fixed per-bot phase in [0, period). nullopt draws a uniform random phase.
  std::optional<std::uint64_t> phase_ms;
  std::uint64_t trigger_bytes = 64;

  // Premium abuse.
  double charges_per_hour = 6.0;
  std::int64_t charge_milliunits = 3000;

  // SMS spam.
  double msgs_per_hour = 60.0;
  std::uint32_t fanout = 50;

  // Botnet DDoS toward one peer.
  double msgs_per_second = 1.0;

  bool operator==(const AttackParams&) const = default;
};

struct AttackSpec {
  AttackClass attack_class = AttackClass::SIGNALING_STORM;
  SimTime start = 0;
  SimTime stop = 0;
  std::uint32_t n_infected = 1;
  AttackParams params;

  // population == 0 skips the upper bound on n_infected.
  void validate(std::uint64_t population = 0) const;
  bool operator==(const AttackSpec&) const = default;
};

struct AttackAction {
  SimTime t = 0;
  UeId ue;
  ActionKind kind = ActionKind::TRIGGER_DATA_SMALL;
  UeId peer;

  bool operator==(const AttackAction&) const = default;
};

struct AttackPlan {
  AttackClass label = AttackClass::SIGNALING_STORM;
  std::vector<AttackAction> actions;  // sorted by (t, ue)
};

// Trigger period that lands every trigger in IDLE: one full
// promotion/demotion cycle plus epsilon. DATA_SMALL triggers go IDLE->FACH and
// only wait out the FACH timer; DATA_LARGE triggers also wait out DCH.
std::uint64_t storm_period(const RrcParams& p, std::uint64_t epsilon_ms, Demand trigger = Demand::DATA_SMALL);

// Compiles a spec into timed actions for the given infected users.
// SIGNALING_STORM: each bot fires floor((stop-start)/P) triggers at
//   start + phase + k*P with phase in [0, P), so every trigger is in window.
// PREMIUM_ABUSE / SMS_SPAM: independent Poisson streams per bot.
// BOTNET_DDOS: deterministic messages every 1000/msgs_per_second ms per bot.
AttackPlan compile_attack(const AttackSpec& spec, std::span<const UeId> infected, const RrcParams& p, Rng& rng);

void to_json(json& j, const AttackParams& p);
void to_json(json& j, const AttackSpec& s);
void from_json(const json& j, AttackSpec& s);
void to_json(json& j, const AttackAction& a);

}  // namespace mobisec
