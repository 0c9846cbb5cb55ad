#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mobisec/types.hpp"

namespace mobisec {

// Traffic demand presented to the radio layer. DATA_LARGE and VOICE need a
// dedicated channel; DATA_SMALL and SMS fit on the shared one.
enum class Demand : std::uint8_t { DATA_LARGE, DATA_SMALL, VOICE, SMS };

template <>
struct EnumNames<Demand> {
  static constexpr std::array<std::string_view, 4> names{"DATA_LARGE", "DATA_SMALL", "VOICE", "SMS"};
};
MOBISEC_ENUM_JSON(Demand)

// Control-plane messages per allowed transition. Edges not listed here
// (DCH->IDLE, self loops) are not part of the machine.
struct CostTable {
  std::uint32_t idle_dch = 5;
  std::uint32_t idle_fach = 3;
  std::uint32_t fach_dch = 3;
  std::uint32_t dch_fach = 2;
  std::uint32_t fach_idle = 2;

  bool operator==(const CostTable&) const = default;
};

struct RrcParams {
  std::uint64_t t_dch_ms = 6000;
  std::uint64_t t_fach_ms = 12000;
  CostTable costs;

  void validate() const;
  bool operator==(const RrcParams&) const = default;
};

void to_json(json& j, const RrcParams& p);
void from_json(const json& j, RrcParams& p);

struct PendingTimer {
  SimTime deadline = 0;
  RrcState expected = RrcState::IDLE;  // state the timer demotes from

  bool operator==(const PendingTimer&) const = default;
};

struct UeState {
  UeId ue;
  RrcState state = RrcState::IDLE;
  SimTime last_activity = 0;
  std::optional<PendingTimer> pending_timer;
  // Truth label of the activity that produced the current channel, so the
  // timer-driven demotions it causes are labeled too.
  std::optional<AttackClass> activity_label;

  bool operator==(const UeState&) const = default;
};

struct RrcStep {
  UeState state;
  std::vector<SignalingEvent> events;
};

bool is_allowed_edge(RrcState from, RrcState to);

// Throws ContractViolation for an edge outside the machine.
std::uint32_t transition_cost(RrcState from, RrcState to, const RrcParams& p);

// Traffic at time t. Throws TimeRegression if t < s.last_activity.
RrcStep on_activity(const UeState& s, SimTime t, Demand demand, const RrcParams& p,
                    std::optional<AttackClass> label = std::nullopt);

// Inactivity timer firing at t. Throws StaleTimer unless s has a pending
// timer with deadline t that matches its state.
RrcStep on_timer(const UeState& s, SimTime t, const RrcParams& p);

}  // namespace mobisec
