#include "mobisec/rrc.hpp"

#include <string>

namespace mobisec {

void RrcParams::validate() const {
  if (t_dch_ms == 0 || t_fach_ms == 0) throw ValidationError("rrc: inactivity timeouts must be > 0");
  for (auto c : {costs.idle_dch, costs.idle_fach, costs.fach_dch, costs.dch_fach, costs.fach_idle}) {
    if (c < 1) throw ValidationError("rrc: transition costs must be >= 1");
  }
}

void to_json(json& j, const RrcParams& p) {
  j = json{{"t_dch_ms", p.t_dch_ms},
           {"t_fach_ms", p.t_fach_ms},
           {"costs",
            {{"IDLE->DCH", p.costs.idle_dch},
             {"IDLE->FACH", p.costs.idle_fach},
             {"FACH->DCH", p.costs.fach_dch},
             {"DCH->FACH", p.costs.dch_fach},
             {"FACH->IDLE", p.costs.fach_idle}}}};
}

void from_json(const json& j, RrcParams& p) {
  p = RrcParams{};
  p.t_dch_ms = j.value("t_dch_ms", p.t_dch_ms);
  p.t_fach_ms = j.value("t_fach_ms", p.t_fach_ms);
  if (j.contains("costs")) {
    for (const auto& [edge, v] : j.at("costs").items()) {
      const auto c = v.get<std::uint32_t>();
      if (edge == "IDLE->DCH") p.costs.idle_dch = c;
      else if (edge == "IDLE->FACH") p.costs.idle_fach = c;
      else if (edge == "FACH->DCH") p.costs.fach_dch = c;
      else if (edge == "DCH->FACH") p.costs.dch_fach = c;
      else if (edge == "FACH->IDLE") p.costs.fach_idle = c;
      else throw ValidationError("rrc: cost table names a disallowed edge '" + edge + "'");
    }
  }
  p.validate();
}

bool is_allowed_edge(RrcState from, RrcState to) {
  using enum RrcState;
  return (from == IDLE && (to == DCH || to == FACH)) || (from == FACH && (to == DCH || to == IDLE)) ||
         (from == DCH && to == FACH);
}

std::uint32_t transition_cost(RrcState from, RrcState to, const RrcParams& p) {
  using enum RrcState;
  if (from == IDLE && to == DCH) return p.costs.idle_dch;
  if (from == IDLE && to == FACH) return p.costs.idle_fach;
  if (from == FACH && to == DCH) return p.costs.fach_dch;
  if (from == DCH && to == FACH) return p.costs.dch_fach;
  if (from == FACH && to == IDLE) return p.costs.fach_idle;
  throw ContractViolation("rrc: disallowed transition " + std::string(to_string(from)) + "->" +
                          std::string(to_string(to)));
}

namespace {

bool needs_dedicated(Demand d) { return d == Demand::DATA_LARGE || d == Demand::VOICE; }

std::uint64_t timeout_for(RrcState s, const RrcParams& p) {
  return s == RrcState::DCH ? p.t_dch_ms : p.t_fach_ms;
}

SignalingEvent make_event(SimTime t, UeId ue, RrcState from, RrcState to, Cause cause, const RrcParams& p,
                          std::optional<AttackClass> label) {
  return SignalingEvent{t, ue, from, to, cause, transition_cost(from, to, p), label};
}

}  // namespace

RrcStep on_activity(const UeState& s, SimTime t, Demand demand, const RrcParams& p,
                    std::optional<AttackClass> label) {
  if (t < s.last_activity) {
    throw TimeRegression("rrc: activity at t=" + std::to_string(t) + " precedes last activity " +
                         std::to_string(s.last_activity));
  }
  RrcStep out{s, {}};
  RrcState target = s.state;
  if (s.state == RrcState::IDLE) {
    target = needs_dedicated(demand) ? RrcState::DCH : RrcState::FACH;
  } else if (s.state == RrcState::FACH && needs_dedicated(demand)) {
    target = RrcState::DCH;
  }
  if (target != s.state) {
    out.events.push_back(make_event(t, s.ue, s.state, target, Cause::TRAFFIC, p, label));
  }
  out.state.state = target;
  out.state.last_activity = t;
  out.state.pending_timer = PendingTimer{t + timeout_for(target, p), target};
  out.state.activity_label = label;
  return out;
}

RrcStep on_timer(const UeState& s, SimTime t, const RrcParams& p) {
  if (!s.pending_timer) throw StaleTimer("rrc: timer fired with no pending timer");
  if (s.pending_timer->deadline != t || s.pending_timer->expected != s.state) {
    throw StaleTimer("rrc: stale timer at t=" + std::to_string(t));
  }
  RrcStep out{s, {}};
  if (s.state == RrcState::DCH) {
    out.events.push_back(make_event(t, s.ue, RrcState::DCH, RrcState::FACH, Cause::TIMER, p, s.activity_label));
    out.state.state = RrcState::FACH;
    out.state.pending_timer = PendingTimer{t + p.t_fach_ms, RrcState::FACH};
  } else if (s.state == RrcState::FACH) {
    out.events.push_back(make_event(t, s.ue, RrcState::FACH, RrcState::IDLE, Cause::TIMER, p, s.activity_label));
    out.state.state = RrcState::IDLE;
    out.state.pending_timer.reset();
    out.state.activity_label.reset();
  } else {
    throw StaleTimer("rrc: IDLE has no timer");
  }
  return out;
}

}  // namespace mobisec
