#include "mobisec/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "mobisec/workload.hpp"

namespace mobisec {

void AttackSpec::validate(std::uint64_t population) const {
  if (!(start < stop)) throw ValidationError("attack: start must precede stop");
  if (n_infected < 1) throw ValidationError("attack: n_infected must be >= 1");
  if (population != 0 && n_infected > population) throw ValidationError("attack: n_infected exceeds population");
  switch (attack_class) {
    case AttackClass::SIGNALING_STORM:
      if (params.epsilon_ms < 1) throw ValidationError("attack: epsilon_ms must be >= 1");
      if (params.trigger_period_ms && *params.trigger_period_ms == 0) {
        throw ValidationError("attack: trigger_period_ms must be > 0");
      }
      break;
    case AttackClass::PREMIUM_ABUSE:
      if (!(params.charges_per_hour > 0.0) || params.charge_milliunits <= 0) {
        throw ValidationError("attack: premium rate and charge must be > 0");
      }
      break;
    case AttackClass::SMS_SPAM:
      if (!(params.msgs_per_hour > 0.0) || params.fanout < 1) {
        throw ValidationError("attack: spam rate and fanout must be > 0");
      }
      break;
    case AttackClass::BOTNET_DDOS:
      if (!(params.msgs_per_second > 0.0)) throw ValidationError("attack: msgs_per_second must be > 0");
      break;
  }
}

std::uint64_t storm_period(const RrcParams& p, std::uint64_t epsilon_ms, Demand trigger) {
  if (epsilon_ms < 1) throw ValidationError("storm_period: epsilon_ms must be >= 1");
  if (trigger == Demand::DATA_LARGE || trigger == Demand::VOICE) return p.t_fach_ms + p.t_dch_ms + epsilon_ms;
  return p.t_fach_ms + epsilon_ms;
}

namespace {

void poisson_stream(std::vector<AttackAction>& out, const AttackSpec& spec, UeId bot, double per_hour,
                    ActionKind kind, std::span<const UeId> peers, Rng& rng) {
  const double rate_per_ms = per_hour / 3'600'000.0;
  double t = static_cast<double>(spec.start);
  for (std::size_t k = 0;; ++k) {
    t += rng.exponential(rate_per_ms);
    const auto ts = static_cast<SimTime>(std::floor(t));
    if (ts >= spec.stop) break;
    out.push_back({ts, bot, kind, peers[k % peers.size()]});
  }
}

}  // namespace

AttackPlan compile_attack(const AttackSpec& spec, std::span<const UeId> infected, const RrcParams& p, Rng& rng) {
  if (infected.empty()) throw ValidationError("compile_attack: empty infected set");
  spec.validate();
  if (infected.size() != spec.n_infected) throw ValidationError("compile_attack: infected size != n_infected");

  AttackPlan plan;
  plan.label = spec.attack_class;
  const SimTime span = spec.stop - spec.start;

  switch (spec.attack_class) {
    case AttackClass::SIGNALING_STORM: {
      const std::uint64_t period = spec.params.trigger_period_ms.value_or(storm_period(p, spec.params.epsilon_ms));
      const std::uint64_t triggers = span / period;
      const UeId c2_server = endpoint_id(rng.next_u64());
      for (auto bot : infected) {
        const std::uint64_t phase = spec.params.phase_ms ? (*spec.params.phase_ms % period) : rng.below(period);
        for (std::uint64_t k = 0; k < triggers; ++k) {
          plan.actions.push_back({spec.start + phase + k * period, bot, ActionKind::TRIGGER_DATA_SMALL, c2_server});
        }
      }
      break;
    }
    case AttackClass::PREMIUM_ABUSE: {
      // All bots bill the same premium-rate number.
      const UeId premium_number = endpoint_id(rng.next_u64());
      for (auto bot : infected) {
        poisson_stream(plan.actions, spec, bot, spec.params.charges_per_hour, ActionKind::EMIT_PREMIUM_CDR,
                       std::span(&premium_number, 1), rng);
      }
      break;
    }
    case AttackClass::SMS_SPAM: {
      for (auto bot : infected) {
        std::vector<UeId> victims;
        victims.reserve(spec.params.fanout);
        while (victims.size() < spec.params.fanout) {
          const UeId v = endpoint_id(rng.next_u64());
          if (std::find(victims.begin(), victims.end(), v) == victims.end()) victims.push_back(v);
        }
        poisson_stream(plan.actions, spec, bot, spec.params.msgs_per_hour, ActionKind::EMIT_SPAM_SMS, victims, rng);
      }
      break;
    }
    case AttackClass::BOTNET_DDOS: {
      const UeId target = endpoint_id(rng.next_u64());
      const double interval = 1000.0 / spec.params.msgs_per_second;
      for (auto bot : infected) {
        for (std::uint64_t k = 0;; ++k) {
          const auto ts = spec.start + static_cast<SimTime>(std::floor(static_cast<double>(k) * interval));
          if (ts >= spec.stop) break;
          plan.actions.push_back({ts, bot, ActionKind::EMIT_DDOS_MSG, target});
        }
      }
      break;
    }
  }
  std::stable_sort(plan.actions.begin(), plan.actions.end(), [](const AttackAction& a, const AttackAction& b) {
    return a.t != b.t ? a.t < b.t : a.ue < b.ue;
  });
  return plan;
}

void to_json(json& j, const AttackParams& p) {
  j = json::object();
  if (p.trigger_period_ms) j["trigger_period_ms"] = *p.trigger_period_ms;
  else j["trigger_period_ms"] = "AUTO";
  j["epsilon_ms"] = p.epsilon_ms;
  if (p.phase_ms) j["phase_ms"] = *p.phase_ms;
  j["trigger_bytes"] = p.trigger_bytes;
  j["charges_per_hour"] = p.charges_per_hour;
  j["charge_milliunits"] = p.charge_milliunits;
  j["msgs_per_hour"] = p.msgs_per_hour;
  j["fanout"] = p.fanout;
  j["msgs_per_second"] = p.msgs_per_second;
}

void to_json(json& j, const AttackSpec& s) {
  j = json{{"class", s.attack_class}, {"start", s.start}, {"stop", s.stop}, {"n_infected", s.n_infected}};
  to_json(j["params"], s.params);
}

void from_json(const json& j, AttackSpec& s) {
  s = AttackSpec{};
  s.attack_class = j.at("class").get<AttackClass>();
  s.start = j.at("start").get<SimTime>();
  s.stop = j.at("stop").get<SimTime>();
  s.n_infected = j.at("n_infected").get<std::uint32_t>();
  const json params = j.value("params", json::object());
  auto& p = s.params;
  if (auto it = params.find("trigger_period_ms"); it != params.end()) {
    if (it->is_string()) {
      if (it->get<std::string>() != "AUTO") throw ValidationError("attack: trigger_period_ms must be a number or AUTO");
    } else {
      p.trigger_period_ms = it->get<std::uint64_t>();
    }
  }
  p.epsilon_ms = params.value("epsilon_ms", p.epsilon_ms);
  if (params.contains("phase_ms")) p.phase_ms = params.at("phase_ms").get<std::uint64_t>();
  p.trigger_bytes = params.value("trigger_bytes", p.trigger_bytes);
  p.charges_per_hour = params.value("charges_per_hour", p.charges_per_hour);
  p.charge_milliunits = params.value("charge_milliunits", p.charge_milliunits);
  p.msgs_per_hour = params.value("msgs_per_hour", p.msgs_per_hour);
  p.fanout = params.value("fanout", p.fanout);
  p.msgs_per_second = params.value("msgs_per_second", p.msgs_per_second);
  s.validate();
}

void to_json(json& j, const AttackAction& a) {
  j = json{{"t", a.t}, {"ue", a.ue}, {"kind", a.kind}, {"peer", a.peer}};
}

}  // namespace mobisec
