#include "mobisec/types.hpp"

#include <cmath>

#include "mobisec/rrc.hpp"

namespace mobisec {

namespace {

constexpr char kHex[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) return it->template get<T>();
  return std::nullopt;
}

}  // namespace

std::string Pseudonym::hex() const {
  std::string s;
  s.reserve(32);
  for (auto b : bytes) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  return s;
}

Pseudonym Pseudonym::from_hex(std::string_view s) {
  if (s.size() != 32) throw ValidationError("pseudonym must be 32 hex characters");
  Pseudonym p;
  for (std::size_t i = 0; i < 16; ++i) {
    const int hi = hex_value(s[2 * i]);
    const int lo = hex_value(s[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ValidationError("pseudonym contains a non-hex character");
    p.bytes[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return p;
}

std::string to_string(const Party& p) {
  if (const auto* u = std::get_if<UeId>(&p)) return std::to_string(u->value);
  return std::get<Pseudonym>(p).hex();
}

bool validate_event(const SignalingEvent& e, const RrcParams& params) {
  if (e.from == e.to) return false;
  if (!is_allowed_edge(e.from, e.to)) return false;
  return e.msg_cost == transition_cost(e.from, e.to, params);
}

bool validate_event(const SignalingEvent& e) { return validate_event(e, RrcParams{}); }

bool validate_alarm(const Alarm& a) {
  if (!std::isfinite(a.score)) return false;
  if (a.attack_class.has_value() != a.confidence.has_value()) return false;
  if (a.confidence && (*a.confidence < 0.0 || *a.confidence > 1.0)) return false;
  return (a.scope == AlarmScope::USER) == a.user.has_value();
}

void validate_cdr(const Cdr& c) {
  if (is_sms(c.kind) && c.duration_ms != 0) throw ValidationError("cdr: SMS records have zero duration");
  if (c.charge < 0) throw ValidationError("cdr: negative charge");
}

void to_json(json& j, const UeId& v) { j = v.value; }
void from_json(const json& j, UeId& v) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    throw ValidationError("ue id must be an unsigned integer");
  }
  v.value = j.get<std::uint64_t>();
}

void to_json(json& j, const Pseudonym& v) { j = v.hex(); }
void from_json(const json& j, Pseudonym& v) { v = Pseudonym::from_hex(j.get_ref<const std::string&>()); }

void to_json(json& j, const Party& v) {
  std::visit([&j](const auto& x) { to_json(j, x); }, v);
}
void from_json(const json& j, Party& v) {
  if (j.is_string()) v = j.get<Pseudonym>();
  else v = j.get<UeId>();
}

void to_json(json& j, const SignalingEvent& v) {
  j = json{{"t", v.t}, {"ue", v.ue}, {"from", v.from}, {"to", v.to}, {"cause", v.cause}, {"msg_cost", v.msg_cost}};
  put_optional(j, "truth_label", v.truth_label);
}

void from_json(const json& j, SignalingEvent& v) {
  v.t = j.at("t").get<SimTime>();
  v.ue = j.at("ue").get<UeId>();
  v.from = j.at("from").get<RrcState>();
  v.to = j.at("to").get<RrcState>();
  v.cause = j.at("cause").get<Cause>();
  v.msg_cost = j.at("msg_cost").get<std::uint32_t>();
  v.truth_label = get_optional<AttackClass>(j, "truth_label");
}

void to_json(json& j, const Cdr& v) {
  j = json{{"record_id", v.record_id}, {"ue", v.ue},         {"kind", v.kind},
           {"peer", v.peer},           {"start", v.start},   {"duration_ms", v.duration_ms},
           {"volume_bytes", v.volume_bytes}, {"charge", v.charge}};
  put_optional(j, "truth_label", v.truth_label);
}

void from_json(const json& j, Cdr& v) {
  v.record_id = j.at("record_id").get<std::uint64_t>();
  v.ue = j.at("ue").get<Party>();
  v.kind = j.at("kind").get<CdrKind>();
  v.peer = j.at("peer").get<Party>();
  v.start = j.at("start").get<SimTime>();
  v.duration_ms = j.at("duration_ms").get<std::uint64_t>();
  v.volume_bytes = j.at("volume_bytes").get<std::uint64_t>();
  v.charge = j.at("charge").get<std::int64_t>();
  v.truth_label = get_optional<AttackClass>(j, "truth_label");
  validate_cdr(v);
}

void to_json(json& j, const Alarm& v) {
  j = json{{"t_raised", v.t_raised}, {"scope", v.scope},          {"detector", v.detector},
           {"score", v.score},       {"window_index", v.window_index}};
  if (v.user) j["user"] = *v.user;
  put_optional(j, "attack_class", v.attack_class);
  put_optional(j, "confidence", v.confidence);
}

void from_json(const json& j, Alarm& v) {
  v.t_raised = j.at("t_raised").get<SimTime>();
  v.scope = j.at("scope").get<AlarmScope>();
  v.user = get_optional<Party>(j, "user");
  v.detector = j.at("detector").get<DetectorKind>();
  v.score = j.at("score").get<double>();
  v.attack_class = get_optional<AttackClass>(j, "attack_class");
  v.confidence = get_optional<double>(j, "confidence");
  v.window_index = j.at("window_index").get<std::uint64_t>();
  if (!validate_alarm(v)) throw ValidationError("alarm violates its invariants");
}

}  // namespace mobisec
