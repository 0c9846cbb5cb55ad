#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "mobisec/error.hpp"

namespace mobisec {

using json = nlohmann::json;

// Milliseconds since scenario start.
using SimTime = std::uint64_t;

struct UeId {
  std::uint64_t value = 0;
  auto operator<=>(const UeId&) const = default;
};

// Keyed-hash replacement for a raw identifier.
struct Pseudonym {
  std::array<std::uint8_t, 16> bytes{};
  auto operator<=>(const Pseudonym&) const = default;

  std::string hex() const;
  static Pseudonym from_hex(std::string_view s);
};

// A CDR party: raw identifier inside the engine, pseudonym once sanitized.
using Party = std::variant<UeId, Pseudonym>;

enum class RrcState : std::uint8_t { IDLE, FACH, DCH };
enum class Cause : std::uint8_t { TRAFFIC, TIMER };
enum class AttackClass : std::uint8_t { SIGNALING_STORM, PREMIUM_ABUSE, SMS_SPAM, BOTNET_DDOS };
enum class CdrKind : std::uint8_t { VOICE, SMS, DATA, PREMIUM_SMS, PREMIUM_CALL };
enum class DetectorKind : std::uint8_t { CUSUM, BAYES, NEURAL, FUSED, USER_SCORE };
enum class AlarmScope : std::uint8_t { NETWORK, USER };

template <typename E>
struct EnumNames;

template <>
struct EnumNames<RrcState> {
  static constexpr std::array<std::string_view, 3> names{"IDLE", "FACH", "DCH"};
};
template <>
struct EnumNames<Cause> {
  static constexpr std::array<std::string_view, 2> names{"TRAFFIC", "TIMER"};
};
template <>
struct EnumNames<AttackClass> {
  static constexpr std::array<std::string_view, 4> names{"SIGNALING_STORM", "PREMIUM_ABUSE", "SMS_SPAM",
                                                         "BOTNET_DDOS"};
};
template <>
struct EnumNames<CdrKind> {
  static constexpr std::array<std::string_view, 5> names{"VOICE", "SMS", "DATA", "PREMIUM_SMS", "PREMIUM_CALL"};
};
template <>
struct EnumNames<DetectorKind> {
  static constexpr std::array<std::string_view, 5> names{"CUSUM", "BAYES", "NEURAL", "FUSED", "USER_SCORE"};
};
template <>
struct EnumNames<AlarmScope> {
  static constexpr std::array<std::string_view, 2> names{"NETWORK", "USER"};
};

template <typename E>
constexpr std::size_t enum_count() {
  return EnumNames<E>::names.size();
}

template <typename E>
std::string_view to_string(E e) {
  const auto i = static_cast<std::size_t>(e);
  if (i >= EnumNames<E>::names.size()) throw ValidationError("enumeration value out of range");
  return EnumNames<E>::names[i];
}

template <typename E>
E parse_enum(std::string_view s) {
  const auto& names = EnumNames<E>::names;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  throw ValidationError("unknown enumeration name '" + std::string(s) + "'");
}

struct SignalingEvent {
  SimTime t = 0;
  UeId ue;
  RrcState from = RrcState::IDLE;
  RrcState to = RrcState::IDLE;
  Cause cause = Cause::TRAFFIC;
  std::uint32_t msg_cost = 0;
  std::optional<AttackClass> truth_label;

  bool operator==(const SignalingEvent&) const = default;
};

// Charging data record. charge is in milli-units of currency.
struct Cdr {
  std::uint64_t record_id = 0;
  Party ue;
  CdrKind kind = CdrKind::DATA;
  Party peer;
  SimTime start = 0;
  std::uint64_t duration_ms = 0;
  std::uint64_t volume_bytes = 0;
  std::int64_t charge = 0;
  std::optional<AttackClass> truth_label;

  bool operator==(const Cdr&) const = default;
};

// CDRs are emitted when the session completes; streams are ordered by this.
inline SimTime cdr_time(const Cdr& c) { return c.start + c.duration_ms; }

inline bool is_premium(CdrKind k) { return k == CdrKind::PREMIUM_SMS || k == CdrKind::PREMIUM_CALL; }
inline bool is_sms(CdrKind k) { return k == CdrKind::SMS || k == CdrKind::PREMIUM_SMS; }

struct Alarm {
  SimTime t_raised = 0;
  AlarmScope scope = AlarmScope::NETWORK;
  std::optional<Party> user;  // set iff scope == USER
  DetectorKind detector = DetectorKind::FUSED;
  double score = 0.0;
  std::optional<AttackClass> attack_class;
  std::optional<double> confidence;  // set iff attack_class is set
  std::uint64_t window_index = 0;

  bool operator==(const Alarm&) const = default;
};

struct RrcParams;

// True iff every SignalingEvent invariant holds under the given cost table.
bool validate_event(const SignalingEvent& e, const RrcParams& params);
bool validate_event(const SignalingEvent& e);

bool validate_alarm(const Alarm& a);

// Throws ValidationError if the CDR breaks an invariant.
void validate_cdr(const Cdr& c);

std::string to_string(const Party& p);

void to_json(json& j, const UeId& v);
void from_json(const json& j, UeId& v);
void to_json(json& j, const Pseudonym& v);
void from_json(const json& j, Pseudonym& v);
void to_json(json& j, const Party& v);
void from_json(const json& j, Party& v);
void to_json(json& j, const SignalingEvent& v);
void from_json(const json& j, SignalingEvent& v);
void to_json(json& j, const Cdr& v);
void from_json(const json& j, Cdr& v);
void to_json(json& j, const Alarm& v);
void from_json(const json& j, Alarm& v);

// Enumerations serialize as their exact names.
#define MOBISEC_ENUM_JSON(E)                                                            \
  inline void to_json(json& j, const E& e) { j = std::string(to_string(e)); }          \
  inline void from_json(const json& j, E& e) {                                         \
    if (!j.is_string()) throw ValidationError("expected a name string for " #E);       \
    e = parse_enum<E>(j.get_ref<const std::string&>());                                \
  }

MOBISEC_ENUM_JSON(RrcState)
MOBISEC_ENUM_JSON(Cause)
MOBISEC_ENUM_JSON(AttackClass)
MOBISEC_ENUM_JSON(CdrKind)
MOBISEC_ENUM_JSON(DetectorKind)
MOBISEC_ENUM_JSON(AlarmScope)

// Canonical JSON-lines form: one compact object per line, keys sorted.
template <typename T>
std::string to_json_line(const T& v) {
  json j = v;
  return j.dump();
}

}  // namespace mobisec

template <>
struct std::hash<mobisec::UeId> {
  std::size_t operator()(const mobisec::UeId& u) const noexcept { return std::hash<std::uint64_t>{}(u.value); }
};

template <>
struct std::hash<mobisec::Pseudonym> {
  std::size_t operator()(const mobisec::Pseudonym& p) const noexcept {
    std::uint64_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | p.bytes[i];
    return static_cast<std::size_t>(h);
  }
};
