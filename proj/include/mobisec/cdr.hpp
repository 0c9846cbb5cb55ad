#pragma once

#include <array>
#include <optional>

#include "mobisec/types.hpp"

namespace mobisec {

// Per-kind charging rule, all amounts in milli-units:
//   charge = base + duration_ms * per_second / 1000 + volume_bytes * per_megabyte / 10^6
// with both products truncated toward zero.
struct TariffRule {
  std::int64_t base = 0;
  std::int64_t per_second = 0;
  std::int64_t per_megabyte = 0;

  bool operator==(const TariffRule&) const = default;
};

struct Tariff {
  // Indexed by CdrKind.
  std::array<TariffRule, 5> rules{{
      {0, 1, 0},      // VOICE
      {10, 0, 0},     // SMS
      {0, 0, 50},     // DATA
      {3000, 0, 0},   // PREMIUM_SMS
      {3000, 20, 0},  // PREMIUM_CALL
  }};

  const TariffRule& rule(CdrKind k) const;
  void validate() const;
  bool operator==(const Tariff&) const = default;
};

void to_json(json& j, const Tariff& t);
void from_json(const json& j, Tariff& t);

// What the engine knows when a session or attack action completes.
struct Completion {
  std::uint64_t record_id = 0;
  UeId ue;
  UeId peer;
  CdrKind kind = CdrKind::DATA;
  SimTime start = 0;
  std::uint64_t duration_ms = 0;
  std::uint64_t volume_bytes = 0;
  // Attack-configured charge that replaces the tariff (premium abuse).
  std::optional<std::int64_t> charge_override;
  std::optional<AttackClass> truth_label;
};

std::int64_t tariff_charge(const Tariff& tariff, CdrKind kind, std::uint64_t duration_ms, std::uint64_t volume_bytes);

// Throws ValidationError for a kind outside the enumeration.
Cdr emit_cdr(const Completion& c, const Tariff& tariff);

using Salt = std::array<std::uint8_t, 16>;

Salt salt_from_hex(std::string_view hex);
std::string salt_to_hex(const Salt& s);

// HMAC-SHA256(salt, little-endian id) truncated to 16 bytes.
Pseudonym pseudonymize(UeId id, const Salt& salt);

// Replaces both parties with pseudonyms and drops the truth label. Parties
// that are already pseudonyms are left alone.
Cdr sanitize(const Cdr& c, const Salt& salt);

}  // namespace mobisec
