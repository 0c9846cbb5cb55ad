#include "mobisec/cdr.hpp"

#include <cstring>
#include <string>

#include "mobisec/crypto.hpp"

namespace mobisec {

namespace {

constexpr std::array<std::string_view, 5> kKindNames = EnumNames<CdrKind>::names;

}  // namespace

const TariffRule& Tariff::rule(CdrKind k) const {
  const auto i = static_cast<std::size_t>(k);
  if (i >= rules.size()) throw ValidationError("tariff: unknown CDR kind " + std::to_string(i));
  return rules[i];
}

void Tariff::validate() const {
  for (const auto& r : rules) {
    if (r.base < 0 || r.per_second < 0 || r.per_megabyte < 0) throw ValidationError("tariff: rates must be >= 0");
  }
}

void to_json(json& j, const Tariff& t) {
  j = json::object();
  for (std::size_t i = 0; i < t.rules.size(); ++i) {
    const auto& r = t.rules[i];
    j[std::string(kKindNames[i])] = {{"base", r.base}, {"per_second", r.per_second}, {"per_megabyte", r.per_megabyte}};
  }
}

void from_json(const json& j, Tariff& t) {
  t = Tariff{};
  for (const auto& [name, v] : j.items()) {
    auto& r = t.rules[static_cast<std::size_t>(parse_enum<CdrKind>(name))];
    r.base = v.value("base", r.base);
    r.per_second = v.value("per_second", r.per_second);
    r.per_megabyte = v.value("per_megabyte", r.per_megabyte);
  }
  t.validate();
}

std::int64_t tariff_charge(const Tariff& tariff, CdrKind kind, std::uint64_t duration_ms,
                           std::uint64_t volume_bytes) {
  const auto& r = tariff.rule(kind);
  const auto timed = static_cast<std::int64_t>(duration_ms) * r.per_second / 1000;
  const auto sized = static_cast<std::int64_t>(volume_bytes) * r.per_megabyte / 1'000'000;
  return r.base + timed + sized;
}

Cdr emit_cdr(const Completion& c, const Tariff& tariff) {
  if (static_cast<std::size_t>(c.kind) >= kKindNames.size()) {
    throw ValidationError("emit_cdr: unknown kind " + std::to_string(static_cast<int>(c.kind)));
  }
  Cdr out;
  out.record_id = c.record_id;
  out.ue = c.ue;
  out.kind = c.kind;
  out.peer = c.peer;
  out.start = c.start;
  out.duration_ms = is_sms(c.kind) ? 0 : c.duration_ms;
  out.volume_bytes = c.volume_bytes;
  out.charge = c.charge_override ? *c.charge_override : tariff_charge(tariff, c.kind, out.duration_ms, c.volume_bytes);
  out.truth_label = c.truth_label;
  validate_cdr(out);
  return out;
}

Salt salt_from_hex(std::string_view hex) {
  const auto p = Pseudonym::from_hex(hex);
  return p.bytes;
}

std::string salt_to_hex(const Salt& s) { return to_hex(s); }

Pseudonym pseudonymize(UeId id, const Salt& salt) {
  std::array<std::uint8_t, 8> msg{};
  for (int i = 0; i < 8; ++i) msg[i] = static_cast<std::uint8_t>(id.value >> (8 * i));
  const auto mac = hmac_sha256(salt, msg);
  Pseudonym p;
  std::memcpy(p.bytes.data(), mac.data(), p.bytes.size());
  return p;
}

namespace {

Party anonymize(const Party& p, const Salt& salt) {
  if (const auto* u = std::get_if<UeId>(&p)) return pseudonymize(*u, salt);
  return p;
}

}  // namespace

Cdr sanitize(const Cdr& c, const Salt& salt) {
  Cdr out = c;
  out.ue = anonymize(c.ue, salt);
  out.peer = anonymize(c.peer, salt);
  out.truth_label.reset();
  return out;
}

}  // namespace mobisec
