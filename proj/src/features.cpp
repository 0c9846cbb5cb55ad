#include "mobisec/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_set>

namespace mobisec {

namespace {

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) return it->template get<T>();
  return std::nullopt;
}

std::size_t party_hash(const Party& p) {
  if (const auto* u = std::get_if<UeId>(&p)) return std::hash<UeId>{}(*u);
  return std::hash<Pseudonym>{}(std::get<Pseudonym>(p));
}

struct PartyHash {
  std::size_t operator()(const Party& p) const { return party_hash(p); }
};

}  // namespace

WindowFeatures extract_features(std::span<const SignalingEvent> events, std::span<const Cdr> cdrs,
                                const WindowSpec& window) {
  if (!std::is_sorted(events.begin(), events.end(),
                      [](const SignalingEvent& a, const SignalingEvent& b) { return a.t < b.t; })) {
    throw StreamError("extract_features: signaling events are not sorted by time");
  }
  if (!std::is_sorted(cdrs.begin(), cdrs.end(), [](const Cdr& a, const Cdr& b) { return cdr_time(a) < cdr_time(b); })) {
    throw StreamError("extract_features: CDRs are not sorted by completion time");
  }

  WindowFeatures f;
  f.window_index = window.index;
  f.scale = window.scale;
  f.start = window.start;
  f.width_ms = window.width_ms;
  const SimTime end = window.end();

  auto ev_begin = std::lower_bound(events.begin(), events.end(), window.start,
                                   [](const SignalingEvent& e, SimTime t) { return e.t < t; });
  auto ev_end = std::lower_bound(ev_begin, events.end(), end, [](const SignalingEvent& e, SimTime t) { return e.t < t; });

  std::array<std::uint64_t, kAutocorrSubBins> sub_bins{};
  std::unordered_set<UeId> users;
  // Welford accumulators over inter-event gaps.
  double gap_mean = 0.0;
  double gap_m2 = 0.0;
  std::uint64_t gaps = 0;
  const SignalingEvent* prev = nullptr;
  for (auto it = ev_begin; it != ev_end; ++it) {
    const auto& e = *it;
    if (e.cause == Cause::TRAFFIC) ++f.promotion_count;
    else ++f.demotion_count;
    f.msg_count += e.msg_cost;
    users.insert(e.ue);
    const auto bin = (e.t - window.start) * kAutocorrSubBins / window.width_ms;
    ++sub_bins[std::min<std::size_t>(bin, kAutocorrSubBins - 1)];
    if (prev != nullptr) {
      const double gap = static_cast<double>(e.t - prev->t);
      ++gaps;
      const double delta = gap - gap_mean;
      gap_mean += delta / static_cast<double>(gaps);
      gap_m2 += delta * (gap - gap_mean);
    }
    prev = &e;
  }
  f.active_users = users.size();

  if (gaps >= 1) {
    f.mean_interevent_ms = gap_mean;
    if (gap_mean > 0.0) f.cv_interevent = std::sqrt(gap_m2 / static_cast<double>(gaps)) / gap_mean;
  }

  double bin_mean = 0.0;
  for (auto c : sub_bins) bin_mean += static_cast<double>(c);
  bin_mean /= static_cast<double>(kAutocorrSubBins);
  double denom = 0.0;
  double numer = 0.0;
  for (std::size_t i = 0; i < kAutocorrSubBins; ++i) {
    const double d = static_cast<double>(sub_bins[i]) - bin_mean;
    denom += d * d;
    if (i + 1 < kAutocorrSubBins) numer += d * (static_cast<double>(sub_bins[i + 1]) - bin_mean);
  }
  if (denom > 0.0) f.lag1_autocorr = numer / denom;

  auto cdr_begin = std::lower_bound(cdrs.begin(), cdrs.end(), window.start,
                                    [](const Cdr& c, SimTime t) { return cdr_time(c) < t; });
  auto cdr_end = std::lower_bound(cdr_begin, cdrs.end(), end, [](const Cdr& c, SimTime t) { return cdr_time(c) < t; });
  std::unordered_set<Party, PartyHash> peers;
  for (auto it = cdr_begin; it != cdr_end; ++it) {
    if (is_premium(it->kind)) {
      ++f.premium_cdr_count;
      f.premium_charge_sum += it->charge;
    }
    if (is_sms(it->kind)) ++f.sms_out_count;
    peers.insert(it->peer);
  }
  f.distinct_peers = peers.size();
  return f;
}

void to_json(json& j, const WindowFeatures& f) {
  j = json{{"window_index", f.window_index},
           {"scale", f.scale},
           {"start", f.start},
           {"width_ms", f.width_ms},
           {"promotion_count", f.promotion_count},
           {"demotion_count", f.demotion_count},
           {"msg_count", f.msg_count},
           {"active_users", f.active_users},
           {"premium_cdr_count", f.premium_cdr_count},
           {"premium_charge_sum", f.premium_charge_sum},
           {"sms_out_count", f.sms_out_count},
           {"distinct_peers", f.distinct_peers}};
  put_optional(j, "mean_interevent_ms", f.mean_interevent_ms);
  put_optional(j, "cv_interevent", f.cv_interevent);
  put_optional(j, "lag1_autocorr", f.lag1_autocorr);
}

void from_json(const json& j, WindowFeatures& f) {
  f.window_index = j.at("window_index").get<std::uint64_t>();
  f.scale = j.at("scale").get<Scale>();
  f.start = j.at("start").get<SimTime>();
  f.width_ms = j.at("width_ms").get<std::uint64_t>();
  f.promotion_count = j.at("promotion_count").get<std::uint64_t>();
  f.demotion_count = j.at("demotion_count").get<std::uint64_t>();
  f.msg_count = j.at("msg_count").get<std::uint64_t>();
  f.active_users = j.at("active_users").get<std::uint64_t>();
  f.premium_cdr_count = j.at("premium_cdr_count").get<std::uint64_t>();
  f.premium_charge_sum = j.at("premium_charge_sum").get<std::int64_t>();
  f.sms_out_count = j.at("sms_out_count").get<std::uint64_t>();
  f.distinct_peers = j.at("distinct_peers").get<std::uint64_t>();
  f.mean_interevent_ms = get_optional<double>(j, "mean_interevent_ms");
  f.cv_interevent = get_optional<double>(j, "cv_interevent");
  f.lag1_autocorr = get_optional<double>(j, "lag1_autocorr");
}

}  // namespace mobisec
