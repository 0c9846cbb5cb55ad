#pragma once

#include <optional>
#include <span>

#include "mobisec/types.hpp"

namespace mobisec {

enum class Scale : std::uint8_t { SHORT, LONG };

template <>
struct EnumNames<Scale> {
  static constexpr std::array<std::string_view, 2> names{"SHORT", "LONG"};
};
MOBISEC_ENUM_JSON(Scale)

struct WindowSpec {
  std::uint64_t index = 0;
  Scale scale = Scale::LONG;
  SimTime start = 0;
  std::uint64_t width_ms = 0;

  SimTime end() const { return start + width_ms; }
};

inline constexpr std::size_t kAutocorrSubBins = 10;

struct WindowFeatures {
  std::uint64_t window_index = 0;
  Scale scale = Scale::LONG;
  SimTime start = 0;
  std::uint64_t width_ms = 0;
  std::uint64_t promotion_count = 0;
  std::uint64_t demotion_count = 0;
  std::uint64_t msg_count = 0;
  // Absent with fewer than two events (or a zero mean for cv).
  std::optional<double> mean_interevent_ms;
  std::optional<double> cv_interevent;
  // Lag-1 autocorrelation of event counts over ten equal sub-bins; absent
  // when the sub-bin counts have zero variance.
  std::optional<double> lag1_autocorr;
  std::uint64_t active_users = 0;
  std::uint64_t premium_cdr_count = 0;
  std::int64_t premium_charge_sum = 0;
  std::uint64_t sms_out_count = 0;
  std::uint64_t distinct_peers = 0;

  bool operator==(const WindowFeatures&) const = default;
};

void to_json(json& j, const WindowFeatures& f);
void from_json(const json& j, WindowFeatures& f);

// Statistics over exactly [start, start + width). Events outside the window
// are ignored; CDRs are placed by completion time (cdr_time). Throws
// StreamError if either input is not sorted by time.
WindowFeatures extract_features(std::span<const SignalingEvent> events, std::span<const Cdr> cdrs,
                                const WindowSpec& window);

}  // namespace mobisec
