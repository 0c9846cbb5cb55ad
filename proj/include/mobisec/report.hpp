#pragma once

#include <filesystem>

#include "mobisec/engine.hpp"

namespace mobisec {

// Rows and columns: NORMAL followed by every AttackClass; columns add UNTYPED
// for FUSED alarms that name no class.
inline constexpr std::size_t kTruthClasses = 1 + enum_count<AttackClass>();
inline constexpr std::size_t kPredictedClasses = kTruthClasses + 1;
using ConfusionMatrix = std::array<std::array<std::uint64_t, kPredictedClasses>, kTruthClasses>;

std::string_view truth_class_name(std::size_t row);
std::string_view predicted_class_name(std::size_t col);

struct AttackOutcome {
  AttackClass attack_class = AttackClass::SIGNALING_STORM;
  SimTime start = 0;
  SimTime stop = 0;
  std::optional<std::uint64_t> latency_windows;  // nullopt: MISSED
  std::optional<AttackClass> detected_class;     // class named by that alarm
  bool operator==(const AttackOutcome&) const = default;
};

struct RunReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<AttackOutcome> attacks;
  std::map<std::string, std::uint64_t> false_alarms;  // detector name -> count
  ConfusionMatrix confusion{};
  std::array<std::uint64_t, kTruthClasses> windows_per_class{};
  double occupancy_p50 = 0.0;
  double occupancy_p90 = 0.0;
  double occupancy_p99 = 0.0;
  double occupancy_max = 0.0;
  bool operator==(const RunReport&) const = default;
};

struct ReportSummary {
  std::vector<RunReport> runs;
  std::map<std::string, std::uint64_t> false_alarms;
  ConfusionMatrix confusion{};
  std::uint64_t attacks = 0;
  std::uint64_t detected = 0;
  bool operator==(const ReportSummary&) const = default;
};

// Throws ValidationError for an unlabeled run.
RunReport report_run(const RecordedRun& run);
ReportSummary summarize(std::span<const RunReport> runs);

// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
double percentile(std::vector<double> xs, double p);

void to_json(json& j, const AttackOutcome& a);
void to_json(json& j, const RunReport& r);
void to_json(json& j, const ReportSummary& s);
std::string render_text(const ReportSummary& s);

// Writes summary.json and summary.txt.
void write_report(const ReportSummary& s, const std::filesystem::path& dir);

}  // namespace mobisec
