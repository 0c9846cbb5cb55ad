#include "mobisec/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mobisec {

std::string_view truth_class_name(std::size_t row) {
  return row == 0 ? std::string_view("NORMAL") : to_string(static_cast<AttackClass>(row - 1));
}

std::string_view predicted_class_name(std::size_t col) {
  return col + 1 == kPredictedClasses ? std::string_view("UNTYPED") : truth_class_name(col);
}

double percentile(std::vector<double> xs, double p) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(xs.size())));
  return xs[std::clamp<std::size_t>(rank, 1, xs.size()) - 1];
}

namespace {

bool overlaps(SimTime a0, SimTime a1, SimTime b0, SimTime b1) { return a0 < b1 && b0 < a1; }

}  // namespace

RunReport report_run(const RecordedRun& run) {
  const auto& cfg = run.config;
  if (!cfg.labeled) {
    throw ValidationError("run " + run.manifest.value("config_hash", std::string("?")) +
                          " is unlabeled; re-run it with \"labeled\": true to report on it");
  }
  const std::uint64_t width = cfg.windows.width(cfg.detector.detection_scale);
  const std::uint64_t long_ms = cfg.windows.long_ms;
  const SimTime horizon = cfg.duration_ms;
  const SimTime detect_from =
      cfg.detector.baseline_path ? 0 : static_cast<SimTime>(cfg.detector.prefix_windows) * long_ms;

  RunReport r;
  r.config_hash = run.manifest.value("config_hash", std::string());
  r.seed = cfg.seed;
  for (const auto& name : EnumNames<DetectorKind>::names) r.false_alarms[std::string(name)] = 0;

  std::vector<const Alarm*> alarms;
  for (const auto& rec : run.alarms) {
    if (const auto* a = std::get_if<Alarm>(&rec)) alarms.push_back(a);
  }

  for (const auto& t : run.truth) {
    AttackOutcome o{t.attack_class, t.start, t.stop, std::nullopt, std::nullopt};
    for (const auto* a : alarms) {
      if (a->detector != DetectorKind::FUSED) continue;
      const SimTime w0 = a->t_raised - width;
      if (w0 < t.start - t.start % long_ms || !overlaps(w0, a->t_raised, t.start, t.stop)) continue;
      o.latency_windows = w0 / long_ms - t.start / long_ms;
      o.detected_class = a->attack_class;
      break;
    }
    r.attacks.push_back(o);
  }

  for (const auto* a : alarms) {
    const SimTime w0 = a->t_raised - width;
    bool true_alarm = false;
    for (const auto& t : run.truth) {
      if (!overlaps(w0, a->t_raised, t.start, t.stop)) continue;
      if (a->scope == AlarmScope::USER) {
        const auto& who = std::get<Pseudonym>(*a->user);
        if (std::find(t.infected.begin(), t.infected.end(), who) == t.infected.end()) continue;
      }
      true_alarm = true;
      break;
    }
    if (!true_alarm) ++r.false_alarms[std::string(to_string(a->detector))];
  }

  // Confusion over the detection windows after calibration.
  std::map<std::uint64_t, std::size_t> predicted;
  for (const auto* a : alarms) {
    if (a->detector != DetectorKind::FUSED) continue;
    predicted[a->window_index] =
        a->attack_class ? 1 + static_cast<std::size_t>(*a->attack_class) : kPredictedClasses - 1;
  }
  for (std::uint64_t w = detect_from / width; (w + 1) * width <= horizon; ++w) {
    const SimTime w0 = w * width;
    std::size_t row = 0;
    for (const auto& t : run.truth) {
      if (overlaps(w0, w0 + width, t.start, t.stop)) {
        row = 1 + static_cast<std::size_t>(t.attack_class);
        break;
      }
    }
    const auto it = predicted.find(w);
    const std::size_t col = it == predicted.end() ? 0 : it->second;
    ++r.confusion[row][col];
    ++r.windows_per_class[row];
  }

  std::vector<double> occ;
  for (const auto& m : run.metrics) occ.push_back(m.occupancy);
  r.occupancy_p50 = percentile(occ, 50);
  r.occupancy_p90 = percentile(occ, 90);
  r.occupancy_p99 = percentile(occ, 99);
  r.occupancy_max = occ.empty() ? 0.0 : *std::max_element(occ.begin(), occ.end());
  return r;
}

ReportSummary summarize(std::span<const RunReport> runs) {
  ReportSummary s;
  s.runs.assign(runs.begin(), runs.end());
  for (const auto& name : EnumNames<DetectorKind>::names) s.false_alarms[std::string(name)] = 0;
  for (const auto& r : runs) {
    for (const auto& [k, v] : r.false_alarms) s.false_alarms[k] += v;
    for (std::size_t i = 0; i < kTruthClasses; ++i) {
      for (std::size_t j = 0; j < kPredictedClasses; ++j) s.confusion[i][j] += r.confusion[i][j];
    }
    for (const auto& a : r.attacks) {
      ++s.attacks;
      if (a.latency_windows) ++s.detected;
    }
  }
  return s;
}

namespace {

json confusion_json(const ConfusionMatrix& m) {
  json rows = json::object();
  for (std::size_t i = 0; i < kTruthClasses; ++i) {
    json row = json::object();
    for (std::size_t j = 0; j < kPredictedClasses; ++j) row[std::string(predicted_class_name(j))] = m[i][j];
    rows[std::string(truth_class_name(i))] = row;
  }
  return rows;
}

}  // namespace

void to_json(json& j, const AttackOutcome& a) {
  j = json{{"attack_class", a.attack_class}, {"start", a.start}, {"stop", a.stop}};
  if (a.latency_windows) j["latency_windows"] = *a.latency_windows;
  else j["latency_windows"] = "MISSED";
  if (a.detected_class) j["detected_class"] = *a.detected_class;
}

void to_json(json& j, const RunReport& r) {
  json per_class = json::object();
  for (std::size_t i = 0; i < kTruthClasses; ++i) per_class[std::string(truth_class_name(i))] = r.windows_per_class[i];
  j = json{{"config_hash", r.config_hash},
           {"seed", r.seed},
           {"attacks", r.attacks},
           {"false_alarms", r.false_alarms},
           {"confusion", confusion_json(r.confusion)},
           {"windows_per_class", per_class},
           {"occupancy", {{"p50", r.occupancy_p50}, {"p90", r.occupancy_p90}, {"p99", r.occupancy_p99}, {"max", r.occupancy_max}}}};
}

void to_json(json& j, const ReportSummary& s) {
  j = json{{"format", "mobisec-report"},
           {"version", 1},
           {"runs", s.runs},
           {"false_alarms", s.false_alarms},
           {"confusion", confusion_json(s.confusion)},
           {"attacks", s.attacks},
           {"detected", s.detected}};
}

std::string render_text(const ReportSummary& s) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  for (std::size_t i = 0; i < s.runs.size(); ++i) {
    const auto& r = s.runs[i];
    out << "run " << i + 1 << "  seed " << r.seed << "  config " << r.config_hash.substr(0, 12) << '\n';
    for (const auto& a : r.attacks) {
      out << "  " << std::left << std::setw(16) << to_string(a.attack_class) << " [" << a.start << ", " << a.stop
          << ")  latency ";
      if (a.latency_windows) out << *a.latency_windows << " windows";
      else out << "MISSED";
      if (a.detected_class) out << "  typed " << to_string(*a.detected_class);
      out << '\n';
    }
    out << "  occupancy p50 " << r.occupancy_p50 << "  p90 " << r.occupancy_p90 << "  p99 " << r.occupancy_p99
        << "  max " << r.occupancy_max << '\n';
  }
  out << "\nfalse alarms\n";
  for (const auto& [k, v] : s.false_alarms) out << "  " << std::left << std::setw(12) << k << v << '\n';
  out << "\ndetected " << s.detected << " of " << s.attacks << " attacks\n\nconfusion (rows: truth)\n";
  out << std::setw(17) << "";
  for (std::size_t j = 0; j < kPredictedClasses; ++j) out << std::right << std::setw(17) << predicted_class_name(j);
  out << '\n';
  for (std::size_t i = 0; i < kTruthClasses; ++i) {
    out << std::left << std::setw(17) << truth_class_name(i);
    for (std::size_t j = 0; j < kPredictedClasses; ++j) out << std::right << std::setw(17) << s.confusion[i][j];
    out << '\n';
  }
  return out.str();
}

void write_report(const ReportSummary& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "summary.json") << json(s).dump(2) << '\n';
  std::ofstream(dir / "summary.txt") << render_text(s);
}

}  // namespace mobisec
