#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <queue>
#include <unordered_map>

#include "mobisec/attacks.hpp"
#include "mobisec/config.hpp"
#include "mobisec/kernels.hpp"
#include "mobisec/pipeline.hpp"
#include "mobisec/queueing.hpp"

namespace mobisec {

inline constexpr const char* kToolVersion = "0.4.0";

struct MetricsRow {
  SimTime window_start = 0;
  double occupancy = 0.0;       // time-averaged queue backlog over the window
  double promotion_rate = 0.0;  // per second
  double msg_rate = 0.0;        // per second
  std::uint64_t alarm_count = 0;
  bool operator==(const MetricsRow&) const = default;
};

// Ground truth for one attack, identifying the infected users by pseudonym.
struct TruthInterval {
  AttackClass attack_class = AttackClass::SIGNALING_STORM;
  SimTime start = 0;
  SimTime stop = 0;
  std::vector<Pseudonym> infected;
  std::string origin;  // "config" or "inject"
  bool operator==(const TruthInterval&) const = default;
};

void to_json(json& j, const TruthInterval& t);
void from_json(const json& j, TruthInterval& t);

// Control command as recorded in the manifest.
struct Annotation {
  std::string command;  // START, STOP, INJECT, TUNE, MARK
  SimTime received_at = 0;
  SimTime applied_at = 0;
  json payload;
  bool operator==(const Annotation&) const = default;
};

void to_json(json& j, const Annotation& a);
void from_json(const json& j, Annotation& a);

struct RunOutput {
  ScenarioConfig config;
  std::vector<SignalingEvent> events;
  std::vector<Cdr> cdrs;      // sanitized
  std::vector<Cdr> raw_cdrs;  // engine-internal, never written out
  std::vector<StreamRecord> alarms;
  std::vector<MetricsRow> metrics;
  std::vector<TruthInterval> truth;
  std::vector<WindowFeatures> long_windows;
  std::vector<Annotation> annotations;
  QueueStats queue;
  std::uint64_t sessions_planned = 0;
  std::uint64_t attack_actions = 0;
  std::optional<BaselineModel> baseline;
};

struct Snapshot {
  SimTime t = 0;
  std::array<std::uint64_t, 3> rrc_histogram{};
  double msg_rate = 0.0;
  std::uint64_t queue_backlog = 0;
  std::vector<Alarm> recent_alarms;
  std::vector<AttackSpec> active_attacks;
  DetectorConfig detector;
};

void to_json(json& j, const Snapshot& s);

struct CommandAck {
  std::string command;
  SimTime received_at = 0;
  SimTime applied_at = 0;
  std::optional<std::uint64_t> window_index;
};

void to_json(json& j, const CommandAck& a);

// Discrete-event simulation of one scenario. Single-threaded: every method
// must be called from the thread that owns the object.
class Simulation {
 public:
  static constexpr std::size_t kRecentAlarms = 50;

  explicit Simulation(ScenarioConfig cfg);

  SimTime now() const { return now_; }
  SimTime horizon() const { return horizon_; }
  bool done() const { return now_ >= horizon_; }

  // Processes every event strictly before min(t, horizon).
  void run_until(SimTime t);
  // Runs to the horizon, completes sessions still in progress and returns
  // the streams. The simulation cannot be advanced afterwards.
  RunOutput finish();

  // Live control, applied at the next detection-window boundary.
  CommandAck inject(AttackSpec spec);
  CommandAck tune(const json& patch);
  CommandAck mark(const std::string& note);
  // Ends the run at the current time.
  CommandAck stop();
  void record_start();

  Snapshot snapshot();

  // Receives each alarm or marker as the detector emits it.
  void set_record_sink(std::function<void(const StreamRecord&)> sink) { record_sink_ = std::move(sink); }
  void set_metric_sink(std::function<void(const MetricsRow&)> sink) { metric_sink_ = std::move(sink); }

  const ScenarioConfig& config() const { return cfg_; }

 private:
  enum class Kind : std::uint8_t { kSessionStart, kSessionEnd, kTimer, kAttack };
  struct Item {
    SimTime t;
    std::uint64_t seq;
    Kind kind;
    std::uint32_t a;  // user index or plan index
    std::uint64_t b;  // session index, timer generation or action index
    bool operator>(const Item& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };

  void push(SimTime t, Kind kind, std::uint32_t a, std::uint64_t b);
  void process(const Item& it);
  void activity(std::uint32_t u, SimTime t, Demand demand, std::optional<AttackClass> label);
  void record_event(SignalingEvent e);
  void emit_cdr(const Completion& c);
  void sync_to(SimTime t);
  void add_attack(AttackSpec spec, const std::string& origin);
  const Pseudonym& pseudonym(UeId id);

  ScenarioConfig cfg_;
  Salt salt_;
  SimTime horizon_;
  SimTime now_ = 0;
  bool finished_ = false;

  std::vector<UeId> ids_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_of_;
  kernels::SessionTable sessions_;
  std::vector<std::size_t> next_session_;
  std::vector<UeState> states_;
  std::vector<std::uint64_t> timer_gen_;
  std::array<std::uint64_t, 3> histogram_{};

  std::priority_queue<Item, std::vector<Item>, std::greater<>> agenda_;
  std::uint64_t seq_ = 0;
  std::vector<AttackPlan> plans_;
  std::vector<AttackSpec> specs_;

  SignalingQueue queue_;
  Rng queue_rng_;
  double area_at_boundary_ = 0.0;
  SimTime next_boundary_;
  double pending_occupancy_ = 0.0;
  std::uint64_t alarms_in_window_ = 0;
  double last_msg_rate_ = 0.0;

  std::unique_ptr<DetectorPipeline> pipeline_;
  std::unordered_map<std::uint64_t, Pseudonym> pseudonyms_;
  std::deque<Alarm> recent_;
  std::uint64_t next_record_id_ = 0;

  RunOutput out_;
  std::function<void(const StreamRecord&)> record_sink_;
  std::function<void(const MetricsRow&)> metric_sink_;
};

RunOutput run(const ScenarioConfig& cfg);

// Uniform sample of n distinct population indices, sorted.
std::vector<std::uint32_t> sample_infected(std::uint64_t master_seed, std::uint64_t ordinal, std::uint64_t population,
                                           std::uint32_t n);

// Per-stream digests of a written run.
struct StreamDigest {
  std::string file;
  std::uint64_t lines = 0;
  std::string sha256;
};

// Writes events.jsonl, cdrs.jsonl, alarms.jsonl, metrics.csv, truth.jsonl
// (labeled runs only), config.json and manifest.json. Returns the manifest.
json write_run(const RunOutput& out, const std::filesystem::path& dir);

std::string event_line(const SignalingEvent& e);
std::string cdr_line(const Cdr& c);
std::string metrics_header();
std::string metrics_line(const MetricsRow& m);

struct RecordedRun {
  ScenarioConfig config;
  json manifest;
  std::vector<SignalingEvent> events;
  std::vector<Cdr> cdrs;
  std::vector<StreamRecord> alarms;
  std::vector<MetricsRow> metrics;
  std::vector<TruthInterval> truth;
};

// Reads a run directory, checking every stream it loads against the
// manifest. Throws StreamError on a missing, truncated or altered stream.
// Without traffic, the event and CDR streams are neither read nor checked.
RecordedRun load_run(const std::filesystem::path& dir, bool with_traffic = true);

// Builds the detector the run's config describes (baseline and model files
// included).
std::unique_ptr<DetectorPipeline> make_pipeline(const ScenarioConfig& cfg, const DetectorConfig& detector);

// Feeds the recorded streams through a fresh detector, re-applying the
// recorded parameter markers. With the run's own detector config this
// reproduces the recorded alarm stream.
std::vector<StreamRecord> replay(const RecordedRun& run, const DetectorConfig& detector);
std::vector<StreamRecord> replay(const RecordedRun& run);

struct ReplayOutput {
  std::vector<StreamRecord> records;
  std::vector<WindowFeatures> long_windows;
  std::optional<BaselineModel> baseline;
};
// Without markers the recorded TUNE/INJECT changes are not re-applied.
ReplayOutput replay_detailed(const RecordedRun& run, const DetectorConfig& detector, bool markers = true);

// Baseline from a whole recorded run, every complete LONG window treated as
// normal behaviour. Throws ValidationError for a run that carries attacks or
// is too short for the calibration parameters.
BaselineModel calibrate_run(const RecordedRun& run, const CalibrationParams& params);

// LONG windows labeled from the truth intervals: a window inside an attack
// interval takes its class (BOTNET_DDOS windows are skipped), a window
// touching none is NORMAL, a partial overlap is dropped.
std::vector<LabeledWindow> labeled_windows(std::span<const WindowFeatures> windows,
                                           std::span<const TruthInterval> truth);

}  // namespace mobisec
