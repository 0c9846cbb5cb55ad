#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "mobisec/baseline.hpp"
#include "mobisec/classifier.hpp"
#include "mobisec/config.hpp"

namespace mobisec {

// Parameter change recorded in the alarm stream. window_index is the first
// detection-scale window the change is in force for; t is that window's start.
struct Marker {
  std::string kind;  // "tune" or "inject"
  std::uint64_t window_index = 0;
  SimTime t = 0;
  json payload;
  bool operator==(const Marker&) const = default;
};

using StreamRecord = std::variant<Alarm, Marker>;

void to_json(json& j, const Marker& m);
void from_json(const json& j, Marker& m);
json record_to_json(const StreamRecord& r);
StreamRecord record_from_json(const json& j);

// Streaming detector. Consumes the signaling log and the sanitized CDR stream
// in time order and emits alarms as windows close. It sees nothing the
// recorded streams do not contain, so replaying them reproduces its output.
class DetectorPipeline {
 public:
  using RecordSink = std::function<void(const StreamRecord&)>;
  // Called for every closed window, with the number of records emitted at its
  // close.
  using WindowSink = std::function<void(const WindowFeatures&, std::size_t)>;

  DetectorPipeline(DetectorConfig cfg, WindowConfig windows, SimTime horizon,
                   std::optional<BaselineModel> baseline = std::nullopt,
                   std::shared_ptr<const ClassifierModel> model = nullptr);

  void set_record_sink(RecordSink sink) { record_sink_ = std::move(sink); }
  void set_window_sink(WindowSink sink) { window_sink_ = std::move(sink); }

  // Items at or after the horizon are ignored. Throws StreamError if t goes
  // backwards, or if a CDR still carries raw identifiers.
  void push_event(const SignalingEvent& e);
  void push_cdr(const Cdr& c);
  // Closes every window that ends at or before t.
  void advance_to(SimTime t);
  // Closes the remaining windows up to the horizon.
  void finish();
  // Moves the horizon earlier (a stopped run). Throws ContractViolation if
  // the pipeline has already passed it.
  void truncate(SimTime horizon);
  SimTime horizon() const { return horizon_; }

  // Validates a TUNE patch against the parameters in force and schedules it
  // for the next detection window. Returns the marker.
  Marker schedule_tune(const json& patch);
  // Records an INJECT marker for the next detection window. Returns it.
  Marker schedule_inject(const json& spec);
  // Re-schedules a marker read from a recorded stream.
  void schedule(const Marker& m);

  // Index of the detection window currently open.
  std::uint64_t open_window() const;
  std::uint64_t detection_width() const { return windows_.width(cfg_.detection_scale); }

  const DetectorConfig& config() const { return cfg_; }
  const std::optional<BaselineModel>& baseline() const { return baseline_; }
  const std::vector<StreamRecord>& records() const { return records_; }
  const std::vector<WindowFeatures>& long_windows() const { return long_features_; }
  SimTime clock() const { return clock_; }

 private:
  struct ScaleBuffer {
    Scale scale;
    std::uint64_t width;
    std::uint64_t next_index = 0;
    std::vector<SignalingEvent> events;
    std::vector<Cdr> cdrs;
  };

  void close_window(ScaleBuffer& buf);
  void detect(const WindowFeatures& f);
  void score_users(const ScaleBuffer& buf, std::uint64_t index, SimTime end, bool emit);
  void begin_detection_window(std::uint64_t index);
  void emit(StreamRecord r);

  DetectorConfig cfg_;
  WindowConfig windows_;
  SimTime horizon_;
  std::optional<BaselineModel> baseline_;
  std::shared_ptr<const ClassifierModel> model_;
  RecordSink record_sink_;
  WindowSink window_sink_;

  SimTime clock_ = 0;
  ScaleBuffer short_;
  ScaleBuffer long_;
  CusumState cusum_;
  BayesState bayes_;
  std::map<Pseudonym, UserBaseline> users_;
  std::vector<WindowFeatures> prefix_;
  std::vector<WindowFeatures> long_features_;
  std::map<std::uint64_t, std::vector<Marker>> pending_;
  std::vector<StreamRecord> records_;
  std::size_t emitted_in_window_ = 0;
};

}  // namespace mobisec
