#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <future>
#include <mutex>
#include <thread>

#include "mobisec/engine.hpp"

namespace mobisec {

enum class RunState : std::uint8_t { IDLE, RUNNING };

template <>
struct EnumNames<RunState> {
  static constexpr std::array<std::string_view, 2> names{"IDLE", "RUNNING"};
};
MOBISEC_ENUM_JSON(RunState)

// Command refused because of the service state.
class StateError : public std::runtime_error {
 public:
  StateError(const std::string& what, RunState state) : std::runtime_error(what), state_(state) {}
  RunState state() const { return state_; }

 private:
  RunState state_;
};

struct Frame {
  std::string type;  // open, snapshot, alarm, metric, param_change, gap, close
  std::uint64_t seq = 0;
  json payload;
  std::string dump() const;
  bool operator==(const Frame&) const = default;
};

// Ordered frame log shared by every subscriber of one channel. Unbounded
// channels never lose a frame; bounded ones keep the newest `capacity` frames
// and tell a lagging reader how many it missed.
class Channel {
 public:
  explicit Channel(std::size_t capacity = 0);  // 0 = unbounded

  std::uint64_t publish(std::string type, json payload);
  void close();
  bool closed() const;
  std::uint64_t last_seq() const;

  struct Batch {
    std::vector<Frame> frames;  // may start with a gap frame
    bool closed = false;        // and every frame has been read
  };
  // Frames after `cursor`, waiting up to `wait` for at least one. Advances
  // the cursor past what it returns.
  Batch read(std::uint64_t& cursor, std::chrono::milliseconds wait) const;

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::deque<Frame> frames_;
  std::uint64_t next_seq_ = 1;
  bool closed_ = false;
};

struct ServiceOptions {
  std::optional<std::filesystem::path> out_dir;  // where finished runs are written
  std::size_t snapshot_buffer = 16;
  double max_snapshot_hz = 20.0;
  std::chrono::milliseconds command_timeout{10'000};
};

// Run control and fan-out, independent of the transport. The simulation runs
// on its own thread, which is the only one that touches it; other threads
// queue commands and wait for the acknowledgement.
class ServiceCore {
 public:
  explicit ServiceCore(ServiceOptions options = {});
  ~ServiceCore();
  ServiceCore(const ServiceCore&) = delete;
  ServiceCore& operator=(const ServiceCore&) = delete;

  RunState state() const;

  // START. Throws StateError unless idle, ValidationError for a bad config.
  json start(ScenarioConfig cfg);
  json stop();
  json inject(const AttackSpec& spec);
  json tune(const json& patch);
  json mark(const std::string& note);
  json manifest() const;

  // Blocks until the current run (if any) has finished and been written.
  void wait_idle() const;

  struct Subscription {
    std::shared_ptr<const Channel> channel;
    std::string name;
  };
  // Throws ValidationError for an unknown channel and StateError when no run
  // has been started yet.
  Subscription subscribe(const std::string& channel, double rate_hz = 1.0);

 private:
  struct Command {
    std::string kind;
    json arg;
    std::promise<json> done;
  };
  struct Run;

  json submit(std::string kind, json arg);
  void loop(std::shared_ptr<Run> run, Simulation& sim);
  void apply(Run& run, Simulation& sim, Command& cmd);

  ServiceOptions options_;
  mutable std::mutex mu_;
  mutable std::condition_variable idle_cv_;
  RunState state_ = RunState::IDLE;
  std::shared_ptr<Run> run_;
  std::thread worker_;
  std::uint64_t runs_started_ = 0;
  std::atomic<double> snapshot_hz_{1.0};
};

// HTTP + WebSocket front end on one port.
//   POST /run  DELETE /run  POST /attack  PATCH /detector  POST /mark
//   GET /manifest  GET /state  GET /stream?channel=alarms|metrics|snapshots[&rate_hz=]
class HttpServer {
 public:
  // Port 0 picks a free port. With a base scenario, POST /run bodies are
  // merge patches over it (an empty body starts the base as is).
  HttpServer(ServiceCore& core, const std::string& address, unsigned short port,
             std::optional<ScenarioConfig> base = std::nullopt);
  ~HttpServer();

  unsigned short port() const { return port_; }
  void start();  // accepts on a background thread
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  unsigned short port_ = 0;
};

}  // namespace mobisec
