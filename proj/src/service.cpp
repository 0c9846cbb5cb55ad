#include "mobisec/service.hpp"

#include <algorithm>

namespace mobisec {

std::string Frame::dump() const { return json{{"type", type}, {"seq", seq}, {"payload", payload}}.dump(); }

Channel::Channel(std::size_t capacity) : capacity_(capacity) {}

std::uint64_t Channel::publish(std::string type, json payload) {
  std::uint64_t seq = 0;
  {
    std::lock_guard lock(mu_);
    if (closed_) throw ContractViolation("publish on a closed channel");
    seq = next_seq_++;
    frames_.push_back(Frame{std::move(type), seq, std::move(payload)});
    if (capacity_ != 0 && frames_.size() > capacity_) frames_.pop_front();
  }
  cv_.notify_all();
  return seq;
}

void Channel::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Channel::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::uint64_t Channel::last_seq() const {
  std::lock_guard lock(mu_);
  return next_seq_ - 1;
}

Channel::Batch Channel::read(std::uint64_t& cursor, std::chrono::milliseconds wait) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, wait, [&] { return closed_ || next_seq_ - 1 > cursor; });
  Batch b;
  if (!frames_.empty()) {
    const std::uint64_t first = frames_.front().seq;
    if (cursor + 1 < first) {
      // The reader fell behind a bounded buffer.
      b.frames.push_back(Frame{"gap", cursor + 1, json{{"skipped", first - cursor - 1}}});
      cursor = first - 1;
    }
    for (std::size_t i = cursor + 1 - first; i < frames_.size(); ++i) b.frames.push_back(frames_[i]);
    cursor = next_seq_ - 1;
  }
  b.closed = closed_ && cursor + 1 >= next_seq_;
  return b;
}

struct ServiceCore::Run {
  std::uint64_t id = 0;
  ScenarioConfig cfg;
  std::shared_ptr<Channel> alarms = std::make_shared<Channel>();
  std::shared_ptr<Channel> metrics = std::make_shared<Channel>();
  std::shared_ptr<Channel> snapshots;

  std::mutex mu;
  std::condition_variable inbox_cv;
  std::deque<std::unique_ptr<Command>> inbox;
  json annotations = json::array();
  SimTime sim_time = 0;
  json written;  // manifest of the finished run, if written out
  std::optional<std::string> error;
};

ServiceCore::ServiceCore(ServiceOptions options) : options_(std::move(options)) {}

ServiceCore::~ServiceCore() {
  try {
    if (state() == RunState::RUNNING) stop();
  } catch (...) {
  }
  if (worker_.joinable()) worker_.join();
}

RunState ServiceCore::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

json ServiceCore::start(ScenarioConfig cfg) {
  std::unique_lock lock(mu_);
  if (state_ != RunState::IDLE) throw StateError("a scenario is already running", state_);
  auto sim = std::make_unique<Simulation>(cfg);  // validates before any state changes
  if (worker_.joinable()) worker_.join();

  auto run = std::make_shared<Run>();
  run->id = ++runs_started_;
  run->cfg = cfg;
  run->snapshots = std::make_shared<Channel>(options_.snapshot_buffer);
  sim->record_start();
  run->annotations.push_back(json{{"command", "START"}, {"received_at", 0}, {"applied_at", 0}});
  run_ = run;
  state_ = RunState::RUNNING;
  worker_ = std::thread([this, run, s = std::move(sim)]() mutable {
    try {
      loop(run, *s);
    } catch (const std::exception& e) {
      std::lock_guard g(run->mu);
      run->error = e.what();
    }
    run->alarms->close();
    run->metrics->close();
    run->snapshots->close();
    {
      std::lock_guard g(run->mu);
      for (auto& cmd : run->inbox) {
        cmd->done.set_exception(std::make_exception_ptr(StateError("the run has ended", RunState::IDLE)));
      }
      run->inbox.clear();
    }
    s.reset();
    {
      std::lock_guard g(mu_);
      state_ = RunState::IDLE;
    }
    idle_cv_.notify_all();
  });
  return json{{"state", RunState::RUNNING},
              {"run_id", run->id},
              {"ack", {{"command", "START"}, {"received_at", 0}, {"applied_at", 0}}}};
}

void ServiceCore::loop(std::shared_ptr<Run> run, Simulation& sim) {
  sim.set_record_sink([&run](const StreamRecord& r) {
    if (const auto* a = std::get_if<Alarm>(&r)) run->alarms->publish("alarm", json(*a));
    else run->alarms->publish("param_change", json(std::get<Marker>(r)));
  });
  sim.set_metric_sink([&run](const MetricsRow& m) {
    run->metrics->publish("metric", json{{"window_start", m.window_start},
                                         {"occupancy", m.occupancy},
                                         {"promotion_rate", m.promotion_rate},
                                         {"msg_rate", m.msg_rate},
                                         {"alarm_count", m.alarm_count}});
  });

  using clock = std::chrono::steady_clock;
  const auto wall0 = clock::now();
  auto next_snapshot = wall0;
  const double speed = run->cfg.speed;
  constexpr SimTime kChunk = 60'000;
  bool stopped = false;

  while (!stopped && !sim.done()) {
    std::deque<std::unique_ptr<Command>> batch;
    {
      std::lock_guard g(run->mu);
      batch.swap(run->inbox);
    }
    for (auto& cmd : batch) {
      apply(*run, sim, *cmd);
      if (cmd->kind == "STOP") stopped = true;
    }
    if (stopped) break;

    const auto now = clock::now();
    const double elapsed_ms = std::chrono::duration<double, std::milli>(now - wall0).count();
    const auto target = static_cast<SimTime>(std::min(elapsed_ms * speed, 1.8e19));
    if (target > sim.now()) {
      sim.run_until(std::min(target, sim.now() + kChunk));
    } else {
      std::unique_lock g(run->mu);
      run->inbox_cv.wait_for(g, std::chrono::milliseconds(5), [&] { return !run->inbox.empty(); });
    }
    {
      std::lock_guard g(run->mu);
      run->sim_time = sim.now();
    }
    if (clock::now() >= next_snapshot) {
      run->snapshots->publish("snapshot", json(sim.snapshot()));
      const auto period = std::chrono::duration_cast<clock::duration>(
          std::chrono::duration<double>(1.0 / snapshot_hz_.load()));
      next_snapshot = std::max(next_snapshot + period, clock::now());
    }
  }

  run->snapshots->publish("snapshot", json(sim.snapshot()));
  auto out = sim.finish();
  json manifest;
  if (options_.out_dir) {
    manifest = write_run(out, *options_.out_dir / ("run-" + std::to_string(run->id)));
  } else {
    manifest = json{{"format", "mobisec-run"},
                    {"version", 1},
                    {"seed", out.config.seed},
                    {"config_hash", config_hash(out.config)},
                    {"duration_ms", out.config.duration_ms},
                    {"annotations", out.annotations}};
  }
  std::lock_guard g(run->mu);
  run->sim_time = out.config.duration_ms;
  run->written = std::move(manifest);
}

void ServiceCore::apply(Run& run, Simulation& sim, Command& cmd) {
  try {
    CommandAck ack;
    json payload;
    if (cmd.kind == "STOP") {
      ack = sim.stop();
    } else if (cmd.kind == "INJECT") {
      payload = cmd.arg;
      ack = sim.inject(cmd.arg.get<AttackSpec>());
    } else if (cmd.kind == "TUNE") {
      payload = cmd.arg;
      ack = sim.tune(cmd.arg);
    } else if (cmd.kind == "MARK") {
      payload = json{{"note", cmd.arg}};
      ack = sim.mark(cmd.arg.get<std::string>());
    } else {
      throw ValidationError("unknown command " + cmd.kind);
    }
    json a = ack;
    {
      std::lock_guard g(run.mu);
      json note{{"command", ack.command}, {"received_at", ack.received_at}, {"applied_at", ack.applied_at}};
      if (!payload.is_null()) note["payload"] = payload;
      run.annotations.push_back(std::move(note));
    }
    cmd.done.set_value(a);
  } catch (const json::exception& e) {
    cmd.done.set_exception(std::make_exception_ptr(ValidationError(e.what())));
  } catch (...) {
    cmd.done.set_exception(std::current_exception());
  }
}

json ServiceCore::submit(std::string kind, json arg) {
  std::future<json> result;
  {
    std::lock_guard lock(mu_);
    if (state_ != RunState::RUNNING) {
      throw StateError(kind + " needs a running scenario; the service is " + std::string(to_string(state_)), state_);
    }
    auto cmd = std::make_unique<Command>();
    cmd->kind = std::move(kind);
    cmd->arg = std::move(arg);
    result = cmd->done.get_future();
    {
      std::lock_guard g(run_->mu);
      run_->inbox.push_back(std::move(cmd));
    }
    run_->inbox_cv.notify_all();
  }
  if (result.wait_for(options_.command_timeout) != std::future_status::ready) {
    throw StreamError("the engine did not acknowledge the command in time");
  }
  return result.get();
}

json ServiceCore::stop() { return submit("STOP", json()); }
json ServiceCore::inject(const AttackSpec& spec) { return submit("INJECT", json(spec)); }
json ServiceCore::tune(const json& patch) { return submit("TUNE", patch); }
json ServiceCore::mark(const std::string& note) { return submit("MARK", note); }

json ServiceCore::manifest() const {
  std::shared_ptr<Run> run;
  RunState st;
  {
    std::lock_guard lock(mu_);
    run = run_;
    st = state_;
  }
  if (!run) return json{{"state", st}};
  std::lock_guard g(run->mu);
  json m = run->written.is_null() ? json{{"seed", run->cfg.seed}, {"config_hash", config_hash(run->cfg)}}
                                  : run->written;
  m["state"] = st;
  m["run_id"] = run->id;
  m["sim_time"] = run->sim_time;
  if (run->written.is_null()) m["annotations"] = run->annotations;
  if (run->error) m["error"] = *run->error;
  return m;
}

void ServiceCore::wait_idle() const {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [&] { return state_ == RunState::IDLE; });
}

ServiceCore::Subscription ServiceCore::subscribe(const std::string& channel, double rate_hz) {
  if (!(rate_hz > 0.0)) throw ValidationError("rate_hz must be > 0");
  std::lock_guard lock(mu_);
  if (channel != "alarms" && channel != "metrics" && channel != "snapshots") {
    throw ValidationError("unknown channel '" + channel + "' (alarms, metrics, snapshots)");
  }
  if (!run_) throw StateError("no scenario has been started", state_);
  if (channel == "alarms") return {run_->alarms, channel};
  if (channel == "metrics") return {run_->metrics, channel};
  const double hz = std::min(rate_hz, options_.max_snapshot_hz);
  double cur = snapshot_hz_.load();
  while (hz > cur && !snapshot_hz_.compare_exchange_weak(cur, hz)) {
  }
  return {run_->snapshots, channel};
}

}  // namespace mobisec
