#include "mobisec/engine.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mobisec/crypto.hpp"

namespace mobisec {

void to_json(json& j, const TruthInterval& t) {
  std::vector<std::string> infected;
  infected.reserve(t.infected.size());
  for (const auto& p : t.infected) infected.push_back(p.hex());
  j = json{{"attack_class", t.attack_class}, {"start", t.start}, {"stop", t.stop},
           {"infected", infected},           {"origin", t.origin}};
}

void from_json(const json& j, TruthInterval& t) {
  t.attack_class = j.at("attack_class").get<AttackClass>();
  t.start = j.at("start").get<SimTime>();
  t.stop = j.at("stop").get<SimTime>();
  t.infected.clear();
  for (const auto& p : j.at("infected")) t.infected.push_back(p.get<Pseudonym>());
  t.origin = j.at("origin").get<std::string>();
}

void to_json(json& j, const Annotation& a) {
  j = json{{"command", a.command}, {"received_at", a.received_at}, {"applied_at", a.applied_at}};
  if (!a.payload.is_null()) j["payload"] = a.payload;
}

void from_json(const json& j, Annotation& a) {
  a.command = j.at("command").get<std::string>();
  a.received_at = j.at("received_at").get<SimTime>();
  a.applied_at = j.at("applied_at").get<SimTime>();
  a.payload = j.value("payload", json());
}

void to_json(json& j, const Snapshot& s) {
  json alarms = json::array();
  for (const auto& a : s.recent_alarms) alarms.push_back(a);
  j = json{{"t", s.t},
           {"rrc_state_histogram", {{"IDLE", s.rrc_histogram[0]}, {"FACH", s.rrc_histogram[1]}, {"DCH", s.rrc_histogram[2]}}},
           {"msg_rate", s.msg_rate},
           {"queue_backlog", s.queue_backlog},
           {"recent_alarms", alarms},
           {"active_attacks", s.active_attacks},
           {"detector", s.detector}};
}

void to_json(json& j, const CommandAck& a) {
  j = json{{"command", a.command}, {"received_at", a.received_at}, {"applied_at", a.applied_at}};
  if (a.window_index) j["window_index"] = *a.window_index;
}

std::vector<std::uint32_t> sample_infected(std::uint64_t master_seed, std::uint64_t ordinal, std::uint64_t population,
                                           std::uint32_t n) {
  if (n > population) throw ValidationError("cannot infect more users than the population");
  std::vector<std::uint32_t> idx(population);
  std::iota(idx.begin(), idx.end(), 0u);
  Rng rng(master_seed, StreamTag::kInfected, ordinal);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto j = i + rng.below(population - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::unique_ptr<DetectorPipeline> make_pipeline(const ScenarioConfig& cfg, const DetectorConfig& detector) {
  std::optional<BaselineModel> baseline;
  if (detector.baseline_path) {
    std::ifstream in(*detector.baseline_path);
    if (!in) throw ValidationError("cannot open baseline " + *detector.baseline_path);
    baseline = json::parse(in).get<BaselineModel>();
  }
  std::shared_ptr<const ClassifierModel> model;
  if (detector.model_path) {
    std::ifstream in(*detector.model_path);
    if (!in) throw ValidationError("cannot open classifier model " + *detector.model_path);
    model = std::make_shared<const ClassifierModel>(json::parse(in).get<ClassifierModel>());
  }
  return std::make_unique<DetectorPipeline>(detector, cfg.windows, cfg.duration_ms, std::move(baseline),
                                            std::move(model));
}

Simulation::Simulation(ScenarioConfig cfg)
    : cfg_(std::move(cfg)),
      horizon_(cfg_.duration_ms),
      queue_(cfg_.service_rate_per_s),
      queue_rng_(cfg_.seed, StreamTag::kQueue, 0),
      next_boundary_(cfg_.windows.long_ms) {
  cfg_.validate();
  salt_ = cfg_.effective_salt();
  out_.config = cfg_;

  std::vector<UeProfile> profiles;
  if (cfg_.profiles_csv) {
    profiles = load_profiles_csv(*cfg_.profiles_csv, cfg_.profile);
    if (profiles.size() != cfg_.population) {
      throw ValidationError("profiles file has " + std::to_string(profiles.size()) + " rows but population is " +
                            std::to_string(cfg_.population));
    }
  } else {
    std::vector<UeId> ids(cfg_.population);
    for (std::uint64_t i = 0; i < cfg_.population; ++i) ids[i] = make_ue_id(cfg_.seed, i);
    profiles = homogeneous_population(cfg_.profile, ids);
  }
  ids_.reserve(profiles.size());
  for (std::uint32_t i = 0; i < profiles.size(); ++i) {
    ids_.push_back(profiles[i].ue);
    if (!index_of_.emplace(profiles[i].ue.value, i).second) throw ValidationError("duplicate ue id in population");
  }

  sessions_ = kernels::generate_sessions(profiles, cfg_.seed, horizon_, cfg_.diurnal);
  next_session_.assign(ids_.size(), 0);
  timer_gen_.assign(ids_.size(), 0);
  states_.resize(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) states_[i].ue = ids_[i];
  histogram_[static_cast<std::size_t>(RrcState::IDLE)] = ids_.size();
  for (std::uint32_t u = 0; u < sessions_.size(); ++u) {
    if (!sessions_[u].empty()) push(sessions_[u][0].t, Kind::kSessionStart, u, 0);
  }

  pipeline_ = make_pipeline(cfg_, cfg_.detector);
  pipeline_->set_record_sink([this](const StreamRecord& r) {
    if (const auto* a = std::get_if<Alarm>(&r)) {
      ++alarms_in_window_;
      recent_.push_back(*a);
      if (recent_.size() > kRecentAlarms) recent_.pop_front();
    }
    if (record_sink_) record_sink_(r);
  });
  pipeline_->set_window_sink([this](const WindowFeatures& f, std::size_t) {
    const double seconds = static_cast<double>(f.width_ms) / 1000.0;
    if (f.scale == Scale::SHORT) {
      last_msg_rate_ = static_cast<double>(f.msg_count) / seconds;
      return;
    }
    MetricsRow row{f.start, pending_occupancy_, static_cast<double>(f.promotion_count) / seconds,
                   static_cast<double>(f.msg_count) / seconds, alarms_in_window_};
    alarms_in_window_ = 0;
    out_.metrics.push_back(row);
    if (metric_sink_) metric_sink_(row);
  });

  for (const auto& spec : cfg_.attacks) add_attack(spec, "config");
}

void Simulation::push(SimTime t, Kind kind, std::uint32_t a, std::uint64_t b) {
  agenda_.push(Item{t, seq_++, kind, a, b});
}

const Pseudonym& Simulation::pseudonym(UeId id) {
  auto it = pseudonyms_.find(id.value);
  if (it == pseudonyms_.end()) it = pseudonyms_.emplace(id.value, pseudonymize(id, salt_)).first;
  return it->second;
}

void Simulation::add_attack(AttackSpec spec, const std::string& origin) {
  const auto ordinal = plans_.size();
  const auto picks = sample_infected(cfg_.seed, ordinal, ids_.size(), spec.n_infected);
  std::vector<UeId> infected;
  infected.reserve(picks.size());
  for (auto i : picks) infected.push_back(ids_[i]);
  Rng rng(cfg_.seed, StreamTag::kAttack, ordinal);
  plans_.push_back(compile_attack(spec, infected, cfg_.rrc, rng));
  specs_.push_back(spec);
  const auto& plan = plans_.back();
  for (std::uint64_t i = 0; i < plan.actions.size(); ++i) {
    push(plan.actions[i].t, Kind::kAttack, static_cast<std::uint32_t>(ordinal), i);
  }
  out_.attack_actions += plan.actions.size();
  if (cfg_.labeled) {
    TruthInterval truth{spec.attack_class, spec.start, spec.stop, {}, origin};
    for (const auto& id : infected) truth.infected.push_back(pseudonym(id));
    out_.truth.push_back(std::move(truth));
  }
}

void Simulation::record_event(SignalingEvent e) {
  if (!cfg_.labeled) e.truth_label.reset();
  --histogram_[static_cast<std::size_t>(e.from)];
  ++histogram_[static_cast<std::size_t>(e.to)];
  queue_.offer(e.t, e.msg_cost, queue_rng_);
  SignalingEvent unlabeled = e;
  unlabeled.truth_label.reset();
  pipeline_->push_event(unlabeled);
  out_.events.push_back(std::move(e));
}

void Simulation::activity(std::uint32_t u, SimTime t, Demand demand, std::optional<AttackClass> label) {
  auto step = on_activity(states_[u], t, demand, cfg_.rrc, label);
  for (auto& e : step.events) record_event(std::move(e));
  states_[u] = std::move(step.state);
  if (const auto& timer = states_[u].pending_timer) push(timer->deadline, Kind::kTimer, u, ++timer_gen_[u]);
}

void Simulation::emit_cdr(const Completion& c) {
  const Cdr raw = mobisec::emit_cdr(c, cfg_.tariff);
  Cdr clean = raw;
  clean.ue = pseudonym(c.ue);
  clean.peer = pseudonym(c.peer);
  clean.truth_label.reset();
  if (cdr_time(clean) < horizon_) pipeline_->push_cdr(clean);
  out_.raw_cdrs.push_back(raw);
  out_.cdrs.push_back(std::move(clean));
}

namespace {

CdrKind session_kind(const SessionPlan& s) {
  switch (s.demand) {
    case Demand::VOICE:
      return s.premium ? CdrKind::PREMIUM_CALL : CdrKind::VOICE;
    case Demand::SMS:
      return s.premium ? CdrKind::PREMIUM_SMS : CdrKind::SMS;
    default:
      return CdrKind::DATA;
  }
}

}  // namespace

void Simulation::process(const Item& it) {
  switch (it.kind) {
    case Kind::kSessionStart: {
      const auto& s = sessions_[it.a][it.b];
      activity(it.a, it.t, s.demand, std::nullopt);
      ++out_.sessions_planned;
      push(it.t + s.duration_ms, Kind::kSessionEnd, it.a, it.b);
      if (it.b + 1 < sessions_[it.a].size()) push(sessions_[it.a][it.b + 1].t, Kind::kSessionStart, it.a, it.b + 1);
      break;
    }
    case Kind::kSessionEnd: {
      const auto& s = sessions_[it.a][it.b];
      Completion c;
      c.record_id = next_record_id_++;
      c.ue = s.ue;
      c.peer = s.peer;
      c.kind = session_kind(s);
      c.start = s.t;
      c.duration_ms = s.duration_ms;
      c.volume_bytes = s.volume_bytes;
      emit_cdr(c);
      break;
    }
    case Kind::kTimer: {
      if (it.b != timer_gen_[it.a]) break;  // superseded by later activity
      auto step = on_timer(states_[it.a], it.t, cfg_.rrc);
      for (auto& e : step.events) record_event(std::move(e));
      states_[it.a] = std::move(step.state);
      if (const auto& timer = states_[it.a].pending_timer) {
        push(timer->deadline, Kind::kTimer, it.a, ++timer_gen_[it.a]);
      }
      break;
    }
    case Kind::kAttack: {
      const auto& plan = plans_[it.a];
      const auto& spec = specs_[it.a];
      const auto& action = plan.actions[it.b];
      const auto u = index_of_.at(action.ue.value);
      Completion c;
      c.ue = action.ue;
      c.peer = action.peer;
      c.start = action.t;
      c.truth_label = plan.label;
      switch (action.kind) {
        case ActionKind::TRIGGER_DATA_SMALL:
          activity(u, it.t, Demand::DATA_SMALL, plan.label);
          c.kind = CdrKind::DATA;
          c.volume_bytes = spec.params.trigger_bytes;
          break;
        case ActionKind::EMIT_PREMIUM_CDR:
          activity(u, it.t, Demand::SMS, plan.label);
          c.kind = CdrKind::PREMIUM_SMS;
          c.charge_override = spec.params.charge_milliunits;
          break;
        case ActionKind::EMIT_SPAM_SMS:
          activity(u, it.t, Demand::SMS, plan.label);
          c.kind = CdrKind::SMS;
          break;
        case ActionKind::EMIT_DDOS_MSG:
          // Flood traffic rides the shared channel; the request itself adds
          // one message at the signaling server and produces no billing.
          activity(u, it.t, Demand::DATA_SMALL, plan.label);
          queue_.offer(it.t, 1, queue_rng_);
          return;
      }
      c.record_id = next_record_id_++;
      emit_cdr(c);
      break;
    }
  }
}

void Simulation::sync_to(SimTime t) {
  while (next_boundary_ <= t && next_boundary_ <= horizon_) {
    queue_.advance(static_cast<double>(next_boundary_));
    const double area = queue_.stats().area;
    pending_occupancy_ = (area - area_at_boundary_) / static_cast<double>(cfg_.windows.long_ms);
    area_at_boundary_ = area;
    pipeline_->advance_to(next_boundary_);
    next_boundary_ += cfg_.windows.long_ms;
  }
  pipeline_->advance_to(t);
}

void Simulation::run_until(SimTime t) {
  if (finished_) throw ContractViolation("simulation already finished");
  const SimTime target = std::min(t, horizon_);
  while (!agenda_.empty() && agenda_.top().t < target) {
    const Item it = agenda_.top();
    agenda_.pop();
    sync_to(it.t);
    process(it);
  }
  now_ = std::max(now_, target);
}

RunOutput Simulation::finish() {
  run_until(horizon_);
  sync_to(horizon_);
  pipeline_->finish();
  // Sessions still in progress complete after the horizon: they are billed,
  // but the detector's view ends at the horizon.
  while (!agenda_.empty()) {
    const Item it = agenda_.top();
    agenda_.pop();
    if (it.kind == Kind::kSessionEnd) process(it);
  }
  finished_ = true;

  out_.config.duration_ms = horizon_;
  out_.config.salt.reset();
  std::erase_if(out_.config.attacks, [&](const AttackSpec& a) { return a.start >= horizon_; });
  for (auto& a : out_.config.attacks) a.stop = std::min(a.stop, horizon_);
  out_.alarms = pipeline_->records();
  out_.long_windows = pipeline_->long_windows();
  out_.baseline = pipeline_->baseline();
  out_.queue = queue_.stats();
  return std::move(out_);
}

void Simulation::record_start() {
  out_.annotations.push_back({"START", now_, now_, json{{"seed", cfg_.seed}, {"config_hash", config_hash(cfg_)}}});
}

CommandAck Simulation::inject(AttackSpec spec) {
  sync_to(now_);
  const auto index = pipeline_->open_window() + 1;
  const SimTime applied = index * pipeline_->detection_width();
  if (applied >= horizon_) throw ValidationError("the run ends before the next window boundary");
  spec.start = std::max(spec.start, applied);
  spec.stop = std::min(spec.stop, horizon_);
  if (spec.stop <= spec.start) throw ValidationError("attack interval ends before it can start");
  spec.validate(ids_.size());
  const auto marker = pipeline_->schedule_inject(json(spec));
  add_attack(spec, "inject");
  out_.annotations.push_back({"INJECT", now_, marker.t, json(spec)});
  return {"INJECT", now_, marker.t, marker.window_index};
}

CommandAck Simulation::tune(const json& patch) {
  sync_to(now_);
  const auto index = pipeline_->open_window() + 1;
  if (index * pipeline_->detection_width() >= horizon_) {
    throw ValidationError("the run ends before the next window boundary");
  }
  const auto marker = pipeline_->schedule_tune(patch);
  out_.annotations.push_back({"TUNE", now_, marker.t, patch});
  return {"TUNE", now_, marker.t, marker.window_index};
}

CommandAck Simulation::mark(const std::string& note) {
  out_.annotations.push_back({"MARK", now_, now_, json{{"note", note}}});
  return {"MARK", now_, now_, std::nullopt};
}

CommandAck Simulation::stop() {
  sync_to(now_);
  horizon_ = now_;
  pipeline_->truncate(now_);
  out_.annotations.push_back({"STOP", now_, now_, json()});
  return {"STOP", now_, now_, std::nullopt};
}

Snapshot Simulation::snapshot() {
  sync_to(now_);
  if (static_cast<double>(now_) >= queue_.clock()) queue_.advance(static_cast<double>(now_));
  Snapshot s;
  s.t = now_;
  s.rrc_histogram = histogram_;
  s.msg_rate = last_msg_rate_;
  s.queue_backlog = queue_.backlog();
  s.recent_alarms.assign(recent_.begin(), recent_.end());
  for (const auto& spec : specs_) {
    if (spec.stop > now_) s.active_attacks.push_back(spec);
  }
  s.detector = pipeline_->config();
  return s;
}

RunOutput run(const ScenarioConfig& cfg) {
  Simulation sim(cfg);
  return sim.finish();
}

// Output ----------------------------------------------------------------

namespace {

void append_u64(std::string& s, std::uint64_t v) {
  char buf[24];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, r.ptr);
}

void append_i64(std::string& s, std::int64_t v) {
  char buf[24];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, r.ptr);
}

void append_double(std::string& s, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, r.ptr);
}

template <typename E>
void append_name(std::string& s, E e) {
  s += '"';
  s += to_string(e);
  s += '"';
}

void append_party(std::string& s, const Party& p) {
  if (const auto* u = std::get_if<UeId>(&p)) {
    append_u64(s, u->value);
  } else {
    s += '"';
    s += std::get<Pseudonym>(p).hex();
    s += '"';
  }
}

class DigestWriter {
 public:
  DigestWriter(const std::filesystem::path& dir, std::string file) : file_(std::move(file)), out_(dir / file_) {
    if (!out_) throw StreamError("cannot write " + (dir / file_).string());
  }
  void line(const std::string& s) {
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    out_.put('\n');
    sha_.update(s);
    sha_.update("\n");
    ++lines_;
  }
  StreamDigest close() {
    out_.close();
    if (!out_) throw StreamError("failed writing " + file_);
    return {file_, lines_, sha_.finish_hex()};
  }

 private:
  std::string file_;
  std::ofstream out_;
  Sha256 sha_;
  std::uint64_t lines_ = 0;
};

json digest_json(const StreamDigest& d) { return json{{"file", d.file}, {"lines", d.lines}, {"sha256", d.sha256}}; }

}  // namespace

// Same bytes as json(e).dump(), several times faster.
std::string event_line(const SignalingEvent& e) {
  std::string s;
  s.reserve(112);
  s += "{\"cause\":";
  append_name(s, e.cause);
  s += ",\"from\":";
  append_name(s, e.from);
  s += ",\"msg_cost\":";
  append_u64(s, e.msg_cost);
  s += ",\"t\":";
  append_u64(s, e.t);
  s += ",\"to\":";
  append_name(s, e.to);
  if (e.truth_label) {
    s += ",\"truth_label\":";
    append_name(s, *e.truth_label);
  }
  s += ",\"ue\":";
  append_u64(s, e.ue.value);
  s += '}';
  return s;
}

std::string cdr_line(const Cdr& c) {
  std::string s;
  s.reserve(200);
  s += "{\"charge\":";
  append_i64(s, c.charge);
  s += ",\"duration_ms\":";
  append_u64(s, c.duration_ms);
  s += ",\"kind\":";
  append_name(s, c.kind);
  s += ",\"peer\":";
  append_party(s, c.peer);
  s += ",\"record_id\":";
  append_u64(s, c.record_id);
  s += ",\"start\":";
  append_u64(s, c.start);
  if (c.truth_label) {
    s += ",\"truth_label\":";
    append_name(s, *c.truth_label);
  }
  s += ",\"ue\":";
  append_party(s, c.ue);
  s += ",\"volume_bytes\":";
  append_u64(s, c.volume_bytes);
  s += '}';
  return s;
}

std::string metrics_header() { return "window_start,occupancy,promotion_rate,msg_rate,alarm_count"; }

std::string metrics_line(const MetricsRow& m) {
  std::string s;
  append_u64(s, m.window_start);
  s += ',';
  append_double(s, m.occupancy);
  s += ',';
  append_double(s, m.promotion_rate);
  s += ',';
  append_double(s, m.msg_rate);
  s += ',';
  append_u64(s, m.alarm_count);
  return s;
}

json write_run(const RunOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json streams = json::object();

  DigestWriter events(dir, "events.jsonl");
  for (const auto& e : out.events) events.line(event_line(e));
  streams["events"] = digest_json(events.close());

  DigestWriter cdrs(dir, "cdrs.jsonl");
  for (const auto& c : out.cdrs) cdrs.line(cdr_line(c));
  streams["cdrs"] = digest_json(cdrs.close());

  DigestWriter alarms(dir, "alarms.jsonl");
  for (const auto& r : out.alarms) alarms.line(record_to_json(r).dump());
  streams["alarms"] = digest_json(alarms.close());

  DigestWriter metrics(dir, "metrics.csv");
  metrics.line(metrics_header());
  for (const auto& m : out.metrics) metrics.line(metrics_line(m));
  streams["metrics"] = digest_json(metrics.close());

  if (out.config.labeled) {
    DigestWriter truth(dir, "truth.jsonl");
    for (const auto& t : out.truth) truth.line(json(t).dump());
    streams["truth"] = digest_json(truth.close());
  }

  const json cfg = out.config;
  {
    std::ofstream f(dir / "config.json");
    f << cfg.dump(2) << '\n';
  }

  json manifest{{"format", "mobisec-run"},
                {"version", 1},
                {"tool_version", kToolVersion},
                {"seed", out.config.seed},
                {"config_hash", config_hash(out.config)},
                {"duration_ms", out.config.duration_ms},
                {"population", out.config.population},
                {"labeled", out.config.labeled},
                {"sim_epoch", out.config.sim_epoch},
                {"streams", streams},
                {"annotations", out.annotations},
                {"sessions", out.sessions_planned},
                {"attack_actions", out.attack_actions},
                {"queue",
                 {{"arrivals", out.queue.arrivals},
                  {"served", out.queue.served},
                  {"max_backlog", out.queue.max_backlog}}}};
  std::ofstream f(dir / "manifest.json");
  f << manifest.dump(2) << '\n';
  if (!f) throw StreamError("failed writing manifest.json");
  return manifest;
}

namespace {

std::vector<std::string> read_checked_lines(const std::filesystem::path& dir, const json& entry) {
  const auto file = entry.at("file").get<std::string>();
  std::ifstream in(dir / file, std::ios::binary);
  if (!in) throw StreamError("missing stream " + file);
  std::vector<std::string> lines;
  Sha256 sha;
  std::string line;
  while (std::getline(in, line)) {
    sha.update(line);
    sha.update("\n");
    lines.push_back(std::move(line));
  }
  if (lines.size() != entry.at("lines").get<std::uint64_t>() || sha.finish_hex() != entry.at("sha256")) {
    throw StreamError(file + " does not match the manifest (truncated or modified)");
  }
  return lines;
}

// Lines parse independently, so large streams are decoded in parallel.
template <typename T>
std::vector<T> parse_lines(const std::vector<std::string>& lines) {
  std::vector<T> out(lines.size());
  std::string error;
  std::size_t first_bad = lines.size();
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out[i] = json::parse(lines[i]).get<T>();
    } catch (const std::exception& e) {
#pragma omp critical
      if (i < first_bad) {
        first_bad = i;
        error = "line " + std::to_string(i + 1) + ": " + e.what();
      }
    }
  }
  if (!error.empty()) throw StreamError(error);
  return out;
}

}  // namespace

RecordedRun load_run(const std::filesystem::path& dir, bool with_traffic) {
  RecordedRun run;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw StreamError("no manifest.json in " + dir.string());
    run.manifest = json::parse(in);
  }
  if (run.manifest.value("format", "") != "mobisec-run") throw StreamError("not a run directory: " + dir.string());
  {
    std::ifstream in(dir / "config.json");
    if (!in) throw StreamError("no config.json in " + dir.string());
    run.config = json::parse(in).get<ScenarioConfig>();
  }
  if (config_hash(run.config) != run.manifest.at("config_hash")) throw StreamError("config.json does not match the manifest");

  const auto& streams = run.manifest.at("streams");
  if (with_traffic) {
    run.events = parse_lines<SignalingEvent>(read_checked_lines(dir, streams.at("events")));
    run.cdrs = parse_lines<Cdr>(read_checked_lines(dir, streams.at("cdrs")));
  }
  for (const auto& l : read_checked_lines(dir, streams.at("alarms"))) {
    run.alarms.push_back(record_from_json(json::parse(l)));
  }
  const auto metric_lines = read_checked_lines(dir, streams.at("metrics"));
  for (std::size_t i = 1; i < metric_lines.size(); ++i) {
    MetricsRow m;
    std::istringstream row(metric_lines[i]);
    char comma = 0;
    row >> m.window_start >> comma >> m.occupancy >> comma >> m.promotion_rate >> comma >> m.msg_rate >> comma >>
        m.alarm_count;
    if (!row) throw StreamError("bad metrics row " + std::to_string(i));
    run.metrics.push_back(m);
  }
  if (streams.contains("truth")) {
    for (const auto& l : read_checked_lines(dir, streams.at("truth"))) {
      run.truth.push_back(json::parse(l).get<TruthInterval>());
    }
  }
  return run;
}

ReplayOutput replay_detailed(const RecordedRun& run, const DetectorConfig& detector, bool markers) {
  auto pipeline = make_pipeline(run.config, detector);
  for (const auto& r : run.alarms) {
    if (!markers) break;
    if (const auto* m = std::get_if<Marker>(&r)) pipeline->schedule(*m);
  }
  auto e = run.events.begin();
  auto c = run.cdrs.begin();
  while (e != run.events.end() || c != run.cdrs.end()) {
    if (c == run.cdrs.end() || (e != run.events.end() && e->t <= cdr_time(*c))) {
      pipeline->push_event(*e++);
    } else {
      pipeline->push_cdr(*c++);
    }
  }
  pipeline->finish();
  return {pipeline->records(), pipeline->long_windows(), pipeline->baseline()};
}

std::vector<StreamRecord> replay(const RecordedRun& run, const DetectorConfig& detector) {
  return replay_detailed(run, detector).records;
}

BaselineModel calibrate_run(const RecordedRun& run, const CalibrationParams& params) {
  if (!run.config.attacks.empty()) throw ValidationError("calibration needs an attack-free run");
  for (const auto& r : run.alarms) {
    const auto* m = std::get_if<Marker>(&r);
    if (m && m->kind == "inject") throw ValidationError("calibration needs an attack-free run (attack injected live)");
  }
  DetectorConfig d = run.config.detector;
  d.calibration = params;
  d.baseline_path.reset();
  d.model_path.reset();
  d.prefix_windows = run.config.duration_ms / run.config.windows.long_ms;
  d.validate();
  // parameter changes do not matter to calibration
  auto out = replay_detailed(run, d, false);
  if (!out.baseline) throw ValidationError("run too short to calibrate");
  return *out.baseline;
}

std::vector<StreamRecord> replay(const RecordedRun& run) { return replay(run, run.config.detector); }

std::vector<LabeledWindow> labeled_windows(std::span<const WindowFeatures> windows,
                                           std::span<const TruthInterval> truth) {
  std::vector<LabeledWindow> out;
  for (const auto& w : windows) {
    const SimTime s = w.start;
    const SimTime e = w.start + w.width_ms;
    std::optional<AttackClass> label;
    bool clean = true;
    bool any = false;
    for (const auto& t : truth) {
      if (t.start >= e || t.stop <= s) continue;
      const bool covers = t.start <= s && t.stop >= e;
      if (!covers || t.attack_class == AttackClass::BOTNET_DDOS || (any && label != t.attack_class)) clean = false;
      any = true;
      label = t.attack_class;
    }
    if (!clean) continue;
    out.push_back({w, any ? attack_to_window_class(label) : 0});
  }
  return out;
}

}  // namespace mobisec
