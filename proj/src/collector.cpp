#include "mobisec/collector.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "mobisec/config.hpp"
#include "mobisec/crypto.hpp"
#include "mobisec/engine.hpp"

namespace mobisec {

bool Enrichment::empty() const {
  return std::none_of(fields.begin(), fields.end(), [](const auto& f) { return f.has_value(); });
}

namespace {

json base_json(const TraceRecord& r) {
  std::vector<std::string> behaviors;
  for (auto b : r.behaviors) behaviors.emplace_back(to_string(b));
  return json{{"source", r.source},
              {"observed_at", r.observed_at},
              {"attacker_endpoint", r.attacker_endpoint},
              {"behaviors", behaviors},
              {"payload_digest", r.payload_digest}};
}

}  // namespace

std::string canonical_payload(const TraceRecord& r) { return base_json(r).dump(); }

std::string compute_trace_id(const TraceRecord& r) { return to_hex(sha256(canonical_payload(r))); }

TraceRecord decode_trace(const json& j) {
  if (!j.is_object()) throw ValidationError("trace must be a JSON object");
  TraceRecord r;
  try {
    r.source = j.at("source").get<TraceSource>();
    r.observed_at = j.at("observed_at").get<std::string>();
    r.attacker_endpoint = j.at("attacker_endpoint").get<std::string>();
    for (const auto& b : j.at("behaviors")) r.behaviors.insert(b.get<Behavior>());
    r.payload_digest = j.at("payload_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("trace: ") + e.what());
  }
  if (r.behaviors.empty()) throw ValidationError("trace: behaviors must not be empty");
  if (r.attacker_endpoint.empty()) throw ValidationError("trace: attacker_endpoint must not be empty");
  parse_iso8601_ms(r.observed_at);
  r.trace_id = compute_trace_id(r);
  if (j.contains("trace_id") && j.at("trace_id") != r.trace_id) {
    throw ValidationError("trace: trace_id does not match its payload");
  }
  return r;
}

void to_json(json& j, const Enrichment& e) {
  j = json::object();
  for (std::size_t i = 0; i < e.fields.size(); ++i) {
    if (e.fields[i]) j[std::string(EnumNames<EnrichField>::names[i])] = *e.fields[i];
  }
}

void from_json(const json& j, Enrichment& e) {
  e = Enrichment{};
  for (const auto& [k, v] : j.items()) e[parse_enum<EnrichField>(k)] = v.get<std::string>();
}

void to_json(json& j, const TraceRecord& r) {
  j = base_json(r);
  j["trace_id"] = r.trace_id;
  if (!r.enrichment.empty()) j["enrichment"] = r.enrichment;
  if (r.cluster_id) j["cluster_id"] = *r.cluster_id;
}

void to_json(json& j, const IngestResult& r) {
  json rejected = json::array();
  for (const auto& [line, why] : r.rejected) rejected.push_back(json{{"line", line}, {"error", why}});
  j = json{{"inserted", r.inserted}, {"duplicates", r.duplicates}, {"rejected", rejected}};
}

// Store -------------------------------------------------------------------

TraceStore::TraceStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  load();
}

void TraceStore::load() {
  {
    std::ifstream in(dir_ / "traces.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      TraceRecord r;
      try {
        r = decode_trace(json::parse(line));
      } catch (const std::exception& e) {
        throw StreamError("store traces.jsonl line " + std::to_string(n) + ": " + e.what());
      }
      if (index_.emplace(r.trace_id, records_.size()).second) records_.push_back(std::move(r));
    }
  }
  {
    std::ifstream in(dir_ / "enrichment.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      const auto it = index_.find(j.at("trace_id").get<std::string>());
      if (it == index_.end()) throw StreamError("enrichment for unknown trace " + j.at("trace_id").get<std::string>());
      auto& slot = records_[it->second].enrichment[j.at("field").get<EnrichField>()];
      if (!slot) slot = j.at("value").get<std::string>();
    }
  }
  std::ifstream in(dir_ / "clusters.json");
  if (in) {
    const auto j = json::parse(in);
    for (const auto& [id, c] : j.at("assignment").items()) {
      const auto it = index_.find(id);
      if (it != index_.end()) records_[it->second].cluster_id = c.get<std::uint64_t>();
    }
  }
}

IngestResult TraceStore::ingest(std::istream& in) {
  std::lock_guard lock(mu_);
  IngestResult result;
  std::ofstream log(dir_ / "traces.jsonl", std::ios::app);
  if (!log) throw StreamError("cannot append to " + (dir_ / "traces.jsonl").string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    TraceRecord r;
    try {
      r = decode_trace(json::parse(line));
    } catch (const std::exception& e) {
      result.rejected.emplace_back(n, e.what());
      continue;
    }
    if (index_.count(r.trace_id) != 0) {
      ++result.duplicates;
      continue;
    }
    json stored = base_json(r);
    stored["trace_id"] = r.trace_id;
    log << stored.dump() << '\n';
    index_.emplace(r.trace_id, records_.size());
    records_.push_back(std::move(r));
    ++result.inserted;
  }
  log.close();
  if (!log) throw StreamError("failed appending to the trace store");
  return result;
}

IngestResult TraceStore::ingest_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open trace file " + file.string());
  return ingest(in);
}

const TraceRecord* TraceStore::find(const std::string& trace_id) const {
  std::lock_guard lock(mu_);
  const auto it = index_.find(trace_id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::vector<TraceRecord> TraceStore::records() const {
  std::lock_guard lock(mu_);
  auto out = records_;
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.trace_id < b.trace_id; });
  return out;
}

std::size_t TraceStore::add_enrichment(const std::string& trace_id, const Enrichment& e) {
  std::lock_guard lock(mu_);
  const auto it = index_.find(trace_id);
  if (it == index_.end()) throw ValidationError("unknown trace " + trace_id);
  auto& rec = records_[it->second];
  std::ofstream log(dir_ / "enrichment.jsonl", std::ios::app);
  std::size_t added = 0;
  for (std::size_t i = 0; i < e.fields.size(); ++i) {
    if (!e.fields[i] || rec.enrichment.fields[i]) continue;
    rec.enrichment.fields[i] = e.fields[i];
    log << json{{"trace_id", trace_id}, {"field", static_cast<EnrichField>(i)}, {"value", *e.fields[i]}}.dump()
        << '\n';
    ++added;
  }
  return added;
}

void TraceStore::set_clusters(const std::map<std::string, std::uint64_t>& assignment, double theta) {
  std::lock_guard lock(mu_);
  for (auto& r : records_) {
    const auto it = assignment.find(r.trace_id);
    if (it == assignment.end()) r.cluster_id.reset();
    else r.cluster_id = it->second;
  }
  const auto tmp = dir_ / "clusters.json.tmp";
  {
    std::ofstream out(tmp);
    out << json{{"theta", theta}, {"assignment", assignment}}.dump(2) << '\n';
    if (!out) throw StreamError("failed writing clusters.json");
  }
  std::filesystem::rename(tmp, dir_ / "clusters.json");
}

// Enrichment -----------------------------------------------------------------

TableProvider::TableProvider(EnrichField field, std::map<std::string, std::string> table)
    : field_(field), table_(std::move(table)) {}

TableProvider::TableProvider(EnrichField field, const std::filesystem::path& table) : field_(field) {
  std::ifstream in(table);
  if (!in) throw ValidationError("cannot open provider table " + table.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ValidationError("provider table " + table.string() + ": expected key,value");
    auto value = line.substr(comma + 1);
    if (!value.empty() && value.back() == '\r') value.pop_back();
    if (line.compare(0, comma, "key") == 0) continue;  // header
    table_.emplace(line.substr(0, comma), std::move(value));
  }
}

std::optional<std::string> TableProvider::lookup(const std::string& endpoint) const {
  if (auto it = table_.find(endpoint); it != table_.end()) return it->second;
  const auto prefix = endpoint_prefix(endpoint);
  if (prefix != endpoint) {
    if (auto it = table_.find(prefix + ".*"); it != table_.end()) return it->second;
  }
  return std::nullopt;
}

ProviderSet load_providers(const std::filesystem::path& config) {
  std::ifstream in(config);
  if (!in) throw ValidationError("cannot open provider config " + config.string());
  const auto j = json::parse(in);
  if (!j.is_object()) throw ValidationError("provider config must map field names to table paths");
  ProviderSet out;
  for (const auto& [name, path] : j.items()) {
    std::filesystem::path table = path.get<std::string>();
    if (table.is_relative()) table = config.parent_path() / table;
    out.push_back(std::make_shared<TableProvider>(parse_enum<EnrichField>(name), table));
  }
  return out;
}

void to_json(json& j, const EnrichStats& s) {
  j = json{{"answered", s.answered}, {"errors", s.errors}, {"timeouts", s.timeouts}};
}

TraceRecord enrich(const TraceRecord& r, const ProviderSet& providers, std::chrono::milliseconds timeout,
                   EnrichStats* stats) {
  std::set<EnrichField> owned;
  for (const auto& p : providers) {
    if (!owned.insert(p->field()).second) {
      throw ValidationError("two providers own the field " + std::string(to_string(p->field())));
    }
  }

  struct Pending {
    std::shared_ptr<const EnrichmentProvider> provider;
    std::future<std::optional<std::string>> result;
  };
  std::vector<Pending> pending;
  for (const auto& p : providers) {
    if (r.enrichment[p->field()]) continue;
    auto promise = std::make_shared<std::promise<std::optional<std::string>>>();
    pending.push_back({p, promise->get_future()});
    // Detached so a hung provider cannot hold the caller past its deadline.
    std::thread([p, promise, endpoint = r.attacker_endpoint] {
      try {
        promise->set_value(p->lookup(endpoint));
      } catch (...) {
        promise->set_exception(std::current_exception());
      }
    }).detach();
  }

  TraceRecord out = r;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (auto& job : pending) {
    const auto name = job.provider->name();
    if (job.result.wait_until(deadline) != std::future_status::ready) {
      if (stats) ++stats->timeouts[name];
      continue;
    }
    try {
      if (auto v = job.result.get()) {
        out.enrichment[job.provider->field()] = std::move(*v);
        if (stats) ++stats->answered[name];
      }
    } catch (const std::exception&) {
      if (stats) ++stats->errors[name];
    }
  }
  return out;
}

// Clustering -----------------------------------------------------------------

std::string endpoint_prefix(const std::string& endpoint) {
  int dots = 0;
  for (char c : endpoint) {
    if (c == '.') ++dots;
    else if (!std::isdigit(static_cast<unsigned char>(c))) return endpoint;
  }
  if (dots != 3) return endpoint;
  return endpoint.substr(0, endpoint.rfind('.'));
}

double similarity(const TraceRecord& a, const TraceRecord& b) {
  std::size_t common = 0;
  for (auto x : a.behaviors) common += b.behaviors.count(x);
  const std::size_t uni = a.behaviors.size() + b.behaviors.size() - common;
  double s = uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
  if (endpoint_prefix(a.attacker_endpoint) == endpoint_prefix(b.attacker_endpoint)) s += 0.1;
  return std::min(s, 1.0);
}

Clustering cluster(std::span<const TraceRecord> records, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw ValidationError("cluster: theta must be in [0, 1]");
  if (records.empty()) throw ValidationError("cluster: no records");
  std::vector<const TraceRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->trace_id < b->trace_id; });

  Clustering out;
  std::vector<const TraceRecord*> founders;
  for (const auto* r : order) {
    if (out.assignment.count(r->trace_id) != 0) continue;  // duplicate id in input
    std::optional<std::uint64_t> home;
    for (std::uint64_t c = 0; c < founders.size(); ++c) {
      if (similarity(*r, *founders[c]) >= theta) {
        home = c;
        break;
      }
    }
    if (!home) {
      home = founders.size();
      founders.push_back(r);
      out.founders.push_back(r->trace_id);
    }
    out.assignment.emplace(r->trace_id, *home);
  }
  return out;
}

// Correlation ----------------------------------------------------------------

std::vector<Behavior> compatible_behaviors(std::optional<AttackClass> c) {
  if (!c) return {};
  switch (*c) {
    case AttackClass::PREMIUM_ABUSE:
      return {Behavior::PREMIUM_ABUSE};
    case AttackClass::SMS_SPAM:
      return {Behavior::SPAM};
    case AttackClass::SIGNALING_STORM:
    case AttackClass::BOTNET_DDOS:
      return {Behavior::BOTCLIENT, Behavior::DOS};
  }
  return {};
}

double time_term(std::int64_t delta_ms, std::uint64_t window_ms) {
  const auto d = static_cast<double>(delta_ms < 0 ? -delta_ms : delta_ms);
  return 1.0 - d / static_cast<double>(window_ms);
}

double match_score(double t, double b) { return 0.5 * t + 0.5 * b; }

double recompute_score(const ClusterMatch& m) {
  const double t = time_term(m.time.delta_ms, m.time.window_ms);
  const double b = m.behavior.matched.empty() ? 0.0 : 1.0;
  return match_score(t, b);
}

std::vector<AttributionReport> correlate(std::span<const Alarm> alarms, std::span<const TraceRecord> records,
                                         const CorrelateConfig& cfg) {
  if (!cfg.sim_epoch) throw ValidationError("correlate: no sim_epoch, alarm times cannot be mapped to wall clock");
  if (cfg.window_ms == 0) throw ValidationError("correlate: window_ms must be > 0");
  const auto epoch = parse_iso8601_ms(*cfg.sim_epoch);

  struct Member {
    const TraceRecord* rec;
    std::int64_t at;
  };
  std::map<std::uint64_t, std::vector<Member>> clusters;
  std::map<std::uint64_t, std::set<Behavior>> tags;
  std::vector<const TraceRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->trace_id < b->trace_id; });
  for (const auto* r : sorted) {
    if (!r->cluster_id) throw ValidationError("correlate: trace " + r->trace_id + " has no cluster; run cluster first");
    clusters[*r->cluster_id].push_back({r, parse_iso8601_ms(r->observed_at)});
    tags[*r->cluster_id].insert(r->behaviors.begin(), r->behaviors.end());
  }

  std::vector<AttributionReport> out;
  for (std::size_t i = 0; i < alarms.size(); ++i) {
    AttributionReport report{i, alarms[i], {}};
    const auto at = epoch + static_cast<std::int64_t>(alarms[i].t_raised);
    const auto wanted = compatible_behaviors(alarms[i].attack_class);
    for (const auto& [cid, members] : clusters) {
      const Member* nearest = nullptr;
      std::int64_t best = 0;
      for (const auto& m : members) {
        const auto d = m.at - at;
        const auto ad = d < 0 ? -d : d;
        if (ad > static_cast<std::int64_t>(cfg.window_ms)) continue;
        if (!nearest || ad < (best < 0 ? -best : best)) {
          nearest = &m;
          best = d;
        }
      }
      if (!nearest) continue;
      ClusterMatch m;
      m.cluster_id = cid;
      m.time = {nearest->rec->trace_id, best, cfg.window_ms, time_term(best, cfg.window_ms)};
      m.behavior.alarm_class = alarms[i].attack_class;
      for (auto b : wanted) {
        if (tags[cid].count(b) != 0) m.behavior.matched.push_back(b);
      }
      m.behavior.term = m.behavior.matched.empty() ? 0.0 : 1.0;
      m.score = match_score(m.time.term, m.behavior.term);
      if (m.score >= cfg.min_score) report.matches.push_back(std::move(m));
    }
    std::stable_sort(report.matches.begin(), report.matches.end(),
                     [](const auto& a, const auto& b) { return a.score > b.score; });
    out.push_back(std::move(report));
  }
  return out;
}

void to_json(json& j, const ClusterMatch& m) {
  json behavior{{"matched", m.behavior.matched}, {"term", m.behavior.term}};
  if (m.behavior.alarm_class) behavior["alarm_class"] = *m.behavior.alarm_class;
  j = json{{"cluster_id", m.cluster_id},
           {"score", m.score},
           {"evidence",
            {{"time",
              {{"trace_id", m.time.trace_id},
               {"delta_ms", m.time.delta_ms},
               {"window_ms", m.time.window_ms},
               {"term", m.time.term}}},
             {"behavior", behavior}}}};
}

void from_json(const json& j, ClusterMatch& m) {
  m.cluster_id = j.at("cluster_id").get<std::uint64_t>();
  m.score = j.at("score").get<double>();
  const auto& t = j.at("evidence").at("time");
  m.time = {t.at("trace_id").get<std::string>(), t.at("delta_ms").get<std::int64_t>(),
            t.at("window_ms").get<std::uint64_t>(), t.at("term").get<double>()};
  const auto& b = j.at("evidence").at("behavior");
  m.behavior.alarm_class =
      b.contains("alarm_class") ? std::optional(b.at("alarm_class").get<AttackClass>()) : std::nullopt;
  m.behavior.matched = b.at("matched").get<std::vector<Behavior>>();
  m.behavior.term = b.at("term").get<double>();
}

void to_json(json& j, const AttributionReport& r) {
  j = json{{"alarm_ref", r.alarm_ref}, {"alarm", r.alarm}, {"matches", r.matches}};
}

void from_json(const json& j, AttributionReport& r) {
  r.alarm_ref = j.at("alarm_ref").get<std::size_t>();
  r.alarm = j.at("alarm").get<Alarm>();
  r.matches = j.at("matches").get<std::vector<ClusterMatch>>();
}

// Synthetic traces -------------------------------------------------------------

std::vector<json> generate_traces(std::span<const TruthInterval> truth, const std::string& sim_epoch,
                                  SimTime horizon, std::uint64_t seed, std::size_t per_attack, std::size_t noise) {
  const auto epoch = parse_iso8601_ms(sim_epoch);
  Rng rng(seed, StreamTag::kTraces, 0);
  auto digest = [&rng] {
    std::string bytes(32, '\0');
    for (auto& c : bytes) c = static_cast<char>(rng.next_u64() & 0xff);
    return to_hex(sha256(bytes));
  };
  auto trace = [&](std::string endpoint, std::vector<Behavior> behaviors, SimTime t) {
    return json{{"source", TraceSource::HONEYPOT},
                {"observed_at", format_iso8601_ms(epoch + static_cast<std::int64_t>(t))},
                {"attacker_endpoint", std::move(endpoint)},
                {"behaviors", behaviors},
                {"payload_digest", digest()}};
  };

  std::vector<json> out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& iv = truth[i];
    std::vector<Behavior> tags;
    switch (iv.attack_class) {
      case AttackClass::SIGNALING_STORM:
        tags = {Behavior::BOTCLIENT, Behavior::DOS};
        break;
      case AttackClass::PREMIUM_ABUSE:
        tags = {Behavior::PREMIUM_ABUSE, Behavior::STEAL_INFO};
        break;
      case AttackClass::SMS_SPAM:
        tags = {Behavior::SPAM, Behavior::BOTCLIENT};
        break;
      case AttackClass::BOTNET_DDOS:
        tags = {Behavior::DOS, Behavior::BOTCLIENT};
        break;
    }
    const auto net = "203.0." + std::to_string(10 + i % 240) + ".";
    for (std::size_t k = 0; k < per_attack; ++k) {
      const SimTime t = iv.start + rng.below(std::max<SimTime>(iv.stop - iv.start, 1));
      out.push_back(trace(net + std::to_string(1 + rng.below(254)), tags, t));
    }
  }
  const std::array<Behavior, 5> background{Behavior::ADWARE, Behavior::CLICK_FRAUD, Behavior::SEO,
                                           Behavior::MONITORING, Behavior::ROOTING};
  for (std::size_t k = 0; k < noise; ++k) {
    std::vector<Behavior> tags{background[rng.below(background.size())]};
    const auto extra = background[rng.below(background.size())];
    if (extra != tags[0]) tags.push_back(extra);
    const auto net = rng.below(2) == 0 ? std::string("192.0.2.") : std::string("198.51.100.");
    out.push_back(trace(net + std::to_string(1 + rng.below(254)), tags, rng.below(std::max<SimTime>(horizon, 1))));
  }
  return out;
}

}  // namespace mobisec
