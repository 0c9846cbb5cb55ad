#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "mobisec/collector.hpp"
#include "mobisec/engine.hpp"  // TruthInterval

using namespace mobisec;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

const std::string kEpoch = "2026-01-01T00:00:00Z";

json trace(const std::string& at, const std::string& endpoint, std::vector<std::string> behaviors,
           const std::string& digest = "d0") {
  return json{{"source", "HONEYPOT"},
              {"observed_at", at},
              {"attacker_endpoint", endpoint},
              {"behaviors", behaviors},
              {"payload_digest", digest}};
}

TraceRecord rec(const std::string& endpoint, std::set<Behavior> b, const std::string& at = kEpoch) {
  TraceRecord r;
  r.observed_at = at;
  r.attacker_endpoint = endpoint;
  r.behaviors = std::move(b);
  r.payload_digest = endpoint;
  r.trace_id = compute_trace_id(r);
  return r;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mobisec_collector_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string lines(const std::vector<json>& js) {
  std::string s;
  for (const auto& j : js) s += j.dump() + "\n";
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Throwing : public EnrichmentProvider {
 public:
  std::string name() const override { return "broken-asn"; }
  EnrichField field() const override { return EnrichField::asn; }
  std::optional<std::string> lookup(const std::string&) const override { throw std::runtime_error("boom"); }
};

class Slow : public EnrichmentProvider {
 public:
  std::string name() const override { return "slow-rdns"; }
  EnrichField field() const override { return EnrichField::reverse_name; }
  std::optional<std::string> lookup(const std::string&) const override {
    std::this_thread::sleep_for(300ms);
    return "late.example";
  }
};

Alarm alarm_at(SimTime t, std::optional<AttackClass> c) {
  Alarm a;
  a.detector = DetectorKind::FUSED;
  a.t_raised = t;
  a.window_index = t / 600'000;
  a.attack_class = c;
  if (c) a.confidence = 0.9;
  return a;
}

}  // namespace

TEST_SUITE("ingest") {
  TEST_CASE("trace identity") {
    auto j = trace("2026-01-01T01:00:00Z", "203.0.113.5", {"SPAM", "BOTCLIENT"});
    const auto a = decode_trace(j);
    CHECK(a.trace_id.size() == 64);
    CHECK(a.trace_id == compute_trace_id(a));
    j["behaviors"] = {"BOTCLIENT", "SPAM", "SPAM"};
    CHECK(decode_trace(j).trace_id == a.trace_id);
    j["trace_id"] = a.trace_id;
    j["enrichment"] = {{"geo", "ES"}};
    CHECK(decode_trace(j).enrichment.empty());
    j["trace_id"] = std::string(64, '0');
    CHECK_THROWS_AS(decode_trace(j), ValidationError);
  }

  TEST_CASE("same file twice is a counted no-op") {
    const auto dir = scratch("twice");
    const auto file = dir.string() + ".jsonl";
    std::ofstream(file) << lines({trace(kEpoch, "203.0.113.5", {"SPAM"}), trace(kEpoch, "203.0.113.6", {"DOS"}),
                                  trace(kEpoch, "198.51.100.7", {"ROOTING", "RANSOM"})});
    TraceStore store(dir);
    const auto first = store.ingest_file(file);
    CHECK(first.inserted == 3);
    CHECK(first.duplicates == 0);
    const auto log = slurp(dir / "traces.jsonl");
    const auto before = store.records();
    const auto second = store.ingest_file(file);
    CHECK(second.inserted == 0);
    CHECK(second.duplicates == 3);
    CHECK(store.records() == before);
    CHECK(slurp(dir / "traces.jsonl") == log);
    CHECK(TraceStore(dir).records() == before);
    fs::remove_all(dir);
    fs::remove(file);
  }

  TEST_CASE("timestamps are part of identity") {
    const auto dir = scratch("observed");
    TraceStore store(dir);
    std::istringstream in(lines({trace("2026-01-01T00:00:00Z", "203.0.113.5", {"SPAM"}),
                                 trace("2026-01-01T00:00:01Z", "203.0.113.5", {"SPAM"})}));
    CHECK(store.ingest(in).inserted == 2);
    fs::remove_all(dir);
  }

  TEST_CASE("bad lines are rejected and the stream continues") {
    const auto dir = scratch("rejects");
    TraceStore store(dir);
    std::istringstream in(lines({trace(kEpoch, "203.0.113.5", {}), trace("noon", "203.0.113.5", {"SPAM"}),
                                 trace(kEpoch, "203.0.113.5", {"NOT_A_TAG"}), trace(kEpoch, "203.0.113.5", {"SPAM"})}) +
                          "{not json\n\n");
    const auto r = store.ingest(in);
    CHECK(r.inserted == 1);
    REQUIRE(r.rejected.size() == 4);
    CHECK(r.rejected[0].first == 1);
    CHECK(r.rejected[0].second.find("behaviors") != std::string::npos);
    CHECK(r.rejected[3].first == 5);
    fs::remove_all(dir);
  }

  TEST_CASE("property: ingestion is idempotent across store reopen") {
    std::mt19937_64 g(5);
    std::vector<json> js;
    for (int i = 0; i < 60; ++i) {
      const auto b = static_cast<std::size_t>(g() % EnumNames<Behavior>::names.size());
      js.push_back(trace(format_iso8601_ms(1767225600000 + static_cast<std::int64_t>(g() % 4) * 1000),
                         "203.0.113." + std::to_string(g() % 5), {std::string(EnumNames<Behavior>::names[b])}));
    }
    const auto dir = scratch("idem");
    std::vector<TraceRecord> once;
    {
      TraceStore store(dir);
      std::istringstream in(lines(js));
      const auto r = store.ingest(in);
      CHECK(r.inserted + r.duplicates == js.size());
      once = store.records();
    }
    TraceStore again(dir);
    std::istringstream in(lines(js));
    CHECK(again.ingest(in).inserted == 0);
    CHECK(again.records() == once);
    fs::remove_all(dir);
  }
}

TEST_SUITE("enrich") {
  TEST_CASE("table lookups") {
    const TableProvider geo(EnrichField::geo, {{"203.0.113.*", "ES"}, {"203.0.113.9", "FR"}});
    CHECK(geo.lookup("203.0.113.5") == "ES");
    CHECK(geo.lookup("203.0.113.9") == "FR");
    CHECK_FALSE(geo.lookup("192.0.2.1"));

    const auto r = rec("203.0.113.5", {Behavior::SPAM});
    const ProviderSet ps{std::make_shared<TableProvider>(geo)};
    const auto e = enrich(r, ps, 1000ms);
    CHECK(e.enrichment[EnrichField::geo] == "ES");
    CHECK(e.trace_id == r.trace_id);
    CHECK(e.behaviors == r.behaviors);
    CHECK(e.observed_at == r.observed_at);
  }

  TEST_CASE("no answer leaves the record untouched") {
    const auto r = rec("192.0.2.1", {Behavior::SPAM});
    const ProviderSet ps{std::make_shared<TableProvider>(EnrichField::geo, std::map<std::string, std::string>{})};
    CHECK(enrich(r, ps, 1000ms) == r);
  }

  TEST_CASE("failures degrade to absent fields and are counted") {
    const auto r = rec("203.0.113.5", {Behavior::SPAM});
    const ProviderSet ps{std::make_shared<Throwing>(), std::make_shared<Slow>(),
                         std::make_shared<TableProvider>(EnrichField::geo,
                                                         std::map<std::string, std::string>{{"203.0.113.5", "ES"}})};
    EnrichStats stats;
    const auto e = enrich(r, ps, 50ms, &stats);
    CHECK_FALSE(e.enrichment[EnrichField::asn]);
    CHECK_FALSE(e.enrichment[EnrichField::reverse_name]);
    CHECK(e.enrichment[EnrichField::geo] == "ES");
    CHECK(stats.errors["broken-asn"] == 1);
    CHECK(stats.timeouts["slow-rdns"] == 1);
    CHECK(stats.answered["geo-table"] == 1);
  }

  TEST_CASE("existing fields are kept and duplicate owners refused") {
    auto r = rec("203.0.113.5", {Behavior::SPAM});
    r.enrichment[EnrichField::geo] = "PT";
    const auto geo = std::make_shared<TableProvider>(EnrichField::geo,
                                                     std::map<std::string, std::string>{{"203.0.113.5", "ES"}});
    CHECK(enrich(r, {geo}, 1000ms).enrichment[EnrichField::geo] == "PT");
    CHECK_THROWS_AS(enrich(r, {geo, geo}, 1000ms), ValidationError);
  }

  TEST_CASE("store persists enrichment") {
    const auto dir = scratch("enrich");
    std::string id;
    {
      TraceStore store(dir);
      std::istringstream in(lines({trace(kEpoch, "203.0.113.5", {"SPAM"})}));
      store.ingest(in);
      id = store.records()[0].trace_id;
      Enrichment e;
      e[EnrichField::asn] = "AS64500";
      CHECK(store.add_enrichment(id, e) == 1);
      CHECK(store.add_enrichment(id, e) == 0);
    }
    CHECK(TraceStore(dir).find(id)->enrichment[EnrichField::asn] == "AS64500");
    fs::remove_all(dir);
  }

  TEST_CASE("provider config") {
    const auto ps = load_providers(fs::path(MOBISEC_SOURCE_DIR) / "data/providers/providers.json");
    CHECK(ps.size() == 4);
  }
}

TEST_SUITE("cluster") {
  TEST_CASE("similarity examples") {
    const auto a = rec("203.0.113.5", {Behavior::SPAM, Behavior::BOTCLIENT});
    const auto b = rec("203.0.113.77", {Behavior::SPAM});
    const auto c = rec("198.51.100.2", {Behavior::DOS});
    CHECK(endpoint_prefix("203.0.113.5") == "203.0.113");
    CHECK(endpoint_prefix("bad.example.org") == "bad.example.org");
    CHECK(similarity(a, b) == doctest::Approx(0.6));
    CHECK(similarity(a, c) == 0.0);
    CHECK(similarity(a, a) == 1.0);
  }

  TEST_CASE("identical behaviors form one cluster") {
    const std::vector<TraceRecord> rs{rec("203.0.113.5", {Behavior::SPAM}), rec("198.51.100.2", {Behavior::SPAM})};
    CHECK(cluster(rs, 0.5).founders.size() == 1);
  }

  TEST_CASE("disjoint behaviors form two clusters") {
    const std::vector<TraceRecord> rs{rec("203.0.113.5", {Behavior::SPAM}), rec("198.51.100.2", {Behavior::DOS})};
    CHECK(cluster(rs, 0.1).founders.size() == 2);
  }

  TEST_CASE("threshold is inclusive") {
    const std::vector<TraceRecord> rs{rec("203.0.113.5", {Behavior::SPAM, Behavior::BOTCLIENT}),
                                      rec("203.0.113.77", {Behavior::SPAM})};
    CHECK(cluster(rs, 0.6).founders.size() == 1);
    CHECK(cluster(rs, 0.61).founders.size() == 2);
  }

  TEST_CASE("arguments") {
    const std::vector<TraceRecord> rs{rec("203.0.113.5", {Behavior::SPAM})};
    CHECK_THROWS_AS(cluster({}, 0.5), ValidationError);
    CHECK_THROWS_AS(cluster(rs, 1.5), ValidationError);
    CHECK_THROWS_AS(cluster(rs, -0.1), ValidationError);
  }

  TEST_CASE("property: membership is invariant under input permutation") {
    std::mt19937_64 g(17);
    std::vector<TraceRecord> rs;
    for (int i = 0; i < 80; ++i) {
      std::set<Behavior> b;
      for (int k = 0; k < 3; ++k) b.insert(static_cast<Behavior>(g() % 13));
      rs.push_back(rec("203.0." + std::to_string(g() % 3) + "." + std::to_string(i), b));
    }
    for (double theta : {0.0, 0.3, 0.5, 0.8, 1.0}) {
      const auto ref = cluster(rs, theta);
      CHECK(ref.assignment.size() == rs.size());
      for (int k = 0; k < 10; ++k) {
        std::shuffle(rs.begin(), rs.end(), g);
        REQUIRE(cluster(rs, theta) == ref);
      }
    }
  }
}

TEST_SUITE("correlate") {
  std::vector<TraceRecord> clustered(std::vector<TraceRecord> rs) {
    const auto c = cluster(rs, 0.5);
    for (auto& r : rs) r.cluster_id = c.assignment.at(r.trace_id);
    return rs;
  }

  CorrelateConfig cfg() {
    CorrelateConfig c;
    c.sim_epoch = kEpoch;
    return c;
  }

  TEST_CASE("coincident compatible cluster scores 1") {
    const auto rs = clustered({rec("203.0.113.5", {Behavior::SPAM}, "2026-01-01T02:00:00Z")});
    const std::vector<Alarm> as{alarm_at(2 * kHourMs, AttackClass::SMS_SPAM)};
    const auto reps = correlate(as, rs, cfg());
    REQUIRE(reps.size() == 1);
    REQUIRE(reps[0].matches.size() == 1);
    CHECK(reps[0].matches[0].score == 1.0);
    CHECK(reps[0].matches[0].behavior.matched == std::vector<Behavior>{Behavior::SPAM});
  }

  TEST_CASE("nothing inside the window") {
    const auto rs = clustered({rec("203.0.113.5", {Behavior::SPAM}, "2026-01-01T05:00:00Z")});
    const std::vector<Alarm> as{alarm_at(2 * kHourMs, AttackClass::SMS_SPAM)};
    const auto reps = correlate(as, rs, cfg());
    REQUIRE(reps.size() == 1);
    CHECK(reps[0].matches.empty());
  }

  TEST_CASE("window edge keeps a half score") {
    const auto rs = clustered({rec("203.0.113.5", {Behavior::DOS}, "2026-01-01T03:00:00Z")});
    const std::vector<Alarm> as{alarm_at(2 * kHourMs, AttackClass::SIGNALING_STORM)};
    const auto reps = correlate(as, rs, cfg());
    REQUIRE(reps[0].matches.size() == 1);
    CHECK(reps[0].matches[0].time.term == 0.0);
    CHECK(reps[0].matches[0].score == 0.5);
  }

  TEST_CASE("incompatible behavior and unmapped clocks") {
    const auto rs = clustered({rec("203.0.113.5", {Behavior::ADWARE}, "2026-01-01T02:00:00Z")});
    const std::vector<Alarm> as{alarm_at(2 * kHourMs, AttackClass::PREMIUM_ABUSE),
                                alarm_at(2 * kHourMs, std::nullopt)};
    const auto reps = correlate(as, rs, cfg());
    CHECK(reps[0].matches[0].score == 0.5);
    CHECK(reps[0].matches[0].behavior.matched.empty());
    CHECK(compatible_behaviors(AttackClass::BOTNET_DDOS) == std::vector<Behavior>{Behavior::BOTCLIENT, Behavior::DOS});
    CHECK(compatible_behaviors(std::nullopt).empty());
    CHECK_THROWS_AS(correlate(as, rs, CorrelateConfig{}), ValidationError);
    CHECK_THROWS_AS(correlate(as, std::vector<TraceRecord>{rec("1.2.3.4", {Behavior::DOS})}, cfg()),
                    ValidationError);
  }

  TEST_CASE("property: scores recompute exactly from stored evidence") {
    const std::vector<TruthInterval> truth{
        {AttackClass::SIGNALING_STORM, 8 * kHourMs, 9 * kHourMs, {}, "config"},
        {AttackClass::SMS_SPAM, 10 * kHourMs, 11 * kHourMs, {}, "config"},
    };
    const SimTime horizon = 12 * kHourMs;
    std::vector<TraceRecord> rs;
    for (const auto& j : generate_traces(truth, kEpoch, horizon, 3, 6, 40)) rs.push_back(decode_trace(j));
    rs = clustered(rs);

    std::vector<Alarm> as;
    std::mt19937_64 g(3);
    for (int i = 0; i < 200; ++i) {
      as.push_back(alarm_at(g() % horizon, static_cast<AttackClass>(g() % 4)));
    }
    auto cc = cfg();
    cc.window_ms = 1'800'000;
    std::size_t n = 0;
    for (const auto& r : correlate(as, rs, cc)) {
      const auto back = json::parse(json(r).dump()).get<AttributionReport>();
      CHECK(back == r);
      for (std::size_t k = 0; k < back.matches.size(); ++k) {
        const auto& m = back.matches[k];
        ++n;
        REQUIRE(recompute_score(m) == m.score);
        CHECK(m.score >= cc.min_score);
        if (k > 0) CHECK(back.matches[k - 1].score >= m.score);
      }
    }
    CHECK(n > 50);
  }
}
