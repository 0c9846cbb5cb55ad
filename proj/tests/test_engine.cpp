#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <unistd.h>

#include "mobisec/crypto.hpp"
#include "mobisec/report.hpp"

using namespace mobisec;
namespace fs = std::filesystem;

namespace {

ScenarioConfig small(std::uint64_t seed = 1, std::uint64_t population = 400, std::uint64_t hours = 6) {
  ScenarioConfig c;
  c.seed = seed;
  c.population = population;
  c.duration_ms = hours * kHourMs;
  c.detector.prefix_windows = 12;
  c.detector.calibration.min_windows = 12;
  return c;
}

AttackSpec storm(SimTime start, SimTime stop, std::uint32_t bots) {
  AttackSpec s;
  s.attack_class = AttackClass::SIGNALING_STORM;
  s.start = start;
  s.stop = stop;
  s.n_infected = bots;
  return s;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mobisec_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::vector<Alarm> only_alarms(const std::vector<StreamRecord>& rs) {
  std::vector<Alarm> out;
  for (const auto& r : rs) {
    if (const auto* a = std::get_if<Alarm>(&r)) out.push_back(*a);
  }
  return out;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults and round trip") {
    ScenarioConfig c;
    CHECK_NOTHROW(c.validate());
    c.attacks.push_back(storm(20 * kHourMs, 21 * kHourMs, 100));
    c.salt = salt_from_hex("0f0e0d0c0b0a09080706050403020100");
    const auto back = json::parse(json(c).dump()).get<ScenarioConfig>();
    CHECK(back == c);
    CHECK(config_hash(back) == config_hash(c));
    auto other = c;
    other.seed = 2;
    CHECK(config_hash(other) != config_hash(c));
  }

  TEST_CASE("validation") {
    auto j = json(ScenarioConfig{});
    j["schema_version"] = 2;
    CHECK_THROWS_AS(j.get<ScenarioConfig>(), ValidationError);

    ScenarioConfig c;
    c.attacks.push_back(storm(kHourMs, 2 * kHourMs, 10));  // inside the calibration prefix
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.attacks[0] = storm(20 * kHourMs, 25 * kHourMs, 10);
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.attacks[0] = storm(20 * kHourMs, 21 * kHourMs, 20000);
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.attacks.clear();
    c.population = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);

    ScenarioConfig d;
    d.detector.prefix_windows = 10;  // below calibration.min_windows
    CHECK_THROWS_AS(d.validate(), ValidationError);
  }

  TEST_CASE("environment overrides") {
    ScenarioConfig c;
    apply_env_overrides(c, {{"MOBISEC_SEED", "42"}, {"MOBISEC_POPULATION", "77"}, {"MOBISEC_LABELED", "false"},
                            {"MOBISEC_DURATION_MS", "3600000"}, {"OTHER", "x"}});
    CHECK(c.seed == 42);
    CHECK(c.population == 77);
    CHECK_FALSE(c.labeled);
    CHECK(c.duration_ms == kHourMs);
    CHECK_THROWS_AS(apply_env_overrides(c, {{"MOBISEC_SEED", "abc"}}), ValidationError);
  }

  TEST_CASE("detector patches") {
    const DetectorConfig base;
    const auto d = apply_detector_patch(base, json{{"cusum", {{"h", 12.0}}}, {"fusion", {{"w_b", 0.0}}}});
    CHECK(d.cusum.h == 12.0);
    CHECK(d.cusum.k == base.cusum.k);
    CHECK(d.fusion.w_b == 0.0);
    CHECK_THROWS_AS(apply_detector_patch(base, json{{"prefix_windows", 3}}), ValidationError);
    CHECK_THROWS_AS(apply_detector_patch(base, json{{"bayes", {{"rho", 0.5}}}}), ValidationError);
  }

  TEST_CASE("timestamps") {
    CHECK(parse_iso8601_ms("1970-01-01T00:00:00Z") == 0);
    CHECK(parse_iso8601_ms("2026-01-01T00:00:00.250Z") == 1767225600250);
    CHECK(format_iso8601_ms(1767225600250) == "2026-01-01T00:00:00.250Z");
    CHECK_THROWS_AS(parse_iso8601_ms("yesterday"), ValidationError);
  }
}

TEST_SUITE("engine") {
  TEST_CASE("empty run") {
    ScenarioConfig c;
    c.population = 1;
    c.duration_ms = 0;
    const auto out = run(c);
    CHECK(out.events.empty());
    CHECK(out.cdrs.empty());
    CHECK(out.alarms.empty());
    CHECK(out.metrics.empty());
    const auto dir = scratch("empty");
    const auto manifest = write_run(out, dir);
    CHECK(manifest.at("streams").at("events").at("lines") == 0);
    CHECK(manifest.at("streams").at("events").at("sha256") == to_hex(sha256("")));
    const auto back = load_run(dir);
    CHECK(back.events.empty());
    CHECK(back.config.duration_ms == 0);
    fs::remove_all(dir);
  }

  TEST_CASE("determinism") {
    auto c = small(3);
    c.attacks.push_back(storm(3 * kHourMs, 4 * kHourMs, 20));
    const auto a = write_run(run(c), scratch("det_a"));
    const auto b = write_run(run(c), scratch("det_b"));
    CHECK(a.at("streams") == b.at("streams"));
    c.seed = 4;
    const auto d = write_run(run(c), scratch("det_c"));
    CHECK(a.at("streams").at("events") != d.at("streams").at("events"));
    for (const auto* n : {"det_a", "det_b", "det_c"}) fs::remove_all(scratch(n));
  }

  TEST_CASE("causality and conservation") {
    const auto c = small(5);
    const auto out = run(c);
    REQUIRE_FALSE(out.events.empty());
    CHECK(out.cdrs.size() == out.sessions_planned);
    CHECK(out.raw_cdrs.size() == out.sessions_planned);
    std::map<std::uint64_t, RrcState> state;
    SimTime last = 0;
    for (const auto& e : out.events) {
      CHECK(e.t >= last);
      last = e.t;
      CHECK(validate_event(e, c.rrc));
      auto [it, fresh] = state.emplace(e.ue.value, RrcState::IDLE);
      CHECK(it->second == e.from);
      it->second = e.to;
    }
    SimTime last_cdr = 0;
    std::int64_t raw_total = 0, clean_total = 0;
    for (std::size_t i = 0; i < out.cdrs.size(); ++i) {
      CHECK(cdr_time(out.cdrs[i]) >= last_cdr);
      last_cdr = cdr_time(out.cdrs[i]);
      CHECK(std::holds_alternative<Pseudonym>(out.cdrs[i].ue));
      raw_total += out.raw_cdrs[i].charge;
      clean_total += out.cdrs[i].charge;
    }
    CHECK(raw_total == clean_total);
    CHECK(out.queue.arrivals == out.queue.served);
    std::uint64_t msgs = 0;
    for (const auto& e : out.events) msgs += e.msg_cost;
    CHECK(out.queue.arrivals == msgs);
  }

  TEST_CASE("storm promotions follow the compiled plan") {
    auto c = small(7);
    const auto spec = storm(3 * kHourMs, 4 * kHourMs, 20);
    c.attacks.push_back(spec);
    const auto out = run(c);

    std::vector<UeId> ids;
    for (std::uint64_t i = 0; i < c.population; ++i) ids.push_back(make_ue_id(c.seed, i));
    std::vector<UeId> infected;
    for (auto i : sample_infected(c.seed, 0, c.population, spec.n_infected)) infected.push_back(ids[i]);
    Rng rng(c.seed, StreamTag::kAttack, 0);
    const auto plan = compile_attack(spec, infected, c.rrc, rng);
    CHECK(out.attack_actions == plan.actions.size());

    std::set<std::pair<SimTime, std::uint64_t>> promotions;
    std::size_t labeled = 0;
    for (const auto& e : out.events) {
      if (e.cause != Cause::TRAFFIC || e.truth_label != AttackClass::SIGNALING_STORM) continue;
      ++labeled;
      promotions.emplace(e.t, e.ue.value);
    }
    std::size_t hits = 0;
    std::set<std::pair<SimTime, std::uint64_t>> planned;
    for (const auto& a : plan.actions) {
      planned.emplace(a.t, a.ue.value);
      hits += promotions.count({a.t, a.ue.value});
    }
    // Every storm-labeled promotion is a planned trigger; a trigger only
    // misses when the bot's own traffic already holds a channel.
    for (const auto& p : promotions) CHECK(planned.count(p) == 1);
    CHECK(hits == labeled);
    CHECK(static_cast<double>(hits) >= 0.9 * static_cast<double>(plan.actions.size()));

    REQUIRE(out.truth.size() == 1);
    CHECK(out.truth[0].infected.size() == 20);
  }

  TEST_CASE("property: promotion rate scales with population") {
    double small_total = 0, large_total = 0;
    for (std::uint64_t seed : {11, 12, 13}) {
      for (std::uint64_t pop : {2000, 4000}) {
        auto c = small(seed, pop, 3);
        c.detector.user_scoring = false;
        const auto out = run(c);
        double promos = 0;
        for (const auto& e : out.events) promos += e.from == RrcState::IDLE;
        (pop == 2000 ? small_total : large_total) += promos;
      }
    }
    CHECK(large_total / small_total == doctest::Approx(2.0).epsilon(0.03));
  }

  TEST_CASE("fast line formatters match the JSON library") {
    auto c = small(9, 200, 3);
    c.attacks.push_back(storm(2 * kHourMs, 3 * kHourMs, 10));
    const auto out = run(c);
    for (const auto& e : out.events) REQUIRE(event_line(e) == json(e).dump());
    for (const auto& r : out.cdrs) REQUIRE(cdr_line(r) == json(r).dump());
    SignalingEvent odd{0, UeId{~0ULL}, RrcState::DCH, RrcState::FACH, Cause::TIMER, 0, AttackClass::BOTNET_DDOS};
    CHECK(event_line(odd) == json(odd).dump());
    Cdr neg{0, pseudonymize(UeId{1}, Salt{}), CdrKind::VOICE, pseudonymize(UeId{2}, Salt{}), ~0ULL >> 1, 0, 0, 0,
            std::nullopt};
    CHECK(cdr_line(neg) == json(neg).dump());
  }

  TEST_CASE("replay equivalence and completeness") {
    auto c = small(21);
    c.attacks.push_back(storm(3 * kHourMs, 4 * kHourMs, 20));
    const auto out = run(c);
    REQUIRE_FALSE(only_alarms(out.alarms).empty());
    const auto dir = scratch("replay");
    write_run(out, dir);
    const auto rec = load_run(dir);
    CHECK(rec.alarms == out.alarms);
    CHECK(replay(rec) == out.alarms);

    auto deaf = rec.config.detector;
    deaf.cusum.h = deaf.bayes.h_llr = deaf.user.z_h = 1e12;
    deaf.fusion.h_fused = 1e12;
    CHECK(only_alarms(replay(rec, deaf)).empty());

    auto lines = read_lines(dir / "events.jsonl");
    lines.pop_back();
    write_lines(dir / "events.jsonl", lines);
    CHECK_THROWS_AS(load_run(dir), StreamError);
    CHECK_NOTHROW(load_run(dir, false));

    // Disorder is caught by the detector even when digests are bypassed.
    auto shuffled = rec;
    std::swap(shuffled.events[10], shuffled.events[5000]);
    CHECK_THROWS_AS(replay(shuffled), StreamError);
    fs::remove_all(dir);
  }

  TEST_CASE("sanitized exports carry no raw identifiers") {
    auto c = small(23, 300, 3);
    c.attacks.push_back(storm(2 * kHourMs, 3 * kHourMs, 10));
    const auto out = run(c);
    const auto dir = scratch("sanitized");
    write_run(out, dir);
    std::string blob;
    for (const auto* f : {"cdrs.jsonl", "alarms.jsonl", "metrics.csv", "truth.jsonl", "manifest.json", "config.json"}) {
      std::ifstream in(dir / f, std::ios::binary);
      blob.append(std::istreambuf_iterator<char>(in), {});
    }
    for (std::uint64_t i = 0; i < c.population; ++i) {
      const auto id = make_ue_id(c.seed, i);
      CHECK(blob.find(std::to_string(id.value)) == std::string::npos);
      const std::string bytes(reinterpret_cast<const char*>(&id.value), sizeof id.value);
      CHECK(blob.find(bytes) == std::string::npos);
    }
    CHECK(blob.find(salt_to_hex(c.effective_salt())) == std::string::npos);
    fs::remove_all(dir);
  }

  TEST_CASE("live control is recorded and replays exactly") {
    auto c = small(31);
    c.detector.cusum.h = 5.0;
    Simulation sim(c);
    sim.record_start();
    sim.run_until(2 * kHourMs + 123);
    const auto tune = sim.tune(json{{"cusum", {{"h", 8.0}}}});
    CHECK(tune.applied_at == 13 * 600'000);
    CHECK(tune.window_index == 13);
    sim.run_until(2 * kHourMs + 40 * 60'000);
    const auto inj = sim.inject(storm(0, 5 * kHourMs, 20));
    CHECK(inj.applied_at == 17 * 600'000);
    sim.mark("suspect premium abuse wave");
    CHECK_THROWS_AS(sim.tune(json{{"windows", 1}}), ValidationError);
    auto out = sim.finish();

    std::vector<Marker> markers;
    for (const auto& r : out.alarms) {
      if (const auto* m = std::get_if<Marker>(&r)) markers.push_back(*m);
    }
    REQUIRE(markers.size() == 2);
    CHECK(markers[0].kind == "tune");
    CHECK(markers[0].window_index == 13);
    CHECK(markers[1].kind == "inject");
    for (const auto& a : only_alarms(out.alarms)) {
      if (a.detector != DetectorKind::CUSUM) continue;
      CHECK(a.score > (a.window_index >= 13 ? 8.0 : 5.0));
    }
    REQUIRE(out.truth.size() == 1);
    CHECK(out.truth[0].origin == "inject");
    CHECK(out.truth[0].start == 17 * 600'000);

    std::vector<std::string> commands;
    for (const auto& a : out.annotations) commands.push_back(a.command);
    CHECK(commands == std::vector<std::string>{"START", "TUNE", "INJECT", "MARK"});

    const auto dir = scratch("live");
    write_run(out, dir);
    const auto rec = load_run(dir);
    CHECK(replay(rec) == out.alarms);
    fs::remove_all(dir);
  }

  TEST_CASE("stop ends the run early") {
    auto c = small(33);
    c.attacks.push_back(storm(4 * kHourMs, 5 * kHourMs, 10));
    Simulation sim(c);
    sim.run_until(3 * kHourMs + 1000);
    sim.stop();
    const auto out = sim.finish();
    CHECK(out.config.duration_ms == 3 * kHourMs + 1000);
    CHECK(out.config.attacks.empty());
    for (const auto& e : out.events) CHECK(e.t < 3 * kHourMs + 1000);
    CHECK(out.metrics.size() == 18);
    const auto dir = scratch("stopped");
    write_run(out, dir);
    CHECK(replay(load_run(dir)) == out.alarms);
    fs::remove_all(dir);
  }

  TEST_CASE("snapshot") {
    auto c = small(35, 300, 2);
    Simulation sim(c);
    sim.run_until(kHourMs);
    const auto s = sim.snapshot();
    CHECK(s.t == kHourMs);
    CHECK(s.rrc_histogram[0] + s.rrc_histogram[1] + s.rrc_histogram[2] == c.population);
    const json j = s;
    CHECK(j.contains("rrc_state_histogram"));
    CHECK(j.at("detector") == json(c.detector));
  }

  TEST_CASE("infected sampling") {
    const auto a = sample_infected(1, 0, 1000, 100);
    CHECK(a.size() == 100);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
    CHECK(a == sample_infected(1, 0, 1000, 100));
    CHECK(a != sample_infected(1, 1, 1000, 100));
    CHECK(sample_infected(1, 0, 5, 5) == std::vector<std::uint32_t>{0, 1, 2, 3, 4});
  }

  TEST_CASE("labeled windows") {
    std::vector<WindowFeatures> ws(6);
    for (std::size_t i = 0; i < ws.size(); ++i) {
      ws[i].start = i * 600'000;
      ws[i].width_ms = 600'000;
    }
    const std::vector<TruthInterval> truth{
        {AttackClass::SMS_SPAM, 600'000, 1'800'000, {}, "config"},
        {AttackClass::BOTNET_DDOS, 2'400'000, 3'000'000, {}, "config"},
        {AttackClass::PREMIUM_ABUSE, 3'300'000, 3'600'000, {}, "config"},
    };
    const auto l = labeled_windows(ws, truth);
    // Partially covered and DDoS windows are dropped.
    REQUIRE(l.size() == 4);
    const auto spam = attack_to_window_class(AttackClass::SMS_SPAM);
    CHECK(l[0].label == 0);
    CHECK(l[1].label == spam);
    CHECK(l[2].label == spam);
    CHECK(l[3].label == 0);
    CHECK(l[3].features.start == 1'800'000);
  }
}

TEST_SUITE("report") {
  RecordedRun fixture() {
    RecordedRun r;
    r.config = small(1);
    r.manifest = json{{"config_hash", "abc"}};
    for (std::uint64_t w = 0; w < 36; ++w) r.metrics.push_back({w * 600'000, 0.01 * static_cast<double>(w), 0, 0, 0});
    return r;
  }

  Alarm fused(std::uint64_t window, std::optional<AttackClass> cls = std::nullopt) {
    Alarm a;
    a.detector = DetectorKind::FUSED;
    a.window_index = window;
    a.t_raised = (window + 1) * 600'000;
    a.score = 2.0;
    if (cls) {
      a.attack_class = cls;
      a.confidence = 0.9;
    }
    return a;
  }

  TEST_CASE("attack-free run without alarms") {
    const auto r = report_run(fixture());
    for (const auto& [k, v] : r.false_alarms) CHECK(v == 0);
    CHECK(r.attacks.empty());
    CHECK(r.windows_per_class[0] == 24);
    CHECK(r.confusion[0][0] == 24);
  }

  TEST_CASE("latency and false alarms") {
    auto run = fixture();
    run.truth.push_back({AttackClass::SIGNALING_STORM, 3 * kHourMs, 4 * kHourMs, {}, "config"});
    run.alarms.push_back(fused(13));  // before the attack
    run.alarms.push_back(fused(22, AttackClass::SIGNALING_STORM));
    run.alarms.push_back(fused(23));
    const auto r = report_run(run);
    REQUIRE(r.attacks.size() == 1);
    REQUIRE(r.attacks[0].latency_windows);
    CHECK(*r.attacks[0].latency_windows == 4);
    CHECK(r.attacks[0].detected_class == AttackClass::SIGNALING_STORM);
    CHECK(r.false_alarms.at("FUSED") == 1);
    CHECK(r.confusion[1][1] == 1);
    CHECK(r.confusion[1][5] == 1);
    CHECK(r.confusion[1][0] == 4);
    CHECK(r.confusion[0][5] == 1);
    std::uint64_t rows = 0;
    for (std::size_t i = 0; i < kTruthClasses; ++i) {
      std::uint64_t sum = 0;
      for (auto v : r.confusion[i]) sum += v;
      CHECK(sum == r.windows_per_class[i]);
      rows += sum;
    }
    CHECK(rows == 24);
  }

  TEST_CASE("missed attack and user alarm credit") {
    auto run = fixture();
    const auto bot = pseudonymize(UeId{1}, Salt{});
    const auto bystander = pseudonymize(UeId{2}, Salt{});
    run.truth.push_back({AttackClass::PREMIUM_ABUSE, 3 * kHourMs, 4 * kHourMs, {bot}, "config"});
    Alarm u;
    u.scope = AlarmScope::USER;
    u.detector = DetectorKind::USER_SCORE;
    u.window_index = 19;
    u.t_raised = 20 * 600'000;
    u.user = bot;
    run.alarms.push_back(u);
    u.user = bystander;
    run.alarms.push_back(u);
    const auto r = report_run(run);
    CHECK_FALSE(r.attacks[0].latency_windows);
    CHECK(r.false_alarms.at("USER_SCORE") == 1);
  }

  TEST_CASE("unlabeled runs are refused") {
    auto run = fixture();
    run.config.labeled = false;
    CHECK_THROWS_AS(report_run(run), ValidationError);
  }

  TEST_CASE("percentiles and purity") {
    CHECK(percentile({}, 50) == 0.0);
    CHECK(percentile({5, 1, 3, 2, 4}, 50) == 3.0);
    CHECK(percentile({5, 1, 3, 2, 4}, 100) == 5.0);
    CHECK(percentile({5, 1, 3, 2, 4}, 0) == 1.0);
    const auto a = report_run(fixture());
    const std::vector<RunReport> runs{a, a};
    const auto s = summarize(runs);
    CHECK(json(s).dump() == json(summarize(runs)).dump());
    CHECK(render_text(s) == render_text(summarize(runs)));
    CHECK(s.confusion[0][0] == 48);
  }
}
