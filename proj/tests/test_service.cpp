#include <doctest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <filesystem>
#include <thread>
#include <unistd.h>

#include "mobisec/service.hpp"

using namespace mobisec;
namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using namespace std::chrono_literals;

namespace {

ScenarioConfig small(double speed, bool attack = true) {
  ScenarioConfig c;
  c.seed = 21;
  c.population = 400;
  c.duration_ms = 6 * kHourMs;
  c.speed = speed;
  c.detector.prefix_windows = 12;
  c.detector.calibration.min_windows = 12;
  if (attack) {
    AttackSpec s;
    s.attack_class = AttackClass::SIGNALING_STORM;
    s.start = 3 * kHourMs;
    s.stop = 4 * kHourMs;
    s.n_infected = 20;
    c.attacks.push_back(s);
  }
  return c;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mobisec_service_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::vector<Frame> drain(const Channel& ch, std::uint64_t cursor = 0) {
  std::vector<Frame> out;
  for (;;) {
    auto b = ch.read(cursor, 500ms);
    out.insert(out.end(), b.frames.begin(), b.frames.end());
    if (b.closed) return out;
  }
}

struct Reply {
  int status = 0;
  json body;
  http::response<http::string_body> raw;
};

Reply request(unsigned short port, http::verb verb, const std::string& target, const std::string& body = "") {
  net::io_context ioc;
  tcp::socket s(ioc);
  s.connect({net::ip::make_address("127.0.0.1"), port});
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.set(http::field::connection, "close");
  if (!body.empty()) req.set(http::field::content_type, "application/json");
  req.body() = body;
  req.prepare_payload();
  http::write(s, req);
  beast::flat_buffer buf;
  Reply r;
  http::read(s, buf, r.raw);
  r.status = static_cast<int>(r.raw.result_int());
  r.body = r.raw.body().empty() ? json() : json::parse(r.raw.body());
  return r;
}

std::vector<json> subscribe_ws(unsigned short port, const std::string& target) {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws(ioc);
  ws.next_layer().connect({net::ip::make_address("127.0.0.1"), port});
  ws.handshake("127.0.0.1", target);
  std::vector<json> frames;
  for (;;) {
    beast::flat_buffer buf;
    beast::error_code ec;
    ws.read(buf, ec);
    if (ec) break;
    frames.push_back(json::parse(beast::buffers_to_string(buf.data())));
  }
  return frames;
}

}  // namespace

TEST_SUITE("channel") {
  TEST_CASE("unbounded log replays everything in order") {
    Channel ch;
    for (int i = 0; i < 5; ++i) CHECK(ch.publish("alarm", json{{"i", i}}) == static_cast<std::uint64_t>(i + 1));
    ch.close();
    CHECK_THROWS_AS(ch.publish("alarm", json()), ContractViolation);
    const auto fs = drain(ch);
    REQUIRE(fs.size() == 5);
    for (std::size_t i = 0; i < fs.size(); ++i) CHECK(fs[i].seq == i + 1);
    CHECK(drain(ch) == drain(ch));
  }

  TEST_CASE("bounded log reports what a slow reader missed") {
    Channel ch(4);
    for (int i = 0; i < 10; ++i) ch.publish("snapshot", json{{"i", i}});
    std::uint64_t cursor = 0;
    const auto b = ch.read(cursor, 0ms);
    REQUIRE(b.frames.size() == 5);
    CHECK(b.frames[0].type == "gap");
    CHECK(b.frames[0].seq == 1);
    CHECK(b.frames[0].payload.at("skipped") == 6);
    CHECK(b.frames[1].seq == 7);
    CHECK(cursor == 10);
    CHECK_FALSE(b.closed);
    CHECK(ch.read(cursor, 10ms).frames.empty());
  }

  TEST_CASE("frame encoding") {
    CHECK(json::parse(Frame{"alarm", 3, json{{"x", 1}}}.dump()) ==
          json{{"type", "alarm"}, {"seq", 3}, {"payload", {{"x", 1}}}});
  }
}

TEST_SUITE("service core") {
  TEST_CASE("commands need a running scenario") {
    ServiceCore core;
    CHECK(core.state() == RunState::IDLE);
    try {
      core.inject(AttackSpec{});
      FAIL("inject accepted while idle");
    } catch (const StateError& e) {
      CHECK(e.state() == RunState::IDLE);
    }
    CHECK_THROWS_AS(core.tune(json::object()), StateError);
    CHECK_THROWS_AS(core.stop(), StateError);
    CHECK_THROWS_AS(core.subscribe("alarms"), StateError);
    CHECK_THROWS_AS(core.subscribe("weather"), ValidationError);
    CHECK_THROWS_AS(core.subscribe("alarms", 0.0), ValidationError);
    auto bad = small(1.0);
    bad.population = 0;
    CHECK_THROWS_AS(core.start(bad), ValidationError);
    CHECK(core.state() == RunState::IDLE);
  }

  TEST_CASE("a finished run streams what it records") {
    const auto dir = scratch("finished");
    ServiceCore core({.out_dir = dir});
    core.start(small(1e9));
    const auto a = core.subscribe("alarms");
    const auto b = core.subscribe("alarms");
    const auto m = core.subscribe("metrics");
    core.wait_idle();
    const auto fa = drain(*a.channel);
    CHECK(fa == drain(*b.channel));
    CHECK(drain(*m.channel).size() == 36);

    const auto rec = load_run(dir / "run-1");
    REQUIRE(fa.size() == rec.alarms.size());
    REQUIRE_FALSE(fa.empty());
    for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i].payload == json(std::get<Alarm>(rec.alarms[i])));
    const auto man = core.manifest();
    CHECK(man.at("state") == "IDLE");
    CHECK(man.at("config_hash") == rec.manifest.at("config_hash"));
    fs::remove_all(dir);
  }

  TEST_CASE("zero-alarm run closes an empty channel") {
    ServiceCore core;
    auto c = small(1e9, false);
    c.detector.user_scoring = false;
    core.start(c);
    const auto a = core.subscribe("alarms");
    core.wait_idle();
    CHECK(drain(*a.channel).empty());
    CHECK(a.channel->last_seq() == 0);
  }

  TEST_CASE("live commands are acknowledged, streamed and annotated") {
    ServiceCore core;
    core.start(small(3000.0));
    CHECK(core.state() == RunState::RUNNING);
    CHECK_THROWS_AS(core.start(small(3000.0)), StateError);
    const auto a = core.subscribe("alarms");

    const auto ack = core.tune(json{{"cusum", {{"h", 9.0}}}});
    CHECK(ack.at("command") == "TUNE");
    CHECK(ack.at("applied_at").get<SimTime>() % 600'000 == 0);
    CHECK_THROWS_AS(core.tune(json{{"no_such_param", 1}}), ValidationError);
    core.mark("operator note");
    AttackSpec s;
    s.attack_class = AttackClass::SMS_SPAM;
    s.stop = 6 * kHourMs;
    s.n_infected = 10;
    CHECK(core.inject(s).at("command") == "INJECT");

    std::uint64_t cursor = 0;
    bool seen = false;
    for (int i = 0; i < 50 && !seen; ++i) {
      for (const auto& f : a.channel->read(cursor, 100ms).frames) {
        if (f.type == "param_change" && f.payload.at("marker") == "tune") seen = true;
      }
    }
    CHECK(seen);
    core.stop();
    core.wait_idle();
    CHECK_THROWS_AS(core.mark("late"), StateError);

    const auto man = core.manifest();
    std::map<std::string, int> counts;
    for (const auto& n : man.at("annotations")) ++counts[n.at("command").get<std::string>()];
    CHECK(counts == std::map<std::string, int>{{"START", 1}, {"TUNE", 1}, {"MARK", 1}, {"INJECT", 1}, {"STOP", 1}});
  }

  TEST_CASE("a stalled snapshot reader sees a gap") {
    ServiceCore core;
    core.start(small(1.0, false));
    const auto sub = core.subscribe("snapshots", 20.0);
    std::uint64_t cursor = sub.channel->last_seq();
    std::this_thread::sleep_for(1500ms);
    const auto b = sub.channel->read(cursor, 100ms);
    REQUIRE_FALSE(b.frames.empty());
    CHECK(b.frames[0].type == "gap");
    CHECK(b.frames[0].payload.at("skipped").get<int>() > 0);
    CHECK(b.frames.size() == 17);
    core.stop();
    core.wait_idle();
  }
}

TEST_SUITE("http") {
  TEST_CASE("request routing and status codes") {
    ServiceCore core;
    HttpServer server(core, "127.0.0.1", 0, small(3000.0));
    server.start();
    const auto port = server.port();
    REQUIRE(port != 0);

    auto r = request(port, http::verb::get, "/state");
    CHECK(r.status == 200);
    CHECK(r.body.at("state") == "IDLE");
    CHECK(r.raw[http::field::access_control_allow_origin] == "*");
    CHECK(request(port, http::verb::options, "/run").status == 204);
    CHECK(request(port, http::verb::get, "/nowhere").status == 404);

    const json spam{{"class", "SMS_SPAM"}, {"start", 0}, {"stop", 3600000}, {"n_infected", 5}};
    r = request(port, http::verb::post, "/attack", spam.dump());
    CHECK(r.status == 409);
    CHECK(r.body.at("state") == "IDLE");
    CHECK(request(port, http::verb::post, "/run", "{not json").status == 400);
    CHECK(request(port, http::verb::post, "/run", R"({"population": 0})").status == 400);
    CHECK(request(port, http::verb::get, "/stream?channel=alarms").status == 426);

    r = request(port, http::verb::post, "/run", R"({"seed": 22})");
    CHECK(r.status == 201);
    CHECK(r.body.at("state") == "RUNNING");
    CHECK(request(port, http::verb::post, "/run", "").status == 409);

    r = request(port, http::verb::patch, "/detector", R"({"cusum": {"h": 9}})");
    CHECK(r.status == 202);
    CHECK(r.body.at("command") == "TUNE");
    CHECK(request(port, http::verb::patch, "/detector", R"({"cusum": {"h": -1}})").status == 400);
    CHECK(request(port, http::verb::post, "/attack", spam.dump()).status == 202);
    CHECK(request(port, http::verb::post, "/mark", "{}").status == 400);
    CHECK(request(port, http::verb::post, "/mark", R"({"note": "look here"})").status == 200);

    r = request(port, http::verb::get, "/manifest");
    CHECK(r.status == 200);
    CHECK(r.body.at("seed") == 22);
    CHECK(r.body.at("annotations").size() == 4);

    CHECK(request(port, http::verb::delete_, "/run").status == 200);
    core.wait_idle();
    CHECK(request(port, http::verb::delete_, "/run").status == 409);
    server.stop();
  }

  TEST_CASE("websocket streams") {
    ServiceCore core;
    HttpServer server(core, "127.0.0.1", 0);
    server.start();
    const auto port = server.port();

    {
      net::io_context ioc;
      websocket::stream<tcp::socket> ws(ioc);
      ws.next_layer().connect({net::ip::make_address("127.0.0.1"), port});
      CHECK_THROWS(ws.handshake("127.0.0.1", "/stream?channel=weather"));
    }

    auto quiet = small(1e9, false);
    quiet.detector.user_scoring = false;
    core.start(quiet);
    core.wait_idle();
    const auto empty = subscribe_ws(port, "/stream?channel=alarms");
    REQUIRE(empty.size() == 2);
    CHECK(empty[0].at("type") == "open");
    CHECK(empty[0].at("seq") == 0);
    CHECK(empty[1].at("type") == "close");
    CHECK(empty[1].at("seq") == 1);

    core.start(small(20000.0));
    std::vector<json> x, y;
    std::thread tx([&] { x = subscribe_ws(port, "/stream?channel=alarms"); });
    std::thread ty([&] { y = subscribe_ws(port, "/stream?channel=alarms"); });
    const auto snaps = subscribe_ws(port, "/stream?channel=snapshots&rate_hz=5");
    tx.join();
    ty.join();
    core.wait_idle();
    CHECK(x == y);
    REQUIRE(x.size() > 2);
    for (std::size_t i = 1; i + 1 < x.size(); ++i) {
      CHECK(x[i].at("type") == "alarm");
      CHECK(x[i].at("seq") == i);
    }
    CHECK(x.back().at("type") == "close");
    REQUIRE(snaps.size() >= 3);
    CHECK(snaps.front().at("type") == "open");
    CHECK(snaps[1].at("type") == "snapshot");
    CHECK(snaps[1].at("payload").contains("rrc_state_histogram"));
    CHECK(snaps.back().at("type") == "close");
    server.stop();
  }

  TEST_CASE("stop ends open streams") {
    ServiceCore core;
    HttpServer server(core, "127.0.0.1", 0);
    server.start();
    core.start(small(1.0));
    std::vector<json> frames;
    std::thread t([&] { frames = subscribe_ws(server.port(), "/stream?channel=metrics"); });
    std::this_thread::sleep_for(300ms);
    const auto t0 = std::chrono::steady_clock::now();
    server.stop();
    t.join();
    CHECK(std::chrono::steady_clock::now() - t0 < 3s);
    REQUIRE_FALSE(frames.empty());
    CHECK(frames[0].at("type") == "open");
    core.stop();
  }
}
