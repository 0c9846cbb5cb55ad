#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "mobisec/service.hpp"

namespace mobisec {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response reply(const Request& req, http::status status, const json& body) {
  Response res{status, req.version()};
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

std::map<std::string, std::string> parse_query(std::string_view target) {
  std::map<std::string, std::string> out;
  const auto q = target.find('?');
  if (q == std::string_view::npos) return out;
  auto rest = target.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const auto pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    if (eq == std::string_view::npos) out.emplace(std::string(pair), "");
    else out.emplace(std::string(pair.substr(0, eq)), std::string(pair.substr(eq + 1)));
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return out;
}

std::string_view path_of(std::string_view target) { return target.substr(0, target.find('?')); }

json parse_body(const Request& req) {
  if (req.body().empty()) return json::object();
  try {
    return json::parse(req.body());
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("request body is not JSON: ") + e.what());
  }
}

Response handle(ServiceCore& core, const std::optional<json>& base, const Request& req) {
  const auto path = path_of(std::string_view(req.target().data(), req.target().size()));
  const auto method = req.method();
  try {
    if (method == http::verb::options) {
      Response res{http::status::no_content, req.version()};
      res.set(http::field::access_control_allow_origin, "*");
      res.set(http::field::access_control_allow_methods, "GET, POST, PATCH, DELETE, OPTIONS");
      res.set(http::field::access_control_allow_headers, "Content-Type");
      res.keep_alive(req.keep_alive());
      res.prepare_payload();
      return res;
    }
    if (path == "/run" && method == http::verb::post) {
      ScenarioConfig cfg;
      try {
        json body = parse_body(req);
        if (base) {
          json merged = *base;
          merged.merge_patch(body);
          body = std::move(merged);
        }
        cfg = body.get<ScenarioConfig>();
      } catch (const json::exception& e) {
        throw ValidationError(e.what());
      }
      return reply(req, http::status::created, core.start(std::move(cfg)));
    }
    if (path == "/run" && method == http::verb::delete_) return reply(req, http::status::ok, core.stop());
    if (path == "/attack" && method == http::verb::post) {
      AttackSpec spec;
      try {
        spec = parse_body(req).get<AttackSpec>();
      } catch (const json::exception& e) {
        throw ValidationError(e.what());
      }
      return reply(req, http::status::accepted, core.inject(spec));
    }
    if (path == "/detector" && method == http::verb::patch) {
      return reply(req, http::status::accepted, core.tune(parse_body(req)));
    }
    if (path == "/mark" && method == http::verb::post) {
      const auto body = parse_body(req);
      if (!body.contains("note") || !body.at("note").is_string()) throw ValidationError("mark needs a string 'note'");
      return reply(req, http::status::ok, core.mark(body.at("note").get<std::string>()));
    }
    if (path == "/manifest" && method == http::verb::get) return reply(req, http::status::ok, core.manifest());
    if (path == "/state" && method == http::verb::get) {
      return reply(req, http::status::ok, json{{"state", core.state()}});
    }
    if (path == "/stream") {
      return reply(req, http::status::upgrade_required, json{{"error", "/stream is a WebSocket endpoint"}});
    }
    return reply(req, http::status::not_found, json{{"error", "no such endpoint"}});
  } catch (const StateError& e) {
    return reply(req, http::status::conflict, json{{"error", e.what()}, {"state", e.state()}});
  } catch (const ValidationError& e) {
    return reply(req, http::status::bad_request, json{{"error", e.what()}});
  } catch (const std::exception& e) {
    return reply(req, http::status::internal_server_error, json{{"error", e.what()}});
  }
}

void stream(ServiceCore& core, const std::atomic<bool>& stopping, tcp::socket socket, const Request& req) {
  const auto query = parse_query(std::string_view(req.target().data(), req.target().size()));
  const auto channel = query.count("channel") ? query.at("channel") : std::string();
  double rate_hz = 1.0;
  ServiceCore::Subscription sub;
  try {
    if (query.count("rate_hz")) {
      try {
        rate_hz = std::stod(query.at("rate_hz"));
      } catch (const std::exception&) {
        throw ValidationError("rate_hz must be a number");
      }
    }
    sub = core.subscribe(channel, rate_hz);
  } catch (const StateError& e) {
    http::write(socket, reply(req, http::status::conflict, json{{"error", e.what()}, {"state", e.state()}}));
    return;
  } catch (const ValidationError& e) {
    http::write(socket, reply(req, http::status::bad_request, json{{"error", e.what()}}));
    return;
  }

  websocket::stream<tcp::socket> ws(std::move(socket));
  ws.accept(req);
  ws.text(true);
  ws.write(net::buffer(Frame{"open", 0, json{{"channel", sub.name}}}.dump()));

  // Snapshots are sampled down to the subscriber's rate; everything else is
  // forwarded as published.
  const bool sampled = sub.name == "snapshots";
  const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / rate_hz));
  auto due = std::chrono::steady_clock::now();
  // Late snapshot subscribers start from the present; alarm and metric
  // subscribers get the whole run so far.
  std::uint64_t cursor = sampled ? sub.channel->last_seq() : 0;
  for (;;) {
    if (stopping) return;
    auto batch = sub.channel->read(cursor, std::chrono::milliseconds(200));
    for (const auto& f : batch.frames) {
      if (sampled && f.type == "snapshot") {
        const auto now = std::chrono::steady_clock::now();
        if (now < due && !batch.closed) continue;
        due = std::max(due + period, now);
      }
      ws.write(net::buffer(f.dump()));
    }
    if (batch.closed) break;
  }
  ws.write(net::buffer(Frame{"close", sub.channel->last_seq() + 1, json{{"channel", sub.name}}}.dump()));
  ws.close(websocket::close_code::normal);
}

void session(ServiceCore& core, const std::optional<json>& base, const std::atomic<bool>& stopping,
             tcp::socket socket) {
  beast::error_code ec;
  beast::flat_buffer buffer;
  for (;;) {
    Request req;
    http::read(socket, buffer, req, ec);
    if (ec) break;
    if (websocket::is_upgrade(req)) {
      if (path_of(std::string_view(req.target().data(), req.target().size())) == "/stream") {
        stream(core, stopping, std::move(socket), req);
        return;
      }
      http::write(socket, reply(req, http::status::not_found, json{{"error", "no such stream endpoint"}}), ec);
      break;
    }
    auto res = handle(core, base, req);
    const bool keep = res.keep_alive();
    http::write(socket, res, ec);
    if (ec || !keep) break;
  }
  socket.shutdown(tcp::socket::shutdown_send, ec);
}

}  // namespace

struct HttpServer::Impl {
  ServiceCore& core;
  std::optional<json> base;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::thread thread;
  std::atomic<bool> stopping{false};

  Impl(ServiceCore& c, std::optional<json> b, const std::string& address, unsigned short port)
      : core(c), base(std::move(b)), acceptor(ioc, tcp::endpoint(net::ip::make_address(address), port)) {}

  std::mutex mu;
  std::condition_variable cv;
  std::map<std::uint64_t, tcp::socket::native_handle_type> live;
  std::uint64_t next_id = 0;

  void accept_loop() {
    while (!stopping) {
      tcp::socket socket(ioc);
      beast::error_code ec;
      acceptor.accept(socket, ec);
      if (stopping) break;
      if (ec) continue;
      std::uint64_t id;
      {
        std::lock_guard lock(mu);
        id = next_id++;
        live.emplace(id, socket.native_handle());
      }
      std::thread([this, id, s = std::move(socket)]() mutable {
        try {
          session(core, base, stopping, std::move(s));
        } catch (const std::exception&) {
          // client went away mid-stream
        }
        std::lock_guard lock(mu);
        live.erase(id);
        cv.notify_all();
      }).detach();
    }
  }

  // Unblocks every session and waits for them to finish.
  void drain() {
    std::unique_lock lock(mu);
    for (const auto& [id, fd] : live) ::shutdown(fd, SHUT_RDWR);
    cv.wait(lock, [&] { return live.empty(); });
  }
};

HttpServer::HttpServer(ServiceCore& core, const std::string& address, unsigned short port,
                       std::optional<ScenarioConfig> base) {
  std::optional<json> base_json;
  if (base) base_json = json(*base);
  try {
    impl_ = std::make_unique<Impl>(core, std::move(base_json), address, port);
  } catch (const boost::system::system_error& e) {
    throw ValidationError("cannot listen on " + address + ":" + std::to_string(port) + ": " + e.what());
  }
  port_ = impl_->acceptor.local_endpoint().port();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->accept_loop(); });
}

void HttpServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  // Wake the blocking accept with a throwaway connection.
  beast::error_code ec;
  tcp::socket poke(impl_->ioc);
  poke.connect(impl_->acceptor.local_endpoint(), ec);
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->acceptor.close(ec);
  impl_->drain();
}

}  // namespace mobisec
