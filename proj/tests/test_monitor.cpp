#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <fstream>
#include <map>

#include "harness.hpp"
#include "sipo/wire.hpp"

using namespace sipo;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

EnvLookup env_of(std::map<std::string, std::string> m) {
  return [m](const std::string& k) -> std::optional<std::string> {
    auto it = m.find(k);
    if (it == m.end()) return std::nullopt;
    return it->second;
  };
}

json status(MonitorService& s) { return json::parse(s.status_json()); }

ApiResponse call(MonitorService& s, const std::string& method, const std::string& path,
                 const std::string& body = "", std::map<std::string, std::string> query = {}) {
  return s.handle_api_request({method, path, std::move(query), body});
}

std::vector<json> drain(Broadcaster::Subscription& sub, std::chrono::milliseconds quiet = 300ms) {
  std::vector<json> out;
  while (auto m = sub.pop(quiet)) out.push_back(json::parse(*m));
  return out;
}

}  // namespace

TEST_CASE("service config: JSON fields, env overrides, relative paths") {
  const std::string doc = R"({
    "device": "127.0.0.1:7000", "api_addr": "0.0.0.0:9000", "log_path": "logs/s.log",
    "auto_start_session": true, "reconnect_initial_ms": 100, "reconnect_cap_ms": 1000,
    "monitor": {"safe_low": 88, "safe_high": 112, "debounce_ms": 1500}
  })";
  auto cfg = parse_service_config(doc, env_of({}), "/etc/sipo");
  CHECK(cfg.device.port == 7000);
  CHECK(cfg.api_host == "0.0.0.0");
  CHECK(cfg.api_port == 9000);
  CHECK(cfg.log_path == "/etc/sipo/logs/s.log");
  CHECK(cfg.model_source == "paper");
  CHECK(cfg.auto_start_session);
  CHECK(cfg.reconnect_initial == 100ms);
  CHECK(cfg.monitor.safe_low == 88.0);
  CHECK(cfg.monitor.debounce_ms == 1500);

  cfg = parse_service_config(doc, env_of({{"SIPO_DEVICE", "stdio"}, {"SIPO_DEBOUNCE_MS", "0"},
                                          {"SIPO_SIT_LIMIT_MS", "5000"}, {"SIPO_AUTO_START", "0"}}));
  CHECK(cfg.device.kind == net::Endpoint::Kind::Stdio);
  CHECK(cfg.monitor.debounce_ms == 0);
  CHECK(cfg.monitor.sit_limit_ms == 5000);
  CHECK_FALSE(cfg.auto_start_session);
}

TEST_CASE("service config: every bad field is listed") {
  try {
    parse_service_config(R"({"api_addr": "nope", "reconnect_initial_ms": 0, "monitor": {"debounce_ms": "x"}})",
                         env_of({}));
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("device") != std::string::npos);
    CHECK(msg.find("api_addr") != std::string::npos);
    CHECK(msg.find("reconnect") != std::string::npos);
    CHECK(msg.find("debounce_ms") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_service_config("[1,2]", env_of({})), InputError);
  CHECK_THROWS_AS(parse_service_config("{", env_of({})), InputError);
  CHECK_THROWS_AS(parse_service_config(R"({"device":"stdio","monitor":{"safe_low":120}})", env_of({})),
                  InputError);
  CHECK_THROWS_AS(parse_service_config(R"({"device":"stdio"})", env_of({{"SIPO_REPEAT_MS", "soon"}})),
                  InputError);
}

TEST_CASE("broadcaster fans out in order and drops unsubscribed readers") {
  Broadcaster b;
  auto a = b.subscribe();
  auto c = b.subscribe();
  b.publish("1");
  b.publish("2");
  CHECK(a->pop(10ms) == "1");
  CHECK(a->pop(10ms) == "2");
  CHECK(c->pop(10ms) == "1");
  b.unsubscribe(c);
  b.publish("3");
  CHECK(b.subscriber_count() == 1);
  CHECK(a->pop(10ms) == "3");
  CHECK(c->pop(10ms) == "2");
  CHECK_FALSE(c->pop(10ms));
  CHECK(c->closed());
}

TEST_CASE("unwritable log path fails at construction") {
  auto cfg = harness::service_config(1, "/nonexistent-dir/sub/session.log");
  CHECK_THROWS_AS(MonitorService{cfg}, InputError);
}

TEST_CASE("unreachable device fails start") {
  std::uint16_t port;
  {
    auto l = net::Listener::bind("127.0.0.1", 0);
    port = l.port();
  }
  MonitorService svc(harness::service_config(port, harness::temp_path("log")));
  CHECK_THROWS_AS(svc.start(false), TransportError);
}

TEST_CASE("cold start reports an unknown zone and no reading") {
  harness::DeviceHost dev({harness::flat(90.0, 1000)}, {});
  MonitorService svc(harness::service_config(dev.port(), harness::temp_path("log")));
  const auto s = status(svc);
  CHECK(s["zone"] == "unknown");
  CHECK(s["counts"].is_null());
  CHECK(s["angle_deg"].is_null());
  CHECK(s["session"]["active"] == false);
  CHECK(call(svc, "POST", "/threshold/baseline").status == 409);
}

TEST_CASE("live API: baseline capture, zone updates and session lifecycle") {
  DeviceOptions opt;
  opt.pace = true;
  harness::DeviceHost dev({harness::flat(90.0, 30000)}, opt);
  const auto log_path = harness::temp_path("log");
  MonitorService svc(harness::service_config(dev.port(), log_path));
  svc.start(false);
  REQUIRE(harness::eventually([&] { return status(svc)["counts"].is_number(); }));

  auto s = status(svc);
  CHECK(s["connection"] == "connected");
  CHECK(s["counts"] == 513);
  CHECK(s["angle_deg"].get<double>() == doctest::Approx(90.0).epsilon(0.01));
  CHECK(s["zone"] == "normal");

  auto r = call(svc, "POST", "/threshold/baseline");
  REQUIRE(r.status == 200);
  auto body = json::parse(r.body);
  CHECK(body["config"]["mode"] == "sensor_baseline");
  CHECK(body["config"]["baseline_counts"] == 513.0);

  r = call(svc, "POST", "/threshold/zone", R"({"safe_low": 100})");
  CHECK(r.status == 400);
  CHECK(json::parse(r.body)["fields"] == json::array({"safe_high"}));
  r = call(svc, "POST", "/threshold/zone", R"({"safe_low": 100, "safe_high": 95})");
  CHECK(r.status == 400);
  r = call(svc, "POST", "/threshold/zone", R"({"safe_low": 85, "safe_high": 112})");
  REQUIRE(r.status == 200);
  CHECK(json::parse(r.body)["config"]["mode"] == "angle_zone");

  CHECK(call(svc, "POST", "/session/stop").status == 409);
  r = call(svc, "POST", "/session/start");
  REQUIRE(r.status == 200);
  const std::string id = json::parse(r.body)["session_id"];
  CHECK(call(svc, "POST", "/session/start").status == 409);
  const auto samples_before = status(svc)["counters"]["samples"].get<int>();
  REQUIRE(harness::eventually([&] { return status(svc)["counters"]["samples"].get<int>() > samples_before + 3; }));
  CHECK(status(svc)["session"]["active"] == true);
  CHECK(call(svc, "POST", "/session/stop").status == 200);

  r = call(svc, "GET", "/session/log", "", {{"session_id", id}});
  REQUIRE(r.status == 200);
  const auto records = json::parse(r.body)["records"];
  REQUIRE(records.size() >= 5);
  CHECK(records.front().get<std::string>().find("kind=config") != std::string::npos);
  CHECK(records.back().get<std::string>().find("kind=session_stop") != std::string::npos);
  CHECK(call(svc, "GET", "/session/log", "", {{"session_id", "S0-404"}}).status == 404);
  CHECK(call(svc, "GET", "/session/log").status == 400);
  CHECK(call(svc, "DELETE", "/status").status == 404);

  auto parsed = load_log(log_path);
  CHECK(parsed.skipped.empty());
  auto rep = replay(parsed.records, id);
  CHECK(rep.divergences.empty());
  svc.stop();
}

TEST_CASE("corrupted frames are counted and skipped") {
  auto listener = net::Listener::bind("127.0.0.1", 0);
  std::thread dev([&] {
    auto conn = listener.accept(2000ms);
    if (!conn) return;
    auto good1 = wire::encode_frame(wire::SensorData{0, 513});
    auto bad = wire::encode_frame(wire::SensorData{50, 514});
    bad.back() ^= 0xFF;
    auto good2 = wire::encode_frame(wire::SensorData{100, 515});
    std::vector<std::uint8_t> all;
    for (auto* v : {&good1, &bad, &good2}) all.insert(all.end(), v->begin(), v->end());
    conn->write_all(all);
    std::this_thread::sleep_for(300ms);
  });
  MonitorService svc(harness::service_config(listener.port(), harness::temp_path("log")));
  svc.start(false);
  REQUIRE(harness::eventually([&] { return status(svc)["counters"]["samples"] == 2; }));
  auto s = status(svc);
  CHECK(s["counters"]["frames_corrupt"].get<int>() >= 1);
  CHECK(s["counts"] == 515);
  dev.join();
  svc.stop();
}

TEST_CASE("device drop and return: lost/restored events, monotonic time") {
  DeviceOptions opt;
  opt.pace = false;
  opt.linger = 0ms;
  harness::DeviceHost dev({harness::flat(92.0, 1000), harness::flat(92.0, 1000)}, opt);
  MonitorService svc(harness::service_config(dev.port(), harness::temp_path("log")));
  auto sub = svc.subscribe();
  svc.start(false);
  REQUIRE(harness::eventually([&] { return status(svc)["counters"]["samples"] == 40; }));
  const auto records = drain(*sub);
  std::vector<std::string> link;
  std::int64_t last_ts = -1;
  bool monotone = true;
  for (const auto& r : records) {
    if (r["type"] == "event") link.push_back(r["kind"]);
    if (r["type"] == "sample") {
      monotone = monotone && r["ts_ms"].get<std::int64_t>() >= last_ts;
      last_ts = r["ts_ms"];
    }
  }
  REQUIRE(link.size() >= 2);
  CHECK(link[0] == "device_lost");
  CHECK(link[1] == "device_restored");
  CHECK(monotone);
  auto s = status(svc);
  CHECK(s["counters"]["reconnects"].get<int>() >= 1);
  CHECK(s["counters"]["ordering_errors"] == 0);
  svc.stop();
}

TEST_CASE("out-of-zone excursion reaches the device as a vibrate pulse") {
  TrajectorySpec spec;
  spec.waypoints = {{0, 92.0}, {1000, 92.0}, {1050, 115.0}, {4000, 115.0}};
  spec.noise_sigma = 0.0;
  DeviceOptions opt;
  opt.pace = false;
  opt.linger = 1500ms;
  harness::DeviceHost dev({spec}, opt);
  auto cfg = harness::service_config(dev.port(), harness::temp_path("log"));
  cfg.auto_start_session = true;
  MonitorService svc(cfg);
  svc.start(false);
  dev.join();
  const auto reports = dev.reports();
  REQUIRE(reports.size() == 1);
  REQUIRE(reports[0].actuations.size() == 1);
  CHECK(reports[0].actuations[0].duration_ms == 400);
  REQUIRE(harness::eventually([&] { return status(svc)["counters"]["acks"] == 1; }));
  svc.stop();
}

TEST_CASE("HTTP API and SSE stream") {
  DeviceOptions opt;
  opt.pace = true;
  harness::DeviceHost dev({harness::flat(100.0, 30000)}, opt);
  MonitorService svc(harness::service_config(dev.port(), harness::temp_path("log")));
  svc.start(true);
  REQUIRE(svc.api_port() != 0);

  httplib::Client cli("127.0.0.1", svc.api_port());
  auto res = cli.Get("/status");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(json::parse(res->body).contains("counters"));
  res = cli.Post("/session/start", "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);

  std::string buffer;
  std::vector<json> events;
  httplib::Client stream_cli("127.0.0.1", svc.api_port());
  stream_cli.set_read_timeout(5, 0);
  stream_cli.Get("/stream", [&](const char* data, std::size_t n) {
    buffer.append(data, n);
    std::size_t pos;
    while ((pos = buffer.find("\n\n")) != std::string::npos) {
      const auto frame = buffer.substr(0, pos);
      buffer.erase(0, pos + 2);
      if (frame.rfind("data: ", 0) == 0) events.push_back(json::parse(frame.substr(6)));
    }
    return events.size() < 5;
  });
  REQUIRE(events.size() >= 5);
  for (const auto& e : events) {
    CHECK(e["type"] == "sample");
    CHECK(e["zone"] == "safe");
    CHECK(e["counts"] == 528);
  }
  svc.stop();
}
