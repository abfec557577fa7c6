#include "sipo/monitor.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sipo/text.hpp"

namespace sipo {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Config

CalibrationModel ServiceConfig::load_calibration() const {
  if (model_source == "paper") return paper_model();
  return load_model(model_source);
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

namespace {

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || p == "paper") return p;
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty() || base_dir == ".") return p;
  return (std::filesystem::path(base_dir) / path).string();
}

void split_addr(const std::string& addr, ServiceConfig& cfg) {
  auto ep = net::Endpoint::parse(addr);
  if (ep.kind != net::Endpoint::Kind::Tcp) throw InputError("api_addr must be host:port");
  cfg.api_host = ep.host;
  cfg.api_port = ep.port;
}

}  // namespace

ServiceConfig parse_service_config(const std::string& json_text, const EnvLookup& env,
                                   const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("service config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InputError("service config must be a JSON object");

  ServiceConfig cfg;
  std::vector<std::string> bad;
  auto field = [&](const json& obj, const char* key, auto& dst) {
    if (!obj.contains(key)) return;
    try {
      obj.at(key).get_to(dst);
    } catch (const json::exception&) {
      bad.emplace_back(key);
    }
  };

  std::string device;
  std::string api_addr;
  field(doc, "device", device);
  field(doc, "api_addr", api_addr);
  field(doc, "log_path", cfg.log_path);
  field(doc, "model", cfg.model_source);
  field(doc, "auto_start_session", cfg.auto_start_session);
  std::int64_t reconnect_initial = cfg.reconnect_initial.count();
  std::int64_t reconnect_cap = cfg.reconnect_cap.count();
  field(doc, "reconnect_initial_ms", reconnect_initial);
  field(doc, "reconnect_cap_ms", reconnect_cap);

  if (doc.contains("monitor")) {
    const auto& m = doc.at("monitor");
    if (!m.is_object()) {
      bad.emplace_back("monitor");
    } else {
      std::string mode = std::string(to_string(cfg.monitor.mode));
      field(m, "mode", mode);
      if (auto pm = parse_threshold_mode(mode)) cfg.monitor.mode = *pm; else bad.emplace_back("monitor.mode");
      field(m, "safe_low", cfg.monitor.safe_low);
      field(m, "safe_high", cfg.monitor.safe_high);
      field(m, "normal_low", cfg.monitor.normal_low);
      field(m, "normal_high", cfg.monitor.normal_high);
      field(m, "baseline_counts", cfg.monitor.baseline_counts);
      field(m, "baseline_tolerance", cfg.monitor.baseline_tolerance);
      field(m, "debounce_ms", cfg.monitor.debounce_ms);
      field(m, "vibrate_repeat_ms", cfg.monitor.vibrate_repeat_ms);
      field(m, "sit_limit_ms", cfg.monitor.sit_limit_ms);
      field(m, "vibrate_pulse_ms", cfg.monitor.vibrate_pulse_ms);
    }
  }

  auto env_int = [&](const char* name, auto& dst) {
    if (auto v = env(name)) {
      if (auto n = text::parse_int(*v)) dst = static_cast<std::remove_reference_t<decltype(dst)>>(*n);
      else bad.emplace_back(name);
    }
  };
  if (auto v = env("SIPO_DEVICE")) device = *v;
  if (auto v = env("SIPO_API_ADDR")) api_addr = *v;
  if (auto v = env("SIPO_LOG_PATH")) cfg.log_path = *v;
  if (auto v = env("SIPO_MODEL")) cfg.model_source = *v;
  if (auto v = env("SIPO_AUTO_START")) cfg.auto_start_session = (*v == "1" || *v == "true");
  env_int("SIPO_DEBOUNCE_MS", cfg.monitor.debounce_ms);
  env_int("SIPO_REPEAT_MS", cfg.monitor.vibrate_repeat_ms);
  env_int("SIPO_SIT_LIMIT_MS", cfg.monitor.sit_limit_ms);

  if (device.empty()) {
    bad.emplace_back("device (missing)");
  } else {
    try {
      cfg.device = net::Endpoint::parse(device);
    } catch (const InputError&) {
      bad.emplace_back("device");
    }
  }
  if (!api_addr.empty()) {
    try {
      split_addr(api_addr, cfg);
    } catch (const InputError&) {
      bad.emplace_back("api_addr");
    }
  }
  if (reconnect_initial <= 0 || reconnect_cap < reconnect_initial) bad.emplace_back("reconnect_*_ms");
  cfg.reconnect_initial = std::chrono::milliseconds(reconnect_initial);
  cfg.reconnect_cap = std::chrono::milliseconds(reconnect_cap);
  if (cfg.log_path.empty()) bad.emplace_back("log_path");

  if (!bad.empty()) {
    std::string list;
    for (const auto& b : bad) list += (list.empty() ? "" : ", ") + b;
    throw InputError("invalid service config fields: " + list);
  }
  cfg.monitor.validate();
  cfg.log_path = resolve(base_dir, cfg.log_path);
  cfg.model_source = resolve(base_dir, cfg.model_source);
  return cfg;
}

ServiceConfig load_service_config(const std::string& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open service config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  auto dir = std::filesystem::path(path).parent_path().string();
  return parse_service_config(ss.str(), env, dir.empty() ? "." : dir);
}

// ---------------------------------------------------------------------------
// Broadcaster

std::optional<std::string> Broadcaster::Subscription::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  auto s = std::move(queue_.front());
  queue_.pop_front();
  return s;
}

bool Broadcaster::Subscription::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::shared_ptr<Broadcaster::Subscription> Broadcaster::subscribe() {
  auto s = std::make_shared<Subscription>();
  std::lock_guard lock(mu_);
  subs_.push_back(s);
  return s;
}

void Broadcaster::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  {
    std::lock_guard lock(mu_);
    std::erase(subs_, sub);
  }
  std::lock_guard lock(sub->mu_);
  sub->closed_ = true;
  sub->cv_.notify_all();
}

void Broadcaster::publish(const std::string& record) {
  std::lock_guard lock(mu_);
  for (auto it = subs_.begin(); it != subs_.end();) {
    auto& s = **it;
    std::lock_guard sl(s.mu_);
    if (s.queue_.size() >= kMaxQueue) {
      // A subscriber this far behind is cut off rather than silently skipped.
      s.closed_ = true;
      s.cv_.notify_all();
      it = subs_.erase(it);
      continue;
    }
    s.queue_.push_back(record);
    s.cv_.notify_one();
    ++it;
  }
}

void Broadcaster::close_all() {
  std::lock_guard lock(mu_);
  for (auto& s : subs_) {
    std::lock_guard sl(s->mu_);
    s->closed_ = true;
    s->cv_.notify_all();
  }
  subs_.clear();
}

std::size_t Broadcaster::subscriber_count() const {
  std::lock_guard lock(mu_);
  return subs_.size();
}

// ---------------------------------------------------------------------------
// Service

struct MonitorService::Http {
  httplib::Server server;
};

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json config_json(const MonitorConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"safe_low", c.safe_low},
          {"safe_high", c.safe_high},
          {"normal_low", c.normal_low},
          {"normal_high", c.normal_high},
          {"baseline_counts", c.baseline_counts},
          {"baseline_tolerance", c.baseline_tolerance},
          {"debounce_ms", c.debounce_ms},
          {"vibrate_repeat_ms", c.vibrate_repeat_ms},
          {"sit_limit_ms", c.sit_limit_ms},
          {"vibrate_pulse_ms", c.vibrate_pulse_ms}};
}

ApiResponse reply(int status, const json& body) { return {status, body.dump()}; }

ApiResponse error_reply(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return reply(status, extra);
}

}  // namespace

MonitorService::MonitorService(ServiceConfig config)
    : config_(std::move(config)),
      model_(config_.load_calibration()),
      log_(config_.log_path),
      engine_(config_.monitor) {}

MonitorService::~MonitorService() { stop(); }

bool MonitorService::try_connect() {
  try {
    stream_ = net::connect_tcp(config_.device.host, config_.device.port);
    return true;
  } catch (const TransportError&) {
    return false;
  }
}

void MonitorService::start(bool serve_http) {
  if (config_.device.kind == net::Endpoint::Kind::Stdio) {
    stream_ = net::Stream::stdio();
  } else {
    stream_ = net::connect_tcp(config_.device.host, config_.device.port);
  }
  {
    std::lock_guard lock(mu_);
    link_ = LinkState::Connected;
  }

  if (serve_http) {
    http_ = std::make_unique<Http>();
    auto& srv = http_->server;
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
      ApiRequest r{req.method, req.path, {}, req.body};
      for (const auto& [k, v] : req.params) r.query[k] = v;
      auto out = handle_api_request(r);
      res.status = out.status;
      res.set_content(out.body, "application/json");
    };
    srv.Get("/status", route);
    srv.Get("/session/log", route);
    srv.Post("/session/start", route);
    srv.Post("/session/stop", route);
    srv.Post("/threshold/baseline", route);
    srv.Post("/threshold/zone", route);
    srv.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    srv.Get("/stream", [this](const httplib::Request&, httplib::Response& res) {
      auto sub = broadcaster_.subscribe();
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [this, sub](std::size_t, httplib::DataSink& sink) {
            if (stopping_.load()) return false;
            auto msg = sub->pop(std::chrono::milliseconds(250));
            if (msg) {
              const std::string frame = "data: " + *msg + "\n\n";
              return sink.write(frame.data(), frame.size());
            }
            if (sub->closed()) return false;
            return sink.is_writable();
          },
          [this, sub](bool) { broadcaster_.unsubscribe(sub); });
    });
    int port = config_.api_port == 0 ? srv.bind_to_any_port(config_.api_host)
                                     : (srv.bind_to_port(config_.api_host, config_.api_port)
                                            ? config_.api_port
                                            : -1);
    if (port <= 0) {
      throw TransportError("cannot bind API on " + config_.api_host + ":" +
                           std::to_string(config_.api_port));
    }
    bound_port_ = static_cast<std::uint16_t>(port);
    http_thread_ = std::thread([this] { http_->server.listen_after_bind(); });
    http_->server.wait_until_ready();
  }

  running_ = true;
  pipeline_ = std::thread([this] { pipeline_loop(); });
}

void MonitorService::stop() {
  stopping_ = true;
  if (http_) http_->server.stop();
  broadcaster_.close_all();
  if (pipeline_.joinable()) pipeline_.join();
  if (http_thread_.joinable()) http_thread_.join();
  try {
    log_.sync();
  } catch (const Error&) {
  }
}

void MonitorService::wait() {
  while (running_.load() && !stopping_.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

void MonitorService::pipeline_loop() {
  auto backoff = config_.reconnect_initial;
  std::uint8_t buf[4096];
  while (!stopping_.load()) {
    if (!stream_.is_open()) {
      if (config_.device.kind == net::Endpoint::Kind::Stdio) break;
      const auto until = Clock::now() + backoff;
      while (!stopping_.load() && Clock::now() < until) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      if (stopping_.load()) break;
      if (try_connect()) {
        backoff = config_.reconnect_initial;
        link_event(EventKind::DeviceRestored);
      } else {
        backoff = std::min(backoff * 2, config_.reconnect_cap);
      }
      continue;
    }

    try {
      flush_commands();
      auto n = stream_.read_some(buf, std::chrono::milliseconds(20));
      if (!n) throw TransportError("device closed the connection");
      if (*n > 0) {
        const auto received = Clock::now();
        wire::DecodeOutput out;
        decoder_.feed(std::span<const std::uint8_t>(buf, *n), out);
        on_frames(out, received);
        flush_commands();
      }
    } catch (const TransportError&) {
      stream_.close();
      wire::DecodeOutput tail;
      decoder_.finish(tail);
      on_frames(tail, Clock::now());
      decoder_ = wire::Decoder{};
      link_event(EventKind::DeviceLost);
    }
  }
  running_ = false;
}

void MonitorService::link_event(EventKind kind) {
  std::lock_guard lock(mu_);
  if (kind == EventKind::DeviceLost) {
    link_ = LinkState::Disconnected;
    ++counters_["disconnects"];
  } else {
    link_ = LinkState::Connected;
    fresh_link_ = true;
    ++counters_["reconnects"];
  }
  SessionEvent e{last_engine_ts_, kind, std::nullopt};
  if (!session_id_.empty()) persist_locked(LogRecord::from_event(e, session_id_));
  publish_event_locked(e);
}

void MonitorService::on_frames(const wire::DecodeOutput& out, Clock::time_point received) {
  if (!out.errors.empty()) {
    std::lock_guard lock(mu_);
    counters_["frames_corrupt"] += out.errors.size();
  }
  for (const auto& f : out.frames) {
    {
      std::lock_guard lock(mu_);
      ++counters_["frames_ok"];
      if (std::holds_alternative<wire::Heartbeat>(f)) ++counters_["heartbeats"];
      if (std::holds_alternative<wire::Ack>(f)) ++counters_["acks"];
    }
    if (const auto* s = std::get_if<wire::SensorData>(&f)) handle_sample(*s, received);
  }
}

void MonitorService::flush_commands() {
  std::vector<VibrateCommand> cmds;
  {
    std::lock_guard lock(mu_);
    cmds.swap(pending_commands_);
  }
  for (const auto& c : cmds) {
    stream_.write_all(wire::encode_frame(wire::Vibrate{c.duration_ms}));
    std::lock_guard lock(mu_);
    ++counters_["vibrate_frames_sent"];
  }
}

std::string MonitorService::new_session_id() {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
  return "S" + std::to_string(ms) + "-" + std::to_string(++counters_["sessions_started"]);
}

void MonitorService::persist_locked(const LogRecord& r) {
  try {
    log_.append(r);
    ++counters_["records_logged"];
  } catch (const Error&) {
    persistence_failed_ = true;
    ++counters_["persist_failures"];
  }
}

void MonitorService::publish_event_locked(const SessionEvent& e) {
  json j = {{"type", "event"},
            {"kind", to_string(e.kind)},
            {"ts_ms", e.ts_ms},
            {"angle_deg", optional_number(e.angle_deg)},
            {"session_id", session_id_.empty() ? json(nullptr) : json(session_id_)}};
  broadcaster_.publish(j.dump());
}

void MonitorService::apply_locked(const EngineInput& in) {
  std::vector<SessionEvent> events;
  std::vector<VibrateCommand> commands;
  engine_.step(in, events, commands);
  last_engine_ts_ = std::max(last_engine_ts_, timestamp_of(in));
  for (const auto& e : events) {
    if (!session_id_.empty()) persist_locked(LogRecord::from_event(e, session_id_));
    publish_event_locked(e);
    if (e.kind == EventKind::VibrateSent) ++counters_["vibrate_events"];
  }
  pending_commands_.insert(pending_commands_.end(), commands.begin(), commands.end());
}

void MonitorService::handle_sample(const wire::SensorData& f, Clock::time_point received) {
  std::lock_guard lock(mu_);
  std::int64_t ts = static_cast<std::int64_t>(f.timestamp_ms) + ts_offset_;
  if (seen_sample_ && ts < last_engine_ts_) {
    if (fresh_link_) {
      // Device clock restarted with the new connection: continue from where we were.
      ts_offset_ += last_engine_ts_ - ts;
      ts = last_engine_ts_;
    } else {
      ++counters_["ordering_errors"];
      return;
    }
  }
  fresh_link_ = false;
  seen_sample_ = true;

  const double counts = f.sensor_value;
  bool clamped = false;
  const double angle = invert_clamped(model_, counts, clamped);

  if (config_.auto_start_session && !auto_started_ && session_id_.empty()) {
    auto_started_ = true;
    session_id_ = new_session_id();
    LogRecord cfg;
    cfg.ts_ms = ts;
    cfg.kind = RecordKind::Config;
    cfg.session_id = session_id_;
    cfg.config = engine_.state().config;
    persist_locked(cfg);
    apply_locked(input::StartSession{ts});
  }

  try {
    apply_locked(input::Sample{ts, angle, counts});
  } catch (const Error&) {
    ++counters_["engine_errors"];
    return;
  }
  if (!session_id_.empty()) {
    LogRecord r;
    r.ts_ms = ts;
    r.kind = RecordKind::Sample;
    r.angle_deg = angle;
    r.counts = counts;
    r.degraded = clamped;
    r.session_id = session_id_;
    persist_locked(r);
  }
  last_counts_ = counts;
  last_angle_ = angle;
  last_degraded_ = clamped;
  ++counters_["samples"];
  if (clamped) ++counters_["degraded_samples"];

  const auto zone = engine_.state().zone;
  json j = {{"type", "sample"},
            {"ts_ms", ts},
            {"counts", f.sensor_value},
            {"angle_deg", angle},
            {"zone", zone ? to_string(*zone) : "unknown"},
            {"degraded", clamped}};
  broadcaster_.publish(j.dump());

  const double ms = std::chrono::duration<double, std::milli>(Clock::now() - received).count();
  latencies_ms_.push_back(ms);
  if (latencies_ms_.size() > 20000) latencies_ms_.pop_front();
}

std::string MonitorService::status_json() const {
  std::lock_guard lock(mu_);
  const auto& st = engine_.state();
  json counters = json::object();
  for (const char* k : {"frames_ok", "frames_corrupt", "samples", "degraded_samples", "heartbeats",
                        "acks", "vibrate_frames_sent", "vibrate_events", "ordering_errors",
                        "records_logged", "persist_failures", "disconnects", "reconnects"}) {
    auto it = counters_.find(k);
    counters[k] = it == counters_.end() ? 0 : it->second;
  }
  json latency = {{"samples", latencies_ms_.size()}, {"p50", nullptr}, {"p99", nullptr}, {"max", nullptr}};
  if (!latencies_ms_.empty()) {
    std::vector<double> v(latencies_ms_.begin(), latencies_ms_.end());
    std::sort(v.begin(), v.end());
    auto pct = [&](double p) {
      auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) - 1;
      return v[std::min(idx, v.size() - 1)];
    };
    latency["p50"] = pct(0.50);
    latency["p99"] = pct(0.99);
    latency["max"] = v.back();
  }
  const char* link = link_ == LinkState::Connected      ? "connected"
                     : link_ == LinkState::Connecting ? "connecting"
                                                        : "disconnected";
  json session = {{"active", st.session_active},
                  {"id", session_id_.empty() ? json(nullptr) : json(session_id_)},
                  {"start_ts_ms", st.session_active ? json(st.session_start_ms) : json(nullptr)},
                  {"elapsed_ms", st.session_active ? json(last_engine_ts_ - st.session_start_ms)
                                                   : json(nullptr)},
                  {"sit_limit_reached", st.session_active && st.sit_limit_fired}};
  json doc = {{"connection", link},
              {"device", config_.device.to_string()},
              {"counts", optional_number(last_counts_)},
              {"angle_deg", optional_number(last_angle_)},
              {"zone", st.zone ? json(to_string(*st.zone)) : json("unknown")},
              {"degraded", last_degraded_},
              {"out_of_zone_alerted", st.alerted},
              {"last_ts_ms", seen_sample_ ? json(last_engine_ts_) : json(nullptr)},
              {"session", session},
              {"config", config_json(st.config)},
              {"counters", counters},
              {"persistence_failed", persistence_failed_},
              {"latency_ms", latency}};
  return doc.dump();
}

ApiResponse MonitorService::handle_api_request(const ApiRequest& req) {
  try {
    if (req.method == "GET" && req.path == "/status") return api_status();
    if (req.method == "POST" && req.path == "/session/start") return api_session_start();
    if (req.method == "POST" && req.path == "/session/stop") return api_session_stop();
    if (req.method == "POST" && req.path == "/threshold/baseline") return api_baseline();
    if (req.method == "POST" && req.path == "/threshold/zone") return api_zone(req.body);
    if (req.method == "GET" && req.path == "/session/log") return api_session_log(req.query);
    return error_reply(404, "no route for " + req.method + " " + req.path);
  } catch (const InputError& e) {
    return error_reply(400, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

ApiResponse MonitorService::api_status() { return {200, status_json()}; }

ApiResponse MonitorService::api_session_start() {
  std::lock_guard lock(mu_);
  if (engine_.state().session_active) {
    return error_reply(409, "session already active", {{"session_id", session_id_}});
  }
  session_id_ = new_session_id();
  LogRecord cfg;
  cfg.ts_ms = last_engine_ts_;
  cfg.kind = RecordKind::Config;
  cfg.session_id = session_id_;
  cfg.config = engine_.state().config;
  persist_locked(cfg);
  apply_locked(input::StartSession{last_engine_ts_});
  return reply(200, {{"session_id", session_id_}, {"start_ts_ms", last_engine_ts_}});
}

ApiResponse MonitorService::api_session_stop() {
  std::lock_guard lock(mu_);
  if (!engine_.state().session_active) return error_reply(409, "no active session");
  const auto id = session_id_;
  const auto elapsed = last_engine_ts_ - engine_.state().session_start_ms;
  apply_locked(input::StopSession{last_engine_ts_});
  session_id_.clear();
  return reply(200, {{"session_id", id}, {"elapsed_ms", elapsed}});
}

ApiResponse MonitorService::api_baseline() {
  std::lock_guard lock(mu_);
  if (link_ != LinkState::Connected) return error_reply(409, "device not connected");
  if (!last_counts_) return error_reply(409, "no sensor value received yet");
  auto cfg = set_baseline(*last_counts_, engine_.state().config);
  apply_locked(input::UpdateConfig{last_engine_ts_, cfg});
  if (!session_id_.empty()) {
    LogRecord r;
    r.ts_ms = last_engine_ts_;
    r.kind = RecordKind::Config;
    r.session_id = session_id_;
    r.config = cfg;
    persist_locked(r);
  }
  return reply(200, {{"config", config_json(cfg)}});
}

ApiResponse MonitorService::api_zone(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body.empty() ? "{}" : body);
  } catch (const json::parse_error&) {
    return error_reply(400, "validation", {{"fields", {"body"}}});
  }
  std::vector<std::string> bad;
  auto number = [&](const char* key, bool required) -> std::optional<double> {
    if (!doc.is_object() || !doc.contains(key)) {
      if (required) bad.emplace_back(key);
      return std::nullopt;
    }
    const auto& v = doc.at(key);
    if (!v.is_number()) {
      bad.emplace_back(key);
      return std::nullopt;
    }
    return v.get<double>();
  };
  auto low = number("safe_low", true);
  auto high = number("safe_high", true);
  auto nlow = number("normal_low", false);
  auto nhigh = number("normal_high", false);
  if (low && high && !(*low < *high)) {
    bad.emplace_back("safe_low");
    bad.emplace_back("safe_high");
  }
  if (!bad.empty()) return error_reply(400, "validation", {{"fields", bad}});

  std::lock_guard lock(mu_);
  if (link_ != LinkState::Connected) return error_reply(409, "device not connected");
  auto cfg = engine_.state().config;
  cfg.mode = ThresholdMode::AngleZone;
  cfg.safe_low = *low;
  cfg.safe_high = *high;
  if (nlow) cfg.normal_low = *nlow;
  if (nhigh) cfg.normal_high = *nhigh;
  try {
    cfg.validate();
  } catch (const InputError& e) {
    return error_reply(400, "validation", {{"fields", {"normal_low", "normal_high"}}, {"detail", e.what()}});
  }
  apply_locked(input::UpdateConfig{last_engine_ts_, cfg});
  if (!session_id_.empty()) {
    LogRecord r;
    r.ts_ms = last_engine_ts_;
    r.kind = RecordKind::Config;
    r.session_id = session_id_;
    r.config = cfg;
    persist_locked(r);
  }
  return reply(200, {{"config", config_json(cfg)}});
}

ApiResponse MonitorService::api_session_log(const std::map<std::string, std::string>& query) {
  auto it = query.find("session_id");
  if (it == query.end() || it->second.empty()) {
    return error_reply(400, "validation", {{"fields", {"session_id"}}});
  }
  {
    std::lock_guard lock(mu_);
    log_.sync();
  }
  auto parsed = load_log(config_.log_path);
  json records = json::array();
  for (const auto& r : parsed.records) {
    if (r.session_id == it->second) records.push_back(format_record(r));
  }
  if (records.empty()) return error_reply(404, "unknown session", {{"session_id", it->second}});
  return reply(200, {{"session_id", it->second}, {"records", records}});
}

}  // namespace sipo
