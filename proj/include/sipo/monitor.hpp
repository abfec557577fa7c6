#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sipo/calibration.hpp"
#include "sipo/posture_engine.hpp"
#include "sipo/session_log.hpp"
#include "sipo/transport.hpp"
#include "sipo/wire.hpp"

namespace sipo {

struct ServiceConfig {
  net::Endpoint device;
  MonitorConfig monitor;
  /// "paper" or a path to a model record file.
  std::string model_source = "paper";
  std::string log_path = "session.log";
  std::string api_host = "127.0.0.1";
  std::uint16_t api_port = 8080;  // 0 picks a free port
  /// Opens a session on the first sample so a headless run is monitored from t=0.
  bool auto_start_session = false;
  std::chrono::milliseconds reconnect_initial{250};
  std::chrono::milliseconds reconnect_cap{5000};

  CalibrationModel load_calibration() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
EnvLookup process_env();

/// Parses a JSON config document, then applies SIPO_* overrides:
/// SIPO_DEVICE, SIPO_API_ADDR, SIPO_LOG_PATH, SIPO_MODEL, SIPO_AUTO_START,
/// SIPO_DEBOUNCE_MS, SIPO_REPEAT_MS, SIPO_SIT_LIMIT_MS. Relative paths are
/// resolved against `base_dir`. Throws InputError listing bad fields.
ServiceConfig parse_service_config(const std::string& json_text, const EnvLookup& env,
                                   const std::string& base_dir = ".");
ServiceConfig load_service_config(const std::string& path, const EnvLookup& env = process_env());

/// Fan-out of published records to any number of subscribers, in order.
class Broadcaster {
 public:
  class Subscription {
   public:
    /// Next record, or nullopt after `timeout` or once closed.
    std::optional<std::string> pop(std::chrono::milliseconds timeout);
    bool closed() const;

   private:
    friend class Broadcaster;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> queue_;
    bool closed_ = false;
  };

  std::shared_ptr<Subscription> subscribe();
  void unsubscribe(const std::shared_ptr<Subscription>& sub);
  void publish(const std::string& record);
  void close_all();
  std::size_t subscriber_count() const;

 private:
  static constexpr std::size_t kMaxQueue = 100'000;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Subscription>> subs_;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string body;  // JSON
};

/// Host side of the loop: device link, calibration, engine, session log and
/// the operator API.
///
/// One pipeline thread owns the device stream and steps the engine for every
/// sample. API calls that change engine state take the same lock, so threshold
/// updates are serialized with steps. Readers get JSON snapshots.
class MonitorService {
 public:
  /// Loads the model and opens the session log; throws InputError on either failure.
  explicit MonitorService(ServiceConfig config);
  ~MonitorService();
  MonitorService(const MonitorService&) = delete;
  MonitorService& operator=(const MonitorService&) = delete;

  /// Connects to the device (TransportError if unreachable), then starts the
  /// pipeline thread and, when `serve_http` is set, the HTTP API.
  void start(bool serve_http = true);
  void stop();

  /// Port the HTTP API is bound to (after start).
  std::uint16_t api_port() const { return bound_port_; }

  ApiResponse handle_api_request(const ApiRequest& request);

  std::shared_ptr<Broadcaster::Subscription> subscribe() { return broadcaster_.subscribe(); }
  void unsubscribe(const std::shared_ptr<Broadcaster::Subscription>& s) {
    broadcaster_.unsubscribe(s);
  }

  /// JSON document served by GET /status.
  std::string status_json() const;

  /// True while the pipeline thread is alive.
  bool running() const { return running_.load(); }

  /// Blocks until the pipeline thread ends (stdio EOF or stop()).
  void wait();

 private:
  enum class LinkState { Connecting, Connected, Disconnected };

  void pipeline_loop();
  bool try_connect();
  void on_frames(const wire::DecodeOutput& out, std::chrono::steady_clock::time_point received);
  void handle_sample(const wire::SensorData& f, std::chrono::steady_clock::time_point received);
  void link_event(EventKind kind);
  void flush_commands();

  // Callers hold mu_.
  void apply_locked(const EngineInput& in);
  void persist_locked(const LogRecord& r);
  void publish_event_locked(const SessionEvent& e);
  std::string new_session_id();

  ApiResponse api_status();
  ApiResponse api_session_start();
  ApiResponse api_session_stop();
  ApiResponse api_baseline();
  ApiResponse api_zone(const std::string& body);
  ApiResponse api_session_log(const std::map<std::string, std::string>& query);

  ServiceConfig config_;
  CalibrationModel model_;
  SessionLog log_;
  Broadcaster broadcaster_;

  mutable std::mutex mu_;
  PostureEngine engine_;
  std::string session_id_;
  std::int64_t ts_offset_ = 0;
  std::int64_t last_engine_ts_ = 0;
  bool seen_sample_ = false;
  bool fresh_link_ = true;
  bool auto_started_ = false;
  LinkState link_ = LinkState::Connecting;
  std::optional<double> last_counts_;
  std::optional<double> last_angle_;
  bool last_degraded_ = false;
  bool persistence_failed_ = false;
  std::vector<VibrateCommand> pending_commands_;
  std::map<std::string, std::uint64_t> counters_;
  std::deque<double> latencies_ms_;

  net::Stream stream_;  // pipeline thread only
  wire::Decoder decoder_;

  std::atomic<bool> running_{false};
  std::atomic<bool> stopping_{false};
  std::thread pipeline_;
  std::thread http_thread_;
  std::uint16_t bound_port_ = 0;
  struct Http;
  std::unique_ptr<Http> http_;
};

}  // namespace sipo
