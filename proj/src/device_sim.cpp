#include "sipo/device_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <thread>

#include "sipo/session_log.hpp"
#include "sipo/text.hpp"
#include "sipo/wire.hpp"

namespace sipo {

void TrajectorySpec::validate() const {
  if (waypoints.size() < 2) throw InputError("trajectory needs at least two waypoints");
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    if (!std::isfinite(waypoints[i].angle_deg)) {
      throw InputError("trajectory waypoint " + std::to_string(i) + " has a non-finite angle");
    }
    if (i > 0 && waypoints[i].time_ms <= waypoints[i - 1].time_ms) {
      throw InputError("trajectory waypoint times must be strictly increasing (at index " +
                       std::to_string(i) + ")");
    }
  }
  if (!std::isfinite(sample_rate_hz) || sample_rate_hz <= 0.0) {
    throw InputError("sample_rate_hz must be > 0");
  }
  if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) throw InputError("noise_sigma must be >= 0");
}

double angle_at(const TrajectorySpec& spec, double t_ms) {
  const auto& w = spec.waypoints;
  if (t_ms <= static_cast<double>(w.front().time_ms)) return w.front().angle_deg;
  if (t_ms >= static_cast<double>(w.back().time_ms)) return w.back().angle_deg;
  auto hi = std::upper_bound(w.begin(), w.end(), t_ms, [](double t, const Waypoint& p) {
    return t < static_cast<double>(p.time_ms);
  });
  auto lo = hi - 1;
  const double span = static_cast<double>(hi->time_ms - lo->time_ms);
  const double frac = (t_ms - static_cast<double>(lo->time_ms)) / span;
  return lo->angle_deg + frac * (hi->angle_deg - lo->angle_deg);
}

std::vector<std::int64_t> sample_instants(const TrajectorySpec& spec) {
  spec.validate();
  const double period = 1000.0 / spec.sample_rate_hz;
  std::vector<std::int64_t> out;
  for (std::int64_t k = 0;; ++k) {
    const std::int64_t t = spec.start_ms() + std::llround(static_cast<double>(k) * period);
    if (t >= spec.end_ms()) break;
    if (!out.empty() && t == out.back()) continue;  // rates above 1 kHz collapse onto ms ticks
    out.push_back(t);
  }
  return out;
}

std::vector<SensorSample> sample_trajectory(const TrajectorySpec& spec,
                                            const CalibrationModel& model) {
  const auto instants = sample_instants(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  std::vector<SensorSample> out;
  out.reserve(instants.size());
  for (auto t : instants) {
    const double angle = angle_at(spec, static_cast<double>(t));
    if (!model.contains(angle)) {
      throw DomainError("trajectory angle " + text::format_double(angle) + " deg at t=" +
                        std::to_string(t) + " ms is outside the model domain [" +
                        text::format_double(model.angle_min()) + ", " +
                        text::format_double(model.angle_max()) + "]");
    }
    double value = model.evaluate(angle);
    if (spec.noise_sigma > 0.0) value += noise(rng);
    value = std::clamp(std::round(value), 0.0, kMaxCounts);
    out.push_back({t, static_cast<std::uint16_t>(value)});
  }
  return out;
}

std::vector<Waypoint> read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "time_ms,angle_deg") {
    throw InputError("trajectory: expected header 'time_ms,angle_deg'");
  }
  std::vector<Waypoint> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto f = text::split(line, ',');
    std::optional<long long> t;
    std::optional<double> a;
    if (f.size() == 2) {
      t = text::parse_int(f[0]);
      a = text::parse_double(f[1]);
    }
    if (!t || !a) throw InputError("trajectory: malformed row at line " + std::to_string(lineno));
    out.push_back({*t, *a});
  }
  return out;
}

std::vector<Waypoint> load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trajectory '" + path + "'");
  return read_trajectory_csv(in);
}

namespace {

class DeviceLoop {
 public:
  DeviceLoop(net::Stream& stream, ExitReport& report) : stream_(stream), report_(report) {}

  void send(const wire::Frame& f) { stream_.write_all(wire::encode_frame(f)); }

  // Services inbound bytes for up to `timeout`. Returns false once the peer closed.
  bool poll_inbound(std::chrono::milliseconds timeout, std::int64_t device_now) {
    std::uint8_t buf[256];
    auto n = stream_.read_some(buf, timeout);
    if (!n) return false;
    if (*n == 0) return true;
    wire::DecodeOutput out;
    decoder_.feed(std::span<const std::uint8_t>(buf, *n), out);
    report_.malformed_inbound += out.errors.size();
    for (const auto& f : out.frames) {
      if (const auto* v = std::get_if<wire::Vibrate>(&f)) {
        ++report_.vibrate_received;
        report_.actuations.push_back({device_now, v->duration_ms});
        send(wire::Ack{static_cast<std::uint8_t>(wire::FrameType::Vibrate)});
        ++report_.acks_sent;
      }
    }
    return true;
  }

 private:
  net::Stream& stream_;
  ExitReport& report_;
  wire::Decoder decoder_;
};

}  // namespace

ExitReport run_device(const TrajectorySpec& spec, const CalibrationModel& model,
                      net::Stream& stream, const DeviceOptions& options,
                      const std::atomic<bool>* stop) {
  const auto samples = sample_trajectory(spec, model);
  ExitReport report;
  report.send_times.reserve(samples.size());
  DeviceLoop loop(stream, report);
  using clock = std::chrono::steady_clock;
  const auto wall_start = clock::now();
  const std::int64_t t0 = spec.start_ms();
  std::int64_t next_heartbeat = t0 + options.heartbeat_ms;
  std::int64_t device_now = t0;
  auto stopped = [&] { return stop && stop->load(std::memory_order_relaxed); };

  try {
    for (const auto& s : samples) {
      if (stopped()) return report;
      if (options.pace) {
        const auto due = wall_start + std::chrono::milliseconds(s.timestamp_ms - t0);
        for (auto now = clock::now(); now < due; now = clock::now()) {
          auto wait = std::chrono::ceil<std::chrono::milliseconds>(due - now);
          if (!loop.poll_inbound(wait, device_now)) {
            report.transport_error = "peer closed the connection";
            return report;
          }
          if (stopped()) return report;
        }
      }
      device_now = s.timestamp_ms;
      while (options.heartbeat_ms > 0 && device_now >= next_heartbeat) {
        loop.send(wire::Heartbeat{});
        ++report.heartbeats_sent;
        next_heartbeat += options.heartbeat_ms;
      }
      loop.send(wire::SensorData{static_cast<std::uint32_t>(s.timestamp_ms), s.counts});
      report.send_times.push_back(clock::now());
      ++report.sensor_frames_sent;
      if (!options.pace && !loop.poll_inbound(std::chrono::milliseconds(0), device_now)) {
        report.transport_error = "peer closed the connection";
        return report;
      }
    }
    report.completed = true;
    const auto linger_end = clock::now() + options.linger;
    for (auto now = clock::now(); now < linger_end && !stopped(); now = clock::now()) {
      auto wait = std::chrono::ceil<std::chrono::milliseconds>(linger_end - now);
      if (!loop.poll_inbound(std::min(wait, std::chrono::milliseconds(50)), device_now)) break;
    }
  } catch (const TransportError& e) {
    report.transport_error = e.what();
  }
  return report;
}

void write_actuation_log(std::ostream& out, const std::vector<Actuation>& actuations) {
  for (const auto& a : actuations) {
    LogRecord r;
    r.ts_ms = a.ts_ms;
    r.kind = RecordKind::Actuation;
    r.session_id = "device";
    r.duration_ms = a.duration_ms;
    out << format_record(r) << '\n';
  }
}

}  // namespace sipo
