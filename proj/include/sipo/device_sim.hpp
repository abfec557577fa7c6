#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sipo/calibration.hpp"
#include "sipo/transport.hpp"

namespace sipo {

struct Waypoint {
  std::int64_t time_ms = 0;
  double angle_deg = 0.0;
};

/// Piecewise-linear bending angle over time plus the sampling setup.
struct TrajectorySpec {
  std::vector<Waypoint> waypoints;
  double noise_sigma = 1.0;  // counts
  double sample_rate_hz = 20.0;
  std::uint64_t seed = 0;

  /// Throws InputError. Model-domain checks happen at generation time.
  void validate() const;

  std::int64_t start_ms() const { return waypoints.front().time_ms; }
  std::int64_t end_ms() const { return waypoints.back().time_ms; }
};

struct SensorSample {
  std::int64_t timestamp_ms = 0;
  std::uint16_t counts = 0;
  bool operator==(const SensorSample&) const = default;
};

/// Linear interpolation between waypoints; clamps outside the span.
double angle_at(const TrajectorySpec& spec, double t_ms);

/// Sample instants t0 + round(k * 1000 / rate) for every k with instant < end.
std::vector<std::int64_t> sample_instants(const TrajectorySpec& spec);

/// Quantized, noisy readings along the trajectory. Deterministic for a given
/// seed. Throws DomainError naming the time if the path leaves the model domain.
std::vector<SensorSample> sample_trajectory(const TrajectorySpec& spec,
                                            const CalibrationModel& model);

/// CSV with header `time_ms,angle_deg`.
std::vector<Waypoint> read_trajectory_csv(std::istream& in);
std::vector<Waypoint> load_trajectory_csv(const std::string& path);

struct DeviceOptions {
  bool pace = true;
  std::int64_t heartbeat_ms = 1000;
  /// How long to keep servicing inbound commands after the last sample.
  std::chrono::milliseconds linger{500};
};

struct Actuation {
  std::int64_t ts_ms = 0;
  std::uint16_t duration_ms = 0;
};

struct ExitReport {
  std::size_t sensor_frames_sent = 0;
  std::size_t heartbeats_sent = 0;
  std::size_t acks_sent = 0;
  std::size_t vibrate_received = 0;
  std::size_t malformed_inbound = 0;
  std::vector<Actuation> actuations;
  bool completed = false;  // trajectory ran to its end
  std::optional<std::string> transport_error;
  /// Wall-clock send time of every SensorData frame, in emission order.
  std::vector<std::chrono::steady_clock::time_point> send_times;
};

/// Streams the trajectory over `stream`, paced in real time unless
/// `options.pace` is false, answering Vibrate commands with an Ack. Returns
/// when the trajectory (plus linger) is done, the peer closes, or `stop` is set.
ExitReport run_device(const TrajectorySpec& spec, const CalibrationModel& model,
                      net::Stream& stream, const DeviceOptions& options,
                      const std::atomic<bool>* stop = nullptr);

/// Writes the actuations as `actuation` log records.
void write_actuation_log(std::ostream& out, const std::vector<Actuation>& actuations);

}  // namespace sipo
