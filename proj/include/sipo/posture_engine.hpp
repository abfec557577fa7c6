#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "sipo/errors.hpp"

namespace sipo {

enum class PostureZone { Normal, Safe, OutOfZone };

enum class ThresholdMode { AngleZone, SensorBaseline };

std::string_view to_string(PostureZone zone);
std::string_view to_string(ThresholdMode mode);
std::optional<ThresholdMode> parse_threshold_mode(std::string_view s);

struct MonitorConfig {
  ThresholdMode mode = ThresholdMode::AngleZone;
  double safe_low = 90.0;  // deg
  double safe_high = 110.0;
  double normal_low = 90.0;  // deg; Normal is this band intersected with the safe band
  double normal_high = 95.0;
  double baseline_counts = 0.0;
  double baseline_tolerance = 36.0;
  std::int64_t debounce_ms = 2000;
  std::int64_t vibrate_repeat_ms = 10000;
  std::int64_t sit_limit_ms = 1'800'000;
  std::uint16_t vibrate_pulse_ms = 400;

  /// Throws InputError listing every violated constraint.
  void validate() const;

  bool operator==(const MonitorConfig&) const = default;
};

/// Boundary-inclusive classification against the angle thresholds.
PostureZone classify_zone(double angle_deg, const MonitorConfig& config);

/// Baseline-mode classification: Safe within tolerance of the captured baseline.
PostureZone classify_counts(double counts, const MonitorConfig& config);

/// Switch to baseline mode around `current` counts. Throws InputError outside [0, 1023].
MonitorConfig set_baseline(double current, MonitorConfig config);

enum class EventKind {
  SessionStart,
  SessionStop,
  ZoneExit,
  ZoneReenter,
  VibrateSent,
  SitLimitReached,
  // Raised by the monitor service, never by the engine.
  DeviceLost,
  DeviceRestored,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct SessionEvent {
  std::int64_t ts_ms = 0;
  EventKind kind = EventKind::SessionStart;
  std::optional<double> angle_deg;
  bool operator==(const SessionEvent&) const = default;
};

struct VibrateCommand {
  std::int64_t ts_ms = 0;
  std::uint16_t duration_ms = 0;
  bool operator==(const VibrateCommand&) const = default;
};

namespace input {

/// A reading. AngleZone mode needs `angle_deg`, SensorBaseline mode needs `counts`.
struct Sample {
  std::int64_t ts_ms = 0;
  std::optional<double> angle_deg;
  std::optional<double> counts;
};
struct Tick {
  std::int64_t ts_ms = 0;
};
struct StartSession {
  std::int64_t ts_ms = 0;
};
struct StopSession {
  std::int64_t ts_ms = 0;
};
struct UpdateConfig {
  std::int64_t ts_ms = 0;
  MonitorConfig config;
};

}  // namespace input

using EngineInput =
    std::variant<input::Sample, input::Tick, input::StartSession, input::StopSession, input::UpdateConfig>;

std::int64_t timestamp_of(const EngineInput& in);

struct EngineState {
  MonitorConfig config;
  std::optional<std::int64_t> last_ts;
  std::optional<PostureZone> zone;
  std::optional<double> last_angle;

  bool session_active = false;
  std::int64_t session_start_ms = 0;
  bool sit_limit_fired = false;

  // Current out-of-zone excursion, if any.
  std::optional<std::int64_t> out_since;
  bool alerted = false;
  std::int64_t next_vibrate_ms = 0;
};

struct StepResult {
  EngineState state;
  std::vector<SessionEvent> events;
  std::vector<VibrateCommand> commands;
};

/// Advances the alert state machine by one input.
///
/// Zone time is sample-and-hold: the zone of the latest sample is assumed to
/// persist until the next one. Alert deadlines (debounce expiry, repeats,
/// sit limit) that fall at or before the input timestamp fire first, stamped
/// with the deadline itself, then the input is applied. Excursions and the
/// sit timer are only tracked while a session is active.
///
/// Throws OrderingError if the input is older than the last one seen and
/// InputError for inputs the state cannot accept; `state` is never modified.
StepResult engine_step(const EngineState& state, const EngineInput& in);

/// Convenience owner for a stepping loop.
class PostureEngine {
 public:
  explicit PostureEngine(MonitorConfig config = {});

  /// Steps and appends to the outputs; on error nothing changes.
  void step(const EngineInput& in, std::vector<SessionEvent>& events,
            std::vector<VibrateCommand>& commands);

  const EngineState& state() const { return state_; }

 private:
  EngineState state_;
};

}  // namespace sipo
