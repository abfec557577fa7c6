#include "sipo/posture_engine.hpp"

#include <cmath>
#include <string>

#include "sipo/calibration.hpp"
#include "sipo/text.hpp"

namespace sipo {

std::string_view to_string(PostureZone zone) {
  switch (zone) {
    case PostureZone::Normal: return "normal";
    case PostureZone::Safe: return "safe";
    case PostureZone::OutOfZone: return "out_of_zone";
  }
  return "?";
}

std::string_view to_string(ThresholdMode mode) {
  return mode == ThresholdMode::AngleZone ? "angle_zone" : "sensor_baseline";
}

std::optional<ThresholdMode> parse_threshold_mode(std::string_view s) {
  if (s == "angle_zone") return ThresholdMode::AngleZone;
  if (s == "sensor_baseline") return ThresholdMode::SensorBaseline;
  return std::nullopt;
}

namespace {

constexpr std::pair<EventKind, std::string_view> kEventNames[] = {
    {EventKind::SessionStart, "session_start"},
    {EventKind::SessionStop, "session_stop"},
    {EventKind::ZoneExit, "zone_exit"},
    {EventKind::ZoneReenter, "zone_reenter"},
    {EventKind::VibrateSent, "vibrate_sent"},
    {EventKind::SitLimitReached, "sit_limit_reached"},
    {EventKind::DeviceLost, "device_lost"},
    {EventKind::DeviceRestored, "device_restored"},
};

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kEventNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (const auto& [k, name] : kEventNames) {
    if (name == s) return k;
  }
  return std::nullopt;
}

void MonitorConfig::validate() const {
  std::string problems;
  auto fail = [&](const std::string& p) {
    if (!problems.empty()) problems += "; ";
    problems += p;
  };
  if (!std::isfinite(safe_low) || !std::isfinite(safe_high) || !(safe_low < safe_high)) {
    fail("safe_low must be < safe_high");
  }
  if (!std::isfinite(normal_low) || !std::isfinite(normal_high) || normal_low > normal_high) {
    fail("normal_low must be <= normal_high");
  }
  if (debounce_ms < 0) fail("debounce_ms must be >= 0");
  if (vibrate_repeat_ms <= debounce_ms) fail("vibrate_repeat_ms must be > debounce_ms");
  if (sit_limit_ms <= 0) fail("sit_limit_ms must be > 0");
  if (!std::isfinite(baseline_tolerance) || baseline_tolerance <= 0.0) {
    fail("baseline_tolerance must be > 0");
  }
  if (mode == ThresholdMode::SensorBaseline &&
      (!std::isfinite(baseline_counts) || baseline_counts < 0.0 || baseline_counts > kMaxCounts)) {
    fail("baseline_counts must be within [0, 1023]");
  }
  if (vibrate_pulse_ms == 0) fail("vibrate_pulse_ms must be > 0");
  if (!problems.empty()) throw InputError("invalid monitor config: " + problems);
}

PostureZone classify_zone(double angle_deg, const MonitorConfig& config) {
  if (angle_deg < config.safe_low || angle_deg > config.safe_high) return PostureZone::OutOfZone;
  if (angle_deg >= config.normal_low && angle_deg <= config.normal_high) return PostureZone::Normal;
  return PostureZone::Safe;
}

PostureZone classify_counts(double counts, const MonitorConfig& config) {
  return std::abs(counts - config.baseline_counts) <= config.baseline_tolerance
             ? PostureZone::Safe
             : PostureZone::OutOfZone;
}

MonitorConfig set_baseline(double current, MonitorConfig config) {
  if (!std::isfinite(current) || current < 0.0 || current > kMaxCounts) {
    throw InputError("baseline counts " + text::format_double(current) + " outside [0, 1023]");
  }
  config.mode = ThresholdMode::SensorBaseline;
  config.baseline_counts = current;
  return config;
}

std::int64_t timestamp_of(const EngineInput& in) {
  return std::visit([](const auto& v) { return v.ts_ms; }, in);
}

namespace {

struct Stepper {
  EngineState& s;
  std::vector<SessionEvent>& events;
  std::vector<VibrateCommand>& commands;

  void vibrate(std::int64_t ts) {
    events.push_back({ts, EventKind::VibrateSent, s.last_angle});
    commands.push_back({ts, s.config.vibrate_pulse_ms});
  }

  // Fires every pending deadline at or before `t`, in timestamp order.
  void advance(std::int64_t t) {
    if (!s.session_active) return;
    for (;;) {
      std::optional<std::int64_t> zone_due;
      if (s.out_since) zone_due = s.alerted ? s.next_vibrate_ms : *s.out_since + s.config.debounce_ms;
      std::optional<std::int64_t> sit_due;
      if (!s.sit_limit_fired) sit_due = s.session_start_ms + s.config.sit_limit_ms;

      const bool zone_ready = zone_due && *zone_due <= t;
      const bool sit_ready = sit_due && *sit_due <= t;
      if (!zone_ready && !sit_ready) return;

      if (sit_ready && (!zone_ready || *sit_due < *zone_due)) {
        events.push_back({*sit_due, EventKind::SitLimitReached, std::nullopt});
        s.sit_limit_fired = true;
        continue;
      }
      if (!s.alerted) {
        events.push_back({*zone_due, EventKind::ZoneExit, s.last_angle});
        s.alerted = true;
      }
      vibrate(*zone_due);
      s.next_vibrate_ms = *zone_due + s.config.vibrate_repeat_ms;
    }
  }

  void clear_excursion() {
    s.out_since.reset();
    s.alerted = false;
    s.next_vibrate_ms = 0;
  }

  PostureZone classify(const input::Sample& in) const {
    if (s.config.mode == ThresholdMode::AngleZone) {
      if (!in.angle_deg || !std::isfinite(*in.angle_deg)) {
        throw InputError("angle-zone mode needs a finite sample angle");
      }
      return classify_zone(*in.angle_deg, s.config);
    }
    if (!in.counts || !std::isfinite(*in.counts)) {
      throw InputError("baseline mode needs finite sample counts");
    }
    return classify_counts(*in.counts, s.config);
  }

  void operator()(const input::Sample& in) {
    const PostureZone zone = classify(in);
    advance(in.ts_ms);
    s.zone = zone;
    s.last_angle = in.angle_deg;
    if (s.session_active) {
      if (zone == PostureZone::OutOfZone) {
        if (!s.out_since) s.out_since = in.ts_ms;
      } else if (s.out_since) {
        if (s.alerted) events.push_back({in.ts_ms, EventKind::ZoneReenter, in.angle_deg});
        clear_excursion();
      }
    }
    // A zero debounce fires on the sample that starts the excursion.
    advance(in.ts_ms);
  }

  void operator()(const input::Tick& in) { advance(in.ts_ms); }

  void operator()(const input::StartSession& in) {
    if (s.session_active) throw InputError("session already active");
    s.session_active = true;
    s.session_start_ms = in.ts_ms;
    s.sit_limit_fired = false;
    clear_excursion();
    events.push_back({in.ts_ms, EventKind::SessionStart, std::nullopt});
  }

  void operator()(const input::StopSession& in) {
    if (!s.session_active) throw InputError("no active session");
    advance(in.ts_ms);
    s.session_active = false;
    clear_excursion();
    events.push_back({in.ts_ms, EventKind::SessionStop, std::nullopt});
  }

  void operator()(const input::UpdateConfig& in) {
    in.config.validate();
    advance(in.ts_ms);
    s.config = in.config;
  }
};

}  // namespace

StepResult engine_step(const EngineState& state, const EngineInput& in) {
  const std::int64_t ts = timestamp_of(in);
  if (state.last_ts && ts < *state.last_ts) {
    throw OrderingError("input timestamp " + std::to_string(ts) + " ms precedes last seen " +
                        std::to_string(*state.last_ts) + " ms");
  }
  StepResult out{state, {}, {}};
  std::visit(Stepper{out.state, out.events, out.commands}, in);
  out.state.last_ts = ts;
  return out;
}

PostureEngine::PostureEngine(MonitorConfig config) {
  config.validate();
  state_.config = config;
}

void PostureEngine::step(const EngineInput& in, std::vector<SessionEvent>& events,
                         std::vector<VibrateCommand>& commands) {
  auto r = engine_step(state_, in);
  state_ = std::move(r.state);
  events.insert(events.end(), r.events.begin(), r.events.end());
  commands.insert(commands.end(), r.commands.begin(), r.commands.end());
}

}  // namespace sipo
