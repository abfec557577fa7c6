#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sipo/session_log.hpp"

using namespace sipo;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "sipo_tests";
  fs::create_directories(dir);
  auto p = dir / name;
  fs::remove(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("record format keeps the fixed field order") {
  auto r = LogRecord::from_event({2000, EventKind::ZoneExit, 115.25}, "S1");
  CHECK(format_record(r) == "ts_ms=2000 kind=zone_exit angle_deg=115.25 session_id=S1");
  r = LogRecord::from_event({5000, EventKind::SitLimitReached, std::nullopt}, "S1");
  CHECK(format_record(r) == "ts_ms=5000 kind=sit_limit_reached angle_deg= session_id=S1");

  LogRecord s;
  s.ts_ms = 50;
  s.kind = RecordKind::Sample;
  s.angle_deg = 90.0;
  s.counts = 513;
  s.session_id = "S1";
  CHECK(format_record(s) == "ts_ms=50 kind=sample angle_deg=90 session_id=S1 counts=513 degraded=0");
  CHECK(parse_record(format_record(s)) == s);

  LogRecord c;
  c.kind = RecordKind::Config;
  c.session_id = "S1";
  c.config = set_baseline(513.0, MonitorConfig{});
  CHECK(parse_record(format_record(c)) == c);
}

TEST_CASE("parse_record rejects malformed lines") {
  CHECK_FALSE(parse_record(""));
  CHECK_FALSE(parse_record("kind=zone_exit ts_ms=1 angle_deg= session_id=S"));
  CHECK_FALSE(parse_record("ts_ms=1 kind=bogus angle_deg= session_id=S"));
  CHECK_FALSE(parse_record("ts_ms=x kind=zone_exit angle_deg= session_id=S"));
  CHECK_FALSE(parse_record("ts_ms=1 kind=zone_exit angle_deg= session_id="));
  CHECK_FALSE(parse_record("ts_ms=1 kind=zone_exit angle_deg= session_id=S extra=1"));
}

TEST_CASE("write then read back 1000 events byte-identically") {
  const auto path = temp_path("roundtrip.log");
  std::mt19937_64 rng(8);
  std::vector<LogRecord> written;
  std::string expected;
  {
    SessionLog log(path.string());
    std::uint64_t last_offset = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto kind = static_cast<EventKind>(rng() % 6);
      std::optional<double> angle;
      if (rng() % 2) angle = 60.0 + static_cast<double>(rng() % 1000000) / 13.0 / 1000.0;
      auto r = LogRecord::from_event({i * 37, kind, angle}, "S42");
      const auto at = log.append(r);
      CHECK(at >= last_offset);
      last_offset = at;
      written.push_back(r);
      expected += format_record(r) + "\n";
    }
  }
  CHECK(slurp(path) == expected);
  const auto parsed = load_log(path.string());
  CHECK(parsed.skipped.empty());
  CHECK(parsed.records == written);
}

TEST_CASE("torn final line is skipped and reported") {
  const auto path = temp_path("torn.log");
  {
    SessionLog log(path.string());
    for (int i = 0; i < 10; ++i) log.append(LogRecord::from_event({i, EventKind::VibrateSent, 111.0}, "S"));
  }
  const auto full = slurp(path);
  fs::resize_file(path, full.size() - 7);
  const auto parsed = load_log(path.string());
  CHECK(parsed.records.size() == 9);
  REQUIRE(parsed.skipped.size() == 1);
  CHECK(parsed.skipped[0].line_no == 10);
}

TEST_CASE("unwritable log path fails fast") {
  CHECK_THROWS_AS(SessionLog("/nonexistent-dir/x/session.log"), InputError);
}

TEST_CASE("replay verifies an engine trace and spots tampering") {
  PostureEngine eng(MonitorConfig{});
  std::vector<LogRecord> log;
  auto emit = [&](const std::vector<SessionEvent>& evs) {
    for (const auto& e : evs) log.push_back(LogRecord::from_event(e, "S1"));
  };
  LogRecord cfg;
  cfg.kind = RecordKind::Config;
  cfg.session_id = "S1";
  cfg.config = MonitorConfig{};
  cfg.config.sit_limit_ms = 5000;
  log.push_back(cfg);
  std::vector<SessionEvent> evs;
  std::vector<VibrateCommand> cmds;
  eng.step(input::UpdateConfig{0, cfg.config}, evs, cmds);
  eng.step(input::StartSession{0}, evs, cmds);
  emit(evs);
  for (std::int64_t t = 0; t < 9000; t += 50) {
    evs.clear();
    const double a = (t > 2000 && t < 6000) ? 116.0 : 93.0;
    eng.step(input::Sample{t, a, std::nullopt}, evs, cmds);
    emit(evs);
    LogRecord s;
    s.ts_ms = t;
    s.kind = RecordKind::Sample;
    s.angle_deg = a;
    s.counts = 500;
    s.session_id = "S1";
    log.push_back(s);
  }
  evs.clear();
  eng.step(input::StopSession{9000}, evs, cmds);
  emit(evs);

  auto report = replay(log);
  CHECK(report.ok());
  CHECK(report.sessions == 1);
  CHECK(report.logged_events == report.replayed_events);
  CHECK(report.logged_events == 6);  // start, exit, vibrate, sit limit, reenter, stop

  auto tampered = log;
  for (auto& r : tampered) {
    if (r.kind == RecordKind::Event && r.event == EventKind::ZoneExit) r.ts_ms += 1;
  }
  CHECK_FALSE(replay(tampered).ok());
  CHECK(replay(log, std::string("other")).sessions == 0);
}
