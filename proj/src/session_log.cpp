#include "sipo/session_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "sipo/text.hpp"

namespace sipo {

LogRecord LogRecord::from_event(const SessionEvent& e, std::string session_id) {
  LogRecord r;
  r.ts_ms = e.ts_ms;
  r.kind = RecordKind::Event;
  r.event = e.kind;
  r.angle_deg = e.angle_deg;
  r.session_id = std::move(session_id);
  return r;
}

SessionEvent LogRecord::to_event() const { return {ts_ms, event, angle_deg}; }

std::string format_record(const LogRecord& r) {
  std::string out;
  out.reserve(96);
  out += "ts_ms=";
  out += std::to_string(r.ts_ms);
  out += " kind=";
  switch (r.kind) {
    case RecordKind::Event: out += to_string(r.event); break;
    case RecordKind::Sample: out += "sample"; break;
    case RecordKind::Config: out += "config"; break;
    case RecordKind::Actuation: out += "actuation"; break;
  }
  out += " angle_deg=";
  if (r.angle_deg) out += text::format_double(*r.angle_deg);
  out += " session_id=";
  out += r.session_id;
  if (r.kind == RecordKind::Sample) {
    out += " counts=";
    if (r.counts) out += text::format_double(*r.counts);
    out += r.degraded ? " degraded=1" : " degraded=0";
  } else if (r.kind == RecordKind::Actuation) {
    out += " duration_ms=";
    out += std::to_string(r.duration_ms);
  } else if (r.kind == RecordKind::Config) {
    const auto& c = r.config;
    out += " mode=";
    out += to_string(c.mode);
    auto num = [&](const char* key, double v) {
      out += ' ';
      out += key;
      out += '=';
      out += text::format_double(v);
    };
    auto integer = [&](const char* key, std::int64_t v) {
      out += ' ';
      out += key;
      out += '=';
      out += std::to_string(v);
    };
    num("safe_low", c.safe_low);
    num("safe_high", c.safe_high);
    num("normal_low", c.normal_low);
    num("normal_high", c.normal_high);
    num("baseline_counts", c.baseline_counts);
    num("baseline_tolerance", c.baseline_tolerance);
    integer("debounce_ms", c.debounce_ms);
    integer("vibrate_repeat_ms", c.vibrate_repeat_ms);
    integer("sit_limit_ms", c.sit_limit_ms);
    integer("pulse_ms", c.vibrate_pulse_ms);
  }
  return out;
}

namespace {

bool valid_session_token(std::string_view s) {
  if (s.empty()) return false;
  for (char ch : s) {
    if (ch == ' ' || ch == '=' || ch == '\t' || ch == '\n' || ch == '\r') return false;
  }
  return true;
}

}  // namespace

std::optional<LogRecord> parse_record(std::string_view line) {
  auto tokens = text::split(line, ' ');
  if (tokens.size() < 4) return std::nullopt;
  std::vector<std::pair<std::string_view, std::string_view>> kv;
  for (auto t : tokens) {
    auto eq = t.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    kv.emplace_back(t.substr(0, eq), t.substr(eq + 1));
  }
  if (kv[0].first != "ts_ms" || kv[1].first != "kind" || kv[2].first != "angle_deg" ||
      kv[3].first != "session_id") {
    return std::nullopt;
  }
  LogRecord r;
  auto ts = text::parse_int(kv[0].second);
  if (!ts) return std::nullopt;
  r.ts_ms = *ts;
  if (!kv[2].second.empty()) {
    auto a = text::parse_double(kv[2].second);
    if (!a) return std::nullopt;
    r.angle_deg = *a;
  }
  if (!valid_session_token(kv[3].second)) return std::nullopt;
  r.session_id = std::string(kv[3].second);

  const auto kind = kv[1].second;
  std::map<std::string_view, std::string_view> extra(kv.begin() + 4, kv.end());
  if (extra.size() != kv.size() - 4) return std::nullopt;

  if (kind == "sample") {
    r.kind = RecordKind::Sample;
    if (extra.size() != 2 || !extra.count("counts") || !extra.count("degraded")) return std::nullopt;
    if (!extra["counts"].empty()) {
      auto c = text::parse_double(extra["counts"]);
      if (!c) return std::nullopt;
      r.counts = *c;
    }
    if (extra["degraded"] != "0" && extra["degraded"] != "1") return std::nullopt;
    r.degraded = extra["degraded"] == "1";
    return r;
  }
  if (kind == "actuation") {
    r.kind = RecordKind::Actuation;
    if (extra.size() != 1 || !extra.count("duration_ms")) return std::nullopt;
    auto d = text::parse_int(extra["duration_ms"]);
    if (!d || *d < 0 || *d > 65535) return std::nullopt;
    r.duration_ms = static_cast<std::uint16_t>(*d);
    return r;
  }
  if (kind == "config") {
    r.kind = RecordKind::Config;
    if (extra.size() != 11) return std::nullopt;
    auto mode = parse_threshold_mode(extra["mode"]);
    if (!mode) return std::nullopt;
    r.config.mode = *mode;
    bool ok = true;
    auto num = [&](const char* key, double& dst) {
      auto v = text::parse_double(extra[key]);
      if (v) dst = *v; else ok = false;
    };
    auto integer = [&](const char* key, auto& dst) {
      auto v = text::parse_int(extra[key]);
      if (v) dst = static_cast<std::remove_reference_t<decltype(dst)>>(*v); else ok = false;
    };
    num("safe_low", r.config.safe_low);
    num("safe_high", r.config.safe_high);
    num("normal_low", r.config.normal_low);
    num("normal_high", r.config.normal_high);
    num("baseline_counts", r.config.baseline_counts);
    num("baseline_tolerance", r.config.baseline_tolerance);
    integer("debounce_ms", r.config.debounce_ms);
    integer("vibrate_repeat_ms", r.config.vibrate_repeat_ms);
    integer("sit_limit_ms", r.config.sit_limit_ms);
    integer("pulse_ms", r.config.vibrate_pulse_ms);
    if (!ok) return std::nullopt;
    return r;
  }
  auto ev = parse_event_kind(kind);
  if (!ev || !extra.empty()) return std::nullopt;
  r.kind = RecordKind::Event;
  r.event = *ev;
  return r;
}

ParsedLog parse_log(std::istream& in) {
  ParsedLog out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const bool torn = in.eof();  // getline hit EOF before a newline
    if (torn) {
      out.skipped.push_back({line_no, line, "torn final line (no newline)"});
      break;
    }
    if (line.empty()) continue;
    auto r = parse_record(line);
    if (!r) {
      out.skipped.push_back({line_no, line, "unparsable record"});
      continue;
    }
    out.records.push_back(std::move(*r));
  }
  return out;
}

ParsedLog load_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open session log '" + path + "'");
  return parse_log(in);
}

SessionLog::SessionLog(const std::string& path, std::size_t sync_every,
                       std::chrono::milliseconds sync_interval)
    : path_(path), sync_every_(sync_every == 0 ? 1 : sync_every), sync_interval_(sync_interval),
      last_sync_(std::chrono::steady_clock::now()) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw InputError("cannot open session log '" + path + "' for append: " + std::strerror(errno));
  }
  auto end = ::lseek(fd_, 0, SEEK_END);
  offset_ = end < 0 ? 0 : static_cast<std::uint64_t>(end);
}

SessionLog::~SessionLog() { close(); }

SessionLog::SessionLog(SessionLog&& o) noexcept
    : path_(std::move(o.path_)), fd_(o.fd_), offset_(o.offset_), sync_every_(o.sync_every_),
      sync_interval_(o.sync_interval_), unsynced_(o.unsynced_), last_sync_(o.last_sync_) {
  o.fd_ = -1;
}

SessionLog& SessionLog::operator=(SessionLog&& o) noexcept {
  if (this != &o) {
    close();
    path_ = std::move(o.path_);
    fd_ = o.fd_;
    offset_ = o.offset_;
    sync_every_ = o.sync_every_;
    sync_interval_ = o.sync_interval_;
    unsynced_ = o.unsynced_;
    last_sync_ = o.last_sync_;
    o.fd_ = -1;
  }
  return *this;
}

void SessionLog::close() noexcept {
  if (fd_ >= 0) {
    ::fsync(fd_);
    ::close(fd_);
    fd_ = -1;
  }
}

std::uint64_t SessionLog::append(const LogRecord& record) {
  if (fd_ < 0) throw Error("session log is closed");
  std::string line = format_record(record);
  line += '\n';
  std::size_t done = 0;
  while (done < line.size()) {
    auto n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("session log write failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  const auto at = offset_;
  offset_ += line.size();
  ++unsynced_;
  const auto now = std::chrono::steady_clock::now();
  if (unsynced_ >= sync_every_ || now - last_sync_ >= sync_interval_) sync();
  return at;
}

void SessionLog::sync() {
  if (fd_ < 0) return;
  if (::fsync(fd_) != 0) {
    throw Error("session log fsync failed: " + std::string(std::strerror(errno)));
  }
  unsynced_ = 0;
  last_sync_ = std::chrono::steady_clock::now();
}

namespace {

bool engine_event(EventKind k) { return k != EventKind::DeviceLost && k != EventKind::DeviceRestored; }

std::string describe(const SessionEvent& e) {
  std::string s = std::string(to_string(e.kind)) + "@" + std::to_string(e.ts_ms);
  if (e.angle_deg) s += " angle=" + text::format_double(*e.angle_deg);
  return s;
}

struct SessionReplay {
  PostureEngine engine;
  std::vector<SessionEvent> logged;
  std::vector<SessionEvent> replayed;
  std::vector<VibrateCommand> commands;
  std::vector<std::string> errors;
};

}  // namespace

ReplayReport replay(const std::vector<LogRecord>& records,
                    const std::optional<std::string>& session_id) {
  ReplayReport report;
  std::vector<std::string> order;
  std::map<std::string, SessionReplay> sessions;

  for (const auto& r : records) {
    if (session_id && r.session_id != *session_id) continue;
    auto [it, fresh] = sessions.try_emplace(r.session_id);
    if (fresh) order.push_back(r.session_id);
    auto& s = it->second;

    auto step = [&](const EngineInput& in) {
      try {
        s.engine.step(in, s.replayed, s.commands);
      } catch (const Error& e) {
        s.errors.push_back(e.what());
      }
    };

    switch (r.kind) {
      case RecordKind::Config:
        step(input::UpdateConfig{r.ts_ms, r.config});
        break;
      case RecordKind::Sample:
        ++report.samples;
        step(input::Sample{r.ts_ms, r.angle_deg, r.counts});
        break;
      case RecordKind::Actuation:
        break;
      case RecordKind::Event:
        if (!engine_event(r.event)) break;
        s.logged.push_back(r.to_event());
        if (r.event == EventKind::SessionStart) {
          step(input::StartSession{r.ts_ms});
        } else if (r.event == EventKind::SessionStop) {
          step(input::StopSession{r.ts_ms});
        }
        break;
    }
  }

  for (const auto& id : order) {
    auto& s = sessions[id];
    ++report.sessions;
    report.logged_events += s.logged.size();
    report.replayed_events += s.replayed.size();
    for (const auto& err : s.errors) {
      report.divergences.push_back("session " + id + ": engine rejected input: " + err);
    }
    const auto n = std::max(s.logged.size(), s.replayed.size());
    for (std::size_t i = 0; i < n; ++i) {
      const bool have_l = i < s.logged.size();
      const bool have_r = i < s.replayed.size();
      if (have_l && have_r && s.logged[i] == s.replayed[i]) continue;
      std::ostringstream os;
      os << "session " << id << ": event #" << i << " logged="
         << (have_l ? describe(s.logged[i]) : "<none>")
         << " replayed=" << (have_r ? describe(s.replayed[i]) : "<none>");
      report.divergences.push_back(os.str());
      break;  // later events are shifted; one line per session is enough
    }
  }
  return report;
}

}  // namespace sipo
