#pragma once

// Append-only session log.
//
// One record per line, space-separated `key=value` fields. The first four
// fields are always present and always in this order:
//
//   ts_ms=<int> kind=<name> angle_deg=<number or empty> session_id=<token>
//
// Event records use the SessionEvent kind names. Two more kinds make a log
// replayable on its own: `sample` (extra fields counts=, degraded=) carries
// every reading the engine was stepped with, and `config` (extra fields with
// the MonitorConfig values) records the thresholds in force. The device
// simulator writes `actuation` records (extra field duration_ms) in the same
// format.

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sipo/posture_engine.hpp"

namespace sipo {

enum class RecordKind { Event, Sample, Config, Actuation };

struct LogRecord {
  std::int64_t ts_ms = 0;
  RecordKind kind = RecordKind::Event;
  EventKind event = EventKind::SessionStart;  // when kind == Event
  std::optional<double> angle_deg;
  std::string session_id;
  std::optional<double> counts;  // Sample
  bool degraded = false;         // Sample
  MonitorConfig config;          // Config
  std::uint16_t duration_ms = 0; // Actuation

  static LogRecord from_event(const SessionEvent& e, std::string session_id);
  SessionEvent to_event() const;

  bool operator==(const LogRecord&) const = default;
};

/// Renders one record without the trailing newline.
std::string format_record(const LogRecord& r);

/// Parses one line (no newline). Returns nullopt when the line is not a valid record.
std::optional<LogRecord> parse_record(std::string_view line);

struct SkippedLine {
  std::size_t line_no = 0;  // 1-based
  std::string text;
  std::string reason;
};

struct ParsedLog {
  std::vector<LogRecord> records;
  std::vector<SkippedLine> skipped;
};

/// Reads a whole log. A final line without its newline is a torn write and is
/// skipped; so is any line that fails to parse. Both are reported.
ParsedLog parse_log(std::istream& in);
ParsedLog load_log(const std::string& path);

/// Writer side. Each append is a single write() of a complete line on an
/// O_APPEND descriptor; data is fsynced at least every `sync_every` records or
/// `sync_interval`, whichever comes first.
class SessionLog {
 public:
  /// Throws InputError when the path cannot be opened for appending.
  explicit SessionLog(const std::string& path, std::size_t sync_every = 100,
                      std::chrono::milliseconds sync_interval = std::chrono::seconds(1));
  ~SessionLog();
  SessionLog(const SessionLog&) = delete;
  SessionLog& operator=(const SessionLog&) = delete;
  SessionLog(SessionLog&&) noexcept;
  SessionLog& operator=(SessionLog&&) noexcept;

  /// Byte offset where the line starts. Throws Error on a failed write.
  std::uint64_t append(const LogRecord& record);

  /// Forces an fsync.
  void sync();

  const std::string& path() const { return path_; }

 private:
  void close() noexcept;

  std::string path_;
  int fd_ = -1;
  std::uint64_t offset_ = 0;
  std::size_t sync_every_;
  std::chrono::milliseconds sync_interval_;
  std::size_t unsynced_ = 0;
  std::chrono::steady_clock::time_point last_sync_;
};

struct ReplayReport {
  std::size_t sessions = 0;
  std::size_t samples = 0;
  std::size_t logged_events = 0;
  std::size_t replayed_events = 0;
  std::vector<std::string> divergences;
  bool ok() const { return divergences.empty(); }
};

/// Re-runs the engine over the sample/config/session records of a log and
/// compares the events it produces against the logged ones. When
/// `session_id` is set only that session is considered.
ReplayReport replay(const std::vector<LogRecord>& records,
                    const std::optional<std::string>& session_id = std::nullopt);

}  // namespace sipo
