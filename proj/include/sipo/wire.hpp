#pragma once

// Device <-> host framing.
//
//   +------+------+-----+-----------------+-----+
//   | 0xA5 | type | len | payload[len]    | xor |
//   +------+------+-----+-----------------+-----+
//
// `xor` is the XOR of type, len and every payload byte. Multi-byte payload
// fields are little-endian. Each type has a fixed payload length:
//
//   0x01 SensorData  6  timestamp_ms:u32, sensor_value:u16 (0..1023)
//   0x02 Vibrate     2  duration_ms:u16
//   0x03 Ack         1  acked frame type
//   0x04 Heartbeat   0

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sipo/errors.hpp"

namespace sipo::wire {

inline constexpr std::uint8_t kSync = 0xA5;
inline constexpr std::uint16_t kMaxSensorValue = 1023;

enum class FrameType : std::uint8_t {
  SensorData = 0x01,
  Vibrate = 0x02,
  Ack = 0x03,
  Heartbeat = 0x04,
};

struct SensorData {
  std::uint32_t timestamp_ms = 0;
  std::uint16_t sensor_value = 0;
  bool operator==(const SensorData&) const = default;
};
struct Vibrate {
  std::uint16_t duration_ms = 0;
  bool operator==(const Vibrate&) const = default;
};
struct Ack {
  std::uint8_t acked_type = 0;
  bool operator==(const Ack&) const = default;
};
struct Heartbeat {
  bool operator==(const Heartbeat&) const = default;
};

using Frame = std::variant<SensorData, Vibrate, Ack, Heartbeat>;

FrameType type_of(const Frame& f);
std::size_t payload_length(FrameType t);

/// Throws EncodeError when the frame breaks an invariant (e.g. value > 1023).
std::vector<std::uint8_t> encode_frame(const Frame& frame);
void encode_frame(const Frame& frame, std::vector<std::uint8_t>& out);

/// One-line human rendering, e.g. `SensorData ts=1000 value=513`.
std::string describe(const Frame& frame);

enum class DecodeErrorKind {
  ChecksumMismatch,
  UnknownType,
  BadLength,       // known type, wrong payload length
  InvalidPayload,  // checksum fine but a field breaks an invariant
  TruncatedAtEnd,
};

std::string_view to_string(DecodeErrorKind k);

struct DecodeError {
  DecodeErrorKind kind;
  std::uint64_t offset;  // stream offset of the SYNC byte that started the bad frame
  bool operator==(const DecodeError&) const = default;
};

struct DecodeOutput {
  std::vector<Frame> frames;
  std::vector<DecodeError> errors;
};

/// Incremental decoder. Output depends only on the concatenated input, never
/// on how it was chunked. After a bad frame the decoder drops just the SYNC
/// byte and rescans, so a real frame boundary is never skipped over.
class Decoder {
 public:
  /// Consumes `bytes`, appending any complete frames and errors to `out`.
  void feed(std::span<const std::uint8_t> bytes, DecodeOutput& out);
  DecodeOutput feed(std::span<const std::uint8_t> bytes);

  /// Declares end of stream: a partially received frame becomes TruncatedAtEnd.
  void finish(DecodeOutput& out);

  /// Bytes discarded while hunting for SYNC.
  std::uint64_t skipped_bytes() const { return skipped_; }
  std::uint64_t frames_decoded() const { return frames_; }
  std::uint64_t errors_seen() const { return errors_; }

 private:
  void drain(DecodeOutput& out);

  std::deque<std::uint8_t> buf_;
  std::uint64_t buf_offset_ = 0;  // stream offset of buf_.front()
  std::uint64_t skipped_ = 0;
  std::uint64_t frames_ = 0;
  std::uint64_t errors_ = 0;
};

/// Decodes a complete capture in one go (feed + finish).
DecodeOutput decode_all(std::span<const std::uint8_t> bytes);

}  // namespace sipo::wire
