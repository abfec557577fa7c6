#include "sipo/wire.hpp"

#include <algorithm>
#include <sstream>

namespace sipo::wire {

FrameType type_of(const Frame& f) {
  struct V {
    FrameType operator()(const SensorData&) const { return FrameType::SensorData; }
    FrameType operator()(const Vibrate&) const { return FrameType::Vibrate; }
    FrameType operator()(const Ack&) const { return FrameType::Ack; }
    FrameType operator()(const Heartbeat&) const { return FrameType::Heartbeat; }
  };
  return std::visit(V{}, f);
}

std::size_t payload_length(FrameType t) {
  switch (t) {
    case FrameType::SensorData: return 6;
    case FrameType::Vibrate: return 2;
    case FrameType::Ack: return 1;
    case FrameType::Heartbeat: return 0;
  }
  return 0;
}

namespace {

bool known_type(std::uint8_t t) { return t >= 0x01 && t <= 0x04; }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

template <typename It>
std::uint16_t get_u16(It p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

template <typename It>
std::uint32_t get_u32(It p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void encode_frame(const Frame& frame, std::vector<std::uint8_t>& out) {
  const FrameType type = type_of(frame);
  const std::size_t start = out.size();
  out.push_back(kSync);
  out.push_back(static_cast<std::uint8_t>(type));
  out.push_back(static_cast<std::uint8_t>(payload_length(type)));
  if (const auto* s = std::get_if<SensorData>(&frame)) {
    if (s->sensor_value > kMaxSensorValue) {
      out.resize(start);
      throw EncodeError("sensor value " + std::to_string(s->sensor_value) + " exceeds 1023");
    }
    put_u32(out, s->timestamp_ms);
    put_u16(out, s->sensor_value);
  } else if (const auto* v = std::get_if<Vibrate>(&frame)) {
    put_u16(out, v->duration_ms);
  } else if (const auto* a = std::get_if<Ack>(&frame)) {
    if (!known_type(a->acked_type)) {
      out.resize(start);
      throw EncodeError("ack of unknown frame type " + std::to_string(a->acked_type));
    }
    out.push_back(a->acked_type);
  }
  std::uint8_t x = 0;
  for (std::size_t i = start + 1; i < out.size(); ++i) x ^= out[i];
  out.push_back(x);
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(10);
  encode_frame(frame, out);
  return out;
}

std::string describe(const Frame& frame) {
  std::ostringstream os;
  if (const auto* s = std::get_if<SensorData>(&frame)) {
    os << "SensorData ts=" << s->timestamp_ms << " value=" << s->sensor_value;
  } else if (const auto* v = std::get_if<Vibrate>(&frame)) {
    os << "Vibrate duration_ms=" << v->duration_ms;
  } else if (const auto* a = std::get_if<Ack>(&frame)) {
    os << "Ack type=0x" << std::hex << std::uppercase << (a->acked_type < 16 ? "0" : "")
       << static_cast<int>(a->acked_type);
  } else {
    os << "Heartbeat";
  }
  return os.str();
}

std::string_view to_string(DecodeErrorKind k) {
  switch (k) {
    case DecodeErrorKind::ChecksumMismatch: return "checksum_mismatch";
    case DecodeErrorKind::UnknownType: return "unknown_type";
    case DecodeErrorKind::BadLength: return "bad_length";
    case DecodeErrorKind::InvalidPayload: return "invalid_payload";
    case DecodeErrorKind::TruncatedAtEnd: return "truncated_at_end";
  }
  return "?";
}

void Decoder::drain(DecodeOutput& out) {
  for (;;) {
    // Hunt for SYNC.
    auto sync = std::find(buf_.begin(), buf_.end(), kSync);
    const auto dropped = static_cast<std::uint64_t>(sync - buf_.begin());
    if (dropped) {
      buf_.erase(buf_.begin(), sync);
      buf_offset_ += dropped;
      skipped_ += dropped;
    }
    if (buf_.size() < 2) return;

    auto reject = [&](DecodeErrorKind kind) {
      out.errors.push_back({kind, buf_offset_});
      ++errors_;
      buf_.pop_front();
      ++buf_offset_;
    };

    const std::uint8_t type = buf_[1];
    if (!known_type(type)) {
      reject(DecodeErrorKind::UnknownType);
      continue;
    }
    if (buf_.size() < 3) return;
    const std::size_t len = buf_[2];
    if (len != payload_length(static_cast<FrameType>(type))) {
      reject(DecodeErrorKind::BadLength);
      continue;
    }
    const std::size_t total = 3 + len + 1;
    if (buf_.size() < total) return;

    std::uint8_t x = 0;
    for (std::size_t i = 1; i < 3 + len; ++i) x ^= buf_[i];
    if (x != buf_[3 + len]) {
      reject(DecodeErrorKind::ChecksumMismatch);
      continue;
    }

    auto payload = buf_.begin() + 3;
    Frame frame;
    switch (static_cast<FrameType>(type)) {
      case FrameType::SensorData: {
        SensorData s{get_u32(payload), get_u16(payload + 4)};
        if (s.sensor_value > kMaxSensorValue) {
          reject(DecodeErrorKind::InvalidPayload);
          continue;
        }
        frame = s;
        break;
      }
      case FrameType::Vibrate: frame = Vibrate{get_u16(payload)}; break;
      case FrameType::Ack:
        if (!known_type(payload[0])) {
          reject(DecodeErrorKind::InvalidPayload);
          continue;
        }
        frame = Ack{payload[0]};
        break;
      case FrameType::Heartbeat: frame = Heartbeat{}; break;
    }
    out.frames.push_back(frame);
    ++frames_;
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(total));
    buf_offset_ += total;
  }
}

void Decoder::feed(std::span<const std::uint8_t> bytes, DecodeOutput& out) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
  drain(out);
}

DecodeOutput Decoder::feed(std::span<const std::uint8_t> bytes) {
  DecodeOutput out;
  feed(bytes, out);
  return out;
}

void Decoder::finish(DecodeOutput& out) {
  drain(out);
  // An incomplete tail may still hide a complete frame behind a later SYNC.
  while (!buf_.empty()) {
    out.errors.push_back({DecodeErrorKind::TruncatedAtEnd, buf_offset_});
    ++errors_;
    buf_.pop_front();
    ++buf_offset_;
    drain(out);
  }
}

DecodeOutput decode_all(std::span<const std::uint8_t> bytes) {
  Decoder d;
  DecodeOutput out;
  d.feed(bytes, out);
  d.finish(out);
  return out;
}

}  // namespace sipo::wire
