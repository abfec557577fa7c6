#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "sipo/errors.hpp"

namespace sipo::net {

/// `host:port` or the literal `stdio`.
struct Endpoint {
  enum class Kind { Tcp, Stdio };
  Kind kind = Kind::Tcp;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// Throws InputError on anything that is not `stdio` or `host:port`.
  static Endpoint parse(std::string_view text);
  std::string to_string() const;
};

/// Bidirectional byte stream over one or two file descriptors. Owns them
/// unless constructed over stdio.
class Stream {
 public:
  Stream() = default;
  Stream(int read_fd, int write_fd, bool owned);
  ~Stream();
  Stream(const Stream&) = delete;
  Stream& operator=(const Stream&) = delete;
  Stream(Stream&& o) noexcept;
  Stream& operator=(Stream&& o) noexcept;

  static Stream stdio();

  bool is_open() const { return read_fd_ >= 0; }

  /// Waits up to `timeout` for data. Returns the byte count (0 on timeout) or
  /// nullopt once the peer has closed. Throws TransportError on I/O failure.
  std::optional<std::size_t> read_some(std::span<std::uint8_t> buf,
                                       std::chrono::milliseconds timeout);

  /// Throws TransportError if the peer is gone.
  void write_all(std::span<const std::uint8_t> bytes);

  /// Shuts the connection down so a blocked peer or reader wakes up.
  void shutdown() noexcept;
  void close() noexcept;

 private:
  int read_fd_ = -1;
  int write_fd_ = -1;
  bool owned_ = false;
  bool socket_ = false;
};

class Listener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port.
  static Listener bind(const std::string& host, std::uint16_t port);

  Listener() = default;
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  Listener(Listener&& o) noexcept;
  Listener& operator=(Listener&& o) noexcept;

  std::uint16_t port() const { return port_; }

  /// nullopt on timeout.
  std::optional<Stream> accept(std::chrono::milliseconds timeout);

  void close() noexcept;

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Throws TransportError when the peer is unreachable.
Stream connect_tcp(const std::string& host, std::uint16_t port);

}  // namespace sipo::net
