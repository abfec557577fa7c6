#include "sipo/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "sipo/text.hpp"

namespace sipo::net {

namespace {

std::string errno_text() { return std::strerror(errno); }

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  Endpoint ep;
  auto t = text::trim(text);
  if (t == "stdio") {
    ep.kind = Kind::Stdio;
    return ep;
  }
  auto colon = t.rfind(':');
  if (colon == std::string_view::npos) {
    throw InputError("endpoint '" + std::string(text) + "' is neither 'stdio' nor host:port");
  }
  auto port = text::parse_int(t.substr(colon + 1));
  if (!port || *port < 0 || *port > 65535) {
    throw InputError("endpoint '" + std::string(text) + "' has an invalid port");
  }
  ep.kind = Kind::Tcp;
  ep.host = std::string(t.substr(0, colon));
  if (ep.host.empty()) ep.host = "127.0.0.1";
  ep.port = static_cast<std::uint16_t>(*port);
  return ep;
}

std::string Endpoint::to_string() const {
  if (kind == Kind::Stdio) return "stdio";
  return host + ":" + std::to_string(port);
}

Stream::Stream(int read_fd, int write_fd, bool owned)
    : read_fd_(read_fd), write_fd_(write_fd), owned_(owned) {
  int type = 0;
  socklen_t len = sizeof(type);
  socket_ = ::getsockopt(write_fd_, SOL_SOCKET, SO_TYPE, &type, &len) == 0;
}

Stream::~Stream() { close(); }

Stream::Stream(Stream&& o) noexcept
    : read_fd_(o.read_fd_), write_fd_(o.write_fd_), owned_(o.owned_), socket_(o.socket_) {
  o.read_fd_ = o.write_fd_ = -1;
}

Stream& Stream::operator=(Stream&& o) noexcept {
  if (this != &o) {
    close();
    read_fd_ = o.read_fd_;
    write_fd_ = o.write_fd_;
    owned_ = o.owned_;
    socket_ = o.socket_;
    o.read_fd_ = o.write_fd_ = -1;
  }
  return *this;
}

Stream Stream::stdio() { return Stream(STDIN_FILENO, STDOUT_FILENO, false); }

std::optional<std::size_t> Stream::read_some(std::span<std::uint8_t> buf,
                                             std::chrono::milliseconds timeout) {
  if (read_fd_ < 0) return std::nullopt;
  pollfd p{read_fd_, POLLIN, 0};
  int rc;
  do {
    rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  } while (rc < 0 && errno == EINTR);
  if (rc < 0) throw TransportError("poll failed: " + errno_text());
  if (rc == 0) return std::size_t{0};
  ssize_t n;
  do {
    n = ::read(read_fd_, buf.data(), buf.size());
  } while (n < 0 && errno == EINTR);
  if (n < 0) {
    if (errno == ECONNRESET) return std::nullopt;
    throw TransportError("read failed: " + errno_text());
  }
  if (n == 0) return std::nullopt;
  return static_cast<std::size_t>(n);
}

void Stream::write_all(std::span<const std::uint8_t> bytes) {
  if (write_fd_ < 0) throw TransportError("stream is closed");
  std::size_t done = 0;
  while (done < bytes.size()) {
    ssize_t n = socket_ ? ::send(write_fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL)
                        : ::write(write_fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError("write failed: " + errno_text());
    }
    done += static_cast<std::size_t>(n);
  }
}

void Stream::shutdown() noexcept {
  if (socket_ && read_fd_ >= 0) ::shutdown(read_fd_, SHUT_RDWR);
}

void Stream::close() noexcept {
  if (owned_) {
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  }
  read_fd_ = write_fd_ = -1;
}

Listener Listener::bind(const std::string& host, std::uint16_t port) {
  Listener l;
  l.fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (l.fd_ < 0) throw TransportError("socket failed: " + errno_text());
  int one = 1;
  ::setsockopt(l.fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  const std::string h = (host.empty() || host == "localhost") ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1) {
    throw InputError("listen address '" + host + "' is not an IPv4 literal");
  }
  if (::bind(l.fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw TransportError("bind " + h + ":" + std::to_string(port) + " failed: " + errno_text());
  }
  if (::listen(l.fd_, 4) != 0) throw TransportError("listen failed: " + errno_text());
  socklen_t len = sizeof(addr);
  ::getsockname(l.fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  l.port_ = ntohs(addr.sin_port);
  return l;
}

Listener::~Listener() { close(); }

Listener::Listener(Listener&& o) noexcept : fd_(o.fd_), port_(o.port_) { o.fd_ = -1; }

Listener& Listener::operator=(Listener&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    port_ = o.port_;
    o.fd_ = -1;
  }
  return *this;
}

std::optional<Stream> Listener::accept(std::chrono::milliseconds timeout) {
  if (fd_ < 0) throw TransportError("listener is closed");
  pollfd p{fd_, POLLIN, 0};
  int rc;
  do {
    rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  } while (rc < 0 && errno == EINTR);
  if (rc < 0) throw TransportError("poll failed: " + errno_text());
  if (rc == 0) return std::nullopt;
  int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) {
    if (errno == EAGAIN || errno == EINTR || errno == ECONNABORTED) return std::nullopt;
    throw TransportError("accept failed: " + errno_text());
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Stream(fd, fd, true);
}

void Listener::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Stream connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw TransportError("resolve " + host + " failed: " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return Stream(fd, fd, true);
    }
    last_error = errno_text();
    ::close(fd);
  }
  ::freeaddrinfo(res);
  throw TransportError("connect " + host + ":" + std::to_string(port) + " failed: " + last_error);
}

}  // namespace sipo::net
