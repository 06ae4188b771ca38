#include "cactus/channel.hpp"

#include <cerrno>
#include <cstring>

#include <chrono>
#include <thread>

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

namespace cactus::channel {

namespace {

void write_all(int fd, ByteView data)
{
  while (!data.empty()) {
    ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR)
        continue;
      throw Error(ErrorCode::Io, std::string("channel write: ") + std::strerror(errno));
    }
    data = data.subspan(static_cast<size_t>(n));
  }
}

// Returns the number of bytes read; short only at EOF.
size_t read_all(int fd, std::span<uint8_t> out)
{
  size_t got = 0;
  while (got < out.size()) {
    ssize_t n = ::read(fd, out.data() + got, out.size() - got);
    if (n < 0) {
      if (errno == EINTR)
        continue;
      throw Error(ErrorCode::Io, std::string("channel read: ") + std::strerror(errno));
    }
    if (n == 0)
      break;
    got += static_cast<size_t>(n);
  }
  return got;
}

sockaddr_un unix_address(const std::string& path)
{
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.empty() || path.size() >= sizeof(addr.sun_path))
    throw Error(ErrorCode::InvalidArgument, "bad unix socket path: " + path);
  std::copy(path.begin(), path.end(), addr.sun_path);
  return addr;
}

} // namespace

Bytes Frame::encode() const
{
  Writer w;
  w.u8(tag).bytes32(body);
  return w.take();
}

Frame Frame::decode(ByteView data)
{
  Reader r(data);
  Frame f;
  f.tag = r.u8();
  f.body = r.bytes32();
  r.expect_done();
  return f;
}

void FdChannel::send(const Frame& frame)
{
  write_all(fd_, frame.encode());
}

std::optional<Frame> FdChannel::receive()
{
  ByteArray<5> header{};
  size_t got = read_all(fd_, header);
  if (got == 0)
    return std::nullopt;
  if (got != header.size())
    throw Error(ErrorCode::Io, "truncated frame header");
  Reader r(header);
  Frame f;
  f.tag = r.u8();
  uint32_t len = r.u32();
  if (len > max_frame_body)
    throw Error(ErrorCode::Malformed, "frame body too large");
  f.body.resize(len);
  if (read_all(fd_, f.body) != len)
    throw Error(ErrorCode::Io, "truncated frame body");
  return f;
}

int listen_unix(const std::string& path, int backlog)
{
  auto addr = unix_address(path);
  int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0)
    throw Error(ErrorCode::Io, std::string("socket: ") + std::strerror(errno));
  ::unlink(path.c_str());
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd, backlog) != 0) {
    int err = errno;
    ::close(fd);
    throw Error(ErrorCode::Io, "cannot listen on " + path + ": " + std::strerror(err));
  }
  return fd;
}

int accept_one(int listener)
{
  for (;;) {
    int fd = ::accept(listener, nullptr, nullptr);
    if (fd >= 0)
      return fd;
    if (errno != EINTR)
      throw Error(ErrorCode::Io, std::string("accept: ") + std::strerror(errno));
  }
}

int connect_unix(const std::string& path, int wait_ms)
{
  auto addr = unix_address(path);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(wait_ms);
  for (;;) {
    int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0)
      throw Error(ErrorCode::Io, std::string("socket: ") + std::strerror(errno));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0)
      return fd;
    int err = errno;
    ::close(fd);
    bool retry = err == ENOENT || err == ECONNREFUSED || err == EINTR;
    if (!retry || std::chrono::steady_clock::now() >= deadline)
      throw Error(ErrorCode::Io, "cannot connect to " + path + ": " + std::strerror(err));
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

} // namespace cactus::channel
