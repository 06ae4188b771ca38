#pragma once

// Message framing for the insecure device-to-device channel: every message is
// tag u8 || length u32 big-endian || body.

#include <optional>
#include <string>

#include "cactus/bytes.hpp"

namespace cactus::channel {

inline constexpr size_t max_frame_body = size_t{ 16 } << 20;

struct Frame
{
  uint8_t tag = 0;
  Bytes body;

  Bytes encode() const;
  /// Exactly one frame; trailing bytes are Malformed.
  static Frame decode(ByteView data);

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Blocking framed I/O over a connected stream socket or pipe.
class FdChannel
{
public:
  explicit FdChannel(int fd)
    : fd_(fd)
  {
  }

  void send(const Frame& frame);
  /// nullopt on clean EOF before a header; Io on a truncated frame.
  std::optional<Frame> receive();

  int fd() const { return fd_; }

private:
  int fd_;
};

/// Bound and listening AF_UNIX stream socket. A stale socket file at `path`
/// is replaced.
int listen_unix(const std::string& path, int backlog = 4);
/// Blocks until a peer connects.
int accept_one(int listener);
/// Connects to `path`, retrying for up to `wait_ms` while nobody listens yet.
int connect_unix(const std::string& path, int wait_ms = 0);

} // namespace cactus::channel
