#pragma once

// Camera side of the live stream: synthetic frame source, daemon config and
// the produce -> encrypt+sign -> upload pipeline.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

#include "cactus/admin.hpp"
#include "cactus/framecrypto.hpp"
#include "cactus/storage.hpp"

namespace cactus::camera {

/// 640x480 YUV420.
inline constexpr size_t default_frame_bytes = 460'800;

/// Deterministic frame content: AES-256-CTR keystream keyed by SHA-256 of the
/// seed, counter block t_ms || 0, with t_ms big-endian over the first 8 bytes.
Bytes synthetic_frame(std::string_view seed, uint64_t t_ms, size_t bytes);

struct CameraConfig
{
  double frame_rate = 10;
  size_t frame_bytes = default_frame_bytes;
  size_t block_frames = framecrypto::default_block_frames;
  /// Optional; when set they must match what the owner chose at pairing.
  std::optional<keytree::TreeParams> tree_params;
  std::string storage_url;
  std::string state_path;
  std::string admin_socket;
  std::string source_seed = "cactus";
  /// When set, frames are read from this directory in name order, cycling.
  std::string frame_dir;
  /// false: frame clock runs as fast as the pipeline allows.
  bool realtime = true;
  /// First timestamp for a non-realtime clock; 0 means now.
  uint64_t start_ms = 0;
  /// 0 runs until stopped.
  double duration_s = 0;
  size_t queue_blocks = 64;
  double drain_timeout_s = 10;

  void validate() const;
  /// Flat `key = value` document, '#' comments, optional double quotes.
  static CameraConfig parse(std::string_view text);
  static CameraConfig load(const std::string& path);
};

/// Bounded FIFO between pipeline stages.
template <typename T>
class BoundedQueue
{
public:
  explicit BoundedQueue(size_t capacity)
    : capacity_(capacity)
  {
  }

  /// Blocks while full. Returns false once closed.
  bool push(T item)
  {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_)
      return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  /// Never blocks: evicts the oldest item when full. Returns how many were evicted.
  size_t push_evicting(T item)
  {
    std::lock_guard lock(mutex_);
    size_t evicted = 0;
    while (items_.size() >= capacity_) {
      items_.pop_front();
      ++evicted;
    }
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return evicted;
  }

  /// Blocks until an item arrives or the queue is closed and empty.
  std::optional<T> pop()
  {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty())
      return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close()
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

private:
  size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct RecorderStats
{
  uint64_t frames = 0;
  uint64_t blocks_encrypted = 0;
  uint64_t blocks_uploaded = 0;
  uint64_t blocks_dropped = 0;
  uint64_t upload_retries = 0;
  uint64_t rotations = 0;
};

/// Shared camera state guarded for the recorder and the admin server.
struct SharedCamera
{
  admin::CameraDevice device;
  std::mutex mutex;
  /// Called with the lock held after every state change worth persisting.
  std::function<void(const admin::CameraDevice&)> persist;
};

class Recorder
{
public:
  using Log = std::function<void(const std::string&)>;

  Recorder(CameraConfig config, SharedCamera& camera, std::shared_ptr<storage::BlobStore> store, Log log = {});

  /// Runs the three stages until the configured duration elapses, `stop`
  /// becomes true or the camera is reset, then drains the upload queue.
  RecorderStats run(const std::atomic<bool>& stop);

private:
  struct Block
  {
    storage::BlobKey key;
    Bytes data;
  };

  void produce(const std::atomic<bool>& stop, BoundedQueue<framecrypto::PlainFrame>& out);
  void encrypt(BoundedQueue<framecrypto::PlainFrame>& in, BoundedQueue<Block>& out);
  void upload(BoundedQueue<Block>& in, const std::atomic<bool>& producing);
  Bytes next_payload(uint64_t t_ms);
  void note(const std::string& line) const;

  CameraConfig config_;
  SharedCamera& camera_;
  std::shared_ptr<storage::BlobStore> store_;
  Log log_;
  std::vector<std::string> frame_files_;
  size_t next_file_ = 0;
  RecorderStats stats_;
  std::mutex stats_mutex_;
};

/// Serves admin-channel frames on a unix socket until `stop` is set. Each
/// connection is handled to completion before the next is accepted.
void serve_admin(const std::string& socket_path, SharedCamera& camera, const std::atomic<bool>& stop);

} // namespace cactus::camera
