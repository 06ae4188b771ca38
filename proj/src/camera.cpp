#include "cactus/camera.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "cactus/crypto.hpp"

namespace cactus::camera {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

Bytes synthetic_frame(std::string_view seed, uint64_t t_ms, size_t bytes)
{
  auto key = crypto::sha256(as_view(seed));
  ByteArray<16> iv{};
  for (int i = 0; i < 8; ++i)
    iv[i] = static_cast<uint8_t>(t_ms >> (8 * (7 - i)));
  Bytes out(bytes);
  crypto::aes_ctr_keystream(key, iv, out);
  for (size_t i = 0; i < std::min<size_t>(8, bytes); ++i)
    out[i] = iv[i];
  return out;
}

namespace {

std::string trim(std::string_view s)
{
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T number(const std::string& key, const std::string& value)
{
  T v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size())
    throw Error(ErrorCode::InvalidArgument, "config: " + key + " is not a number: " + value);
  return v;
}

bool boolean(const std::string& key, const std::string& value)
{
  if (value == "true")
    return true;
  if (value == "false")
    return false;
  throw Error(ErrorCode::InvalidArgument, "config: " + key + " must be true or false");
}

} // namespace

void CameraConfig::validate() const
{
  if (!(frame_rate >= 1))
    throw Error(ErrorCode::InvalidArgument, "frame_rate must be at least 1");
  if (block_frames < 1 || block_frames > framecrypto::max_block_frames)
    throw Error(ErrorCode::InvalidArgument, "block_size out of range");
  if (frame_dir.empty() && (frame_bytes < 8 || frame_bytes > framecrypto::max_payload_bytes))
    throw Error(ErrorCode::InvalidArgument, "frame_bytes out of range");
  if (queue_blocks < 1)
    throw Error(ErrorCode::InvalidArgument, "queue_blocks must be at least 1");
  if (duration_s < 0)
    throw Error(ErrorCode::InvalidArgument, "duration_s must not be negative");
  if (tree_params)
    tree_params->validate();
}

CameraConfig CameraConfig::parse(std::string_view text)
{
  CameraConfig c;
  keytree::TreeParams tp;
  bool tree_given = false;
  std::istringstream in{ std::string(text) };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (body.empty() || body.front() == '#')
      continue;
    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(std::string_view(body).substr(0, eq));
    auto value = trim(std::string_view(body).substr(eq + 1));
    if (!value.empty() && value.front() == '"') {
      auto close = value.find('"', 1);
      auto rest = close == std::string::npos ? std::string("x") : trim(std::string_view(value).substr(close + 1));
      if (!rest.empty() && rest.front() != '#')
        throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": bad quoting");
      value = value.substr(1, close - 1);
    } else if (auto hash = value.find('#'); hash != std::string::npos) {
      value = trim(std::string_view(value).substr(0, hash));
    }

    if (key == "frame_rate")
      c.frame_rate = number<double>(key, value);
    else if (key == "frame_bytes")
      c.frame_bytes = number<size_t>(key, value);
    else if (key == "block_size" || key == "block_size_N")
      c.block_frames = number<size_t>(key, value);
    else if (key == "tree_depth")
      tp.depth = number<unsigned>(key, value), tree_given = true;
    else if (key == "epoch_seconds")
      tp.epoch_seconds = number<uint32_t>(key, value), tree_given = true;
    else if (key == "tree_t0_ms")
      tp.t0_ms = number<uint64_t>(key, value), tree_given = true;
    else if (key == "storage_url")
      c.storage_url = value;
    else if (key == "state_path")
      c.state_path = value;
    else if (key == "admin_socket")
      c.admin_socket = value;
    else if (key == "source_seed")
      c.source_seed = value;
    else if (key == "frame_dir")
      c.frame_dir = value;
    else if (key == "realtime")
      c.realtime = boolean(key, value);
    else if (key == "start_ms")
      c.start_ms = number<uint64_t>(key, value);
    else if (key == "duration_s")
      c.duration_s = number<double>(key, value);
    else if (key == "queue_blocks")
      c.queue_blocks = number<size_t>(key, value);
    else if (key == "drain_timeout_s")
      c.drain_timeout_s = number<double>(key, value);
    else
      throw Error(ErrorCode::InvalidArgument, "config: unknown key " + key);
  }
  if (tree_given)
    c.tree_params = tp;
  c.validate();
  return c;
}

CameraConfig CameraConfig::load(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::Io, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Recorder::Recorder(CameraConfig config, SharedCamera& camera, std::shared_ptr<storage::BlobStore> store, Log log)
  : config_(std::move(config))
  , camera_(camera)
  , store_(std::move(store))
  , log_(std::move(log))
{
  config_.validate();
  if (!config_.frame_dir.empty()) {
    for (const auto& e : fs::directory_iterator(config_.frame_dir))
      if (e.is_regular_file())
        frame_files_.push_back(e.path().string());
    std::sort(frame_files_.begin(), frame_files_.end());
    if (frame_files_.empty())
      throw Error(ErrorCode::InvalidArgument, "frame_dir holds no frames");
  }
}

void Recorder::note(const std::string& line) const
{
  if (log_)
    log_(line);
}

Bytes Recorder::next_payload(uint64_t t_ms)
{
  if (frame_files_.empty())
    return synthetic_frame(config_.source_seed, t_ms, config_.frame_bytes);
  const auto& path = frame_files_[next_file_++ % frame_files_.size()];
  std::ifstream in(path, std::ios::binary);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

RecorderStats Recorder::run(const std::atomic<bool>& stop)
{
  stats_ = {};
  BoundedQueue<framecrypto::PlainFrame> frames(std::max<size_t>(config_.block_frames * 2, 16));
  BoundedQueue<Block> blocks(config_.queue_blocks);
  std::atomic<bool> producing{ true };

  std::thread producer([&] {
    // A halting encryptor closes `frames`, which also stops this stage.
    produce(stop, frames);
    frames.close();
  });
  std::thread encryptor([&] {
    encrypt(frames, blocks);
    frames.close();
    producing = false;
    blocks.close();
  });
  upload(blocks, producing);
  producer.join();
  encryptor.join();
  return stats_;
}

void Recorder::produce(const std::atomic<bool>& stop, BoundedQueue<framecrypto::PlainFrame>& out)
{
  uint64_t start = config_.realtime || config_.start_ms == 0 ? admin::system_clock_ms() : config_.start_ms;
  {
    std::lock_guard lock(camera_.mutex);
    if (auto last = camera_.device.last_frame_ms(); last && *last >= start)
      start = *last + 1;
  }
  const double period_ms = 1000.0 / config_.frame_rate;
  const uint64_t limit = config_.duration_s > 0 ? static_cast<uint64_t>(std::llround(config_.duration_s * config_.frame_rate)) : 0;
  auto wall_start = Clock::now();
  for (uint64_t i = 0; (limit == 0 || i < limit) && !stop; ++i) {
    auto offset = static_cast<uint64_t>(std::llround(static_cast<double>(i) * period_ms));
    if (config_.realtime)
      std::this_thread::sleep_until(wall_start + std::chrono::milliseconds(offset));
    uint64_t t = start + offset;
    if (!out.push({ t, next_payload(t) }))
      return;
    std::lock_guard lock(stats_mutex_);
    ++stats_.frames;
  }
}

void Recorder::encrypt(BoundedQueue<framecrypto::PlainFrame>& in, BoundedQueue<Block>& out)
{
  std::optional<framecrypto::CameraIdentity> identity;
  std::optional<uint64_t> rotated;
  std::vector<framecrypto::PlainFrame> pending;

  auto flush = [&]() -> bool {
    if (pending.empty())
      return true;
    Block block;
    {
      std::lock_guard lock(camera_.mutex);
      auto& dev = camera_.device;
      if (!dev.initialized()) {
        note("camera was reset; recording stops");
        return false;
      }
      if (!identity)
        identity = framecrypto::CameraIdentity::from_device_keys(dev.camera_keys());
      try {
        auto epoch = keytree::epoch_of(pending.front().t_ms, dev.tree().params());
        if (!rotated || epoch > *rotated) {
          // Rotation: every key for earlier epochs is erased here.
          dev.advance_to(epoch);
          rotated = epoch;
          std::lock_guard s(stats_mutex_);
          ++stats_.rotations;
        }
        auto manifest = framecrypto::encrypt_block(pending, dev.tree(), *identity);
        block.key = { manifest.camera_id, manifest.first_epoch, pending.front().t_ms };
        block.data = manifest.serialize();
      } catch (const Error& e) {
        note(std::string("block at ") + std::to_string(pending.front().t_ms) + " not recorded: " + e.what());
        if (e.code() == ErrorCode::TreeLifespanExceeded || e.code() == ErrorCode::BeforeOrigin)
          return false;
        pending.clear();
        return true;
      }
      dev.record_frame(pending.back().t_ms);
      if (camera_.persist)
        camera_.persist(dev);
    }
    pending.clear();
    size_t evicted = out.push_evicting(std::move(block));
    std::lock_guard s(stats_mutex_);
    ++stats_.blocks_encrypted;
    if (evicted) {
      stats_.blocks_dropped += evicted;
      note("upload queue full; dropped " + std::to_string(stats_.blocks_dropped) + " block(s) so far");
    }
    return true;
  };

  while (auto frame = in.pop()) {
    pending.push_back(std::move(*frame));
    if (pending.size() >= config_.block_frames && !flush()) {
      in.close();
      return;
    }
  }
  flush();
}

void Recorder::upload(BoundedQueue<Block>& in, const std::atomic<bool>& producing)
{
  std::optional<Clock::time_point> deadline;
  auto drain_budget = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(config_.drain_timeout_s));
  while (auto block = in.pop()) {
    auto backoff = std::chrono::milliseconds(50);
    for (;;) {
      try {
        store_->put(block->key, block->data);
        std::lock_guard s(stats_mutex_);
        ++stats_.blocks_uploaded;
        break;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::Conflict) {
          note("storage already holds block " + std::to_string(block->key.sequence));
          break;
        }
        if (!producing && !deadline)
          deadline = Clock::now() + drain_budget;
        if (deadline && Clock::now() >= *deadline) {
          std::lock_guard s(stats_mutex_);
          ++stats_.blocks_dropped;
          break;
        }
        {
          std::lock_guard s(stats_mutex_);
          ++stats_.upload_retries;
        }
        note(std::string("upload failed, retrying: ") + e.what());
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, std::chrono::milliseconds(2000));
      }
    }
  }
}

void serve_admin(const std::string& socket_path, SharedCamera& camera, const std::atomic<bool>& stop)
{
  int listener = channel::listen_unix(socket_path);

  while (!stop) {
    pollfd p{ listener, POLLIN, 0 };
    if (::poll(&p, 1, 100) <= 0)
      continue;
    int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0)
      continue;
    timeval tv{ 5, 0 };
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    try {
      channel::FdChannel ch(fd);
      while (auto frame = ch.receive()) {
        channel::Frame reply;
        {
          std::lock_guard lock(camera.mutex);
          reply = camera.device.handle(*frame, admin::system_clock_ms());
          if (camera.persist)
            camera.persist(camera.device);
        }
        ch.send(reply);
      }
    } catch (const Error&) {
    }
    ::close(fd);
  }
  ::close(listener);
  ::unlink(socket_path.c_str());
}

} // namespace cactus::camera
