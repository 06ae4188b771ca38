#include "cactus/storage.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <unistd.h>

#include "cactus/error.hpp"

namespace cactus::storage {

namespace fs = std::filesystem;

std::vector<Blob> BlobStore::get_since(const ByteArray<32>& camera_id, uint64_t from, uint64_t to, uint64_t since)
{
  auto all = get_range(camera_id, from, to);
  std::erase_if(all, [&](const Blob& b) { return b.key.sequence < since; });
  return all;
}

void MemoryStore::put(const BlobKey& key, ByteView data)
{
  std::lock_guard lock(mutex_);
  if (!blobs_.emplace(key, Bytes(data.begin(), data.end())).second)
    throw Error(ErrorCode::Conflict, "blob key already stored");
}

std::vector<Blob> MemoryStore::get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to)
{
  std::vector<Blob> out;
  if (to <= from)
    return out;
  std::lock_guard lock(mutex_);
  auto it = blobs_.lower_bound(BlobKey{ camera_id, from, 0 });
  for (; it != blobs_.end() && it->first.camera_id == camera_id && it->first.first_epoch < to; ++it)
    out.push_back({ it->first, it->second });
  return out;
}

std::vector<Blob> MemoryStore::get_since(const ByteArray<32>& camera_id, uint64_t from, uint64_t to, uint64_t since)
{
  std::vector<Blob> out;
  std::lock_guard lock(mutex_);
  auto it = blobs_.lower_bound(BlobKey{ camera_id, from, since });
  while (it != blobs_.end() && it->first.camera_id == camera_id && it->first.first_epoch < to) {
    if (it->first.sequence < since) {
      it = blobs_.lower_bound(BlobKey{ camera_id, it->first.first_epoch, since });
      continue;
    }
    out.push_back({ it->first, it->second });
    ++it;
  }
  return out;
}

std::string blob_file_name(uint64_t first_epoch, uint64_t sequence)
{
  return std::to_string(first_epoch) + "-" + std::to_string(sequence) + ".blk";
}

namespace {

std::optional<std::pair<uint64_t, uint64_t>> parse_blob_file_name(const std::string& name)
{
  if (name.size() < 7 || !name.ends_with(".blk"))
    return std::nullopt;
  auto dash = name.find('-');
  if (dash == std::string::npos)
    return std::nullopt;
  uint64_t epoch = 0;
  uint64_t seq = 0;
  const char* end = name.data() + name.size() - 4;
  auto a = std::from_chars(name.data(), name.data() + dash, epoch);
  auto b = std::from_chars(name.data() + dash + 1, end, seq);
  if (a.ec != std::errc() || a.ptr != name.data() + dash || b.ec != std::errc() || b.ptr != end)
    return std::nullopt;
  return std::pair{ epoch, seq };
}

Bytes read_file(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::Io, "cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

} // namespace

FileStore::FileStore(fs::path root)
  : root_(std::move(root))
{
  fs::create_directories(root_);
}

void FileStore::put(const BlobKey& key, ByteView data)
{
  auto dir = root_ / to_hex(key.camera_id);
  fs::create_directories(dir);
  auto target = dir / blob_file_name(key.first_epoch, key.sequence);
  auto temp = dir / (".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(temp_counter_++));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out)
      throw Error(ErrorCode::Io, "cannot write " + temp.string());
  }
  // link() refuses to replace, which gives append-only semantics for free.
  int rc = ::link(temp.c_str(), target.c_str());
  int err = errno;
  fs::remove(temp);
  if (rc != 0) {
    if (err == EEXIST)
      throw Error(ErrorCode::Conflict, "blob key already stored");
    throw Error(ErrorCode::Io, "cannot store " + target.string());
  }
}

std::vector<Blob> FileStore::get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to)
{
  std::vector<Blob> out;
  auto dir = root_ / to_hex(camera_id);
  std::error_code ec;
  if (to <= from || !fs::is_directory(dir, ec))
    return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    auto parsed = parse_blob_file_name(entry.path().filename().string());
    if (!parsed || parsed->first < from || parsed->first >= to)
      continue;
    out.push_back({ BlobKey{ camera_id, parsed->first, parsed->second }, read_file(entry.path()) });
  }
  std::sort(out.begin(), out.end(), [](const Blob& a, const Blob& b) { return a.key < b.key; });
  return out;
}

AdversarialStore::AdversarialStore(std::shared_ptr<BlobStore> inner, AdversaryConfig config)
  : inner_(std::move(inner))
  , config_(config)
  , rng_(config.seed)
{
}

std::vector<Blob> AdversarialStore::get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to)
{
  auto honest = inner_->get_range(camera_id, from, to);
  std::lock_guard lock(mutex_);
  std::uniform_real_distribution<double> coin(0, 1);
  std::vector<Blob> out;
  for (auto& blob : honest) {
    if (history_.size() < 256)
      history_.push_back(blob);
    if (config_.drop_rate > 0 && coin(rng_) < config_.drop_rate) {
      ++dropped_;
      continue;
    }
    if (config_.tamper_rate > 0 && !blob.data.empty() && coin(rng_) < config_.tamper_rate) {
      auto bit = rng_() % (blob.data.size() * 8);
      blob.data[bit / 8] ^= static_cast<uint8_t>(1u << (bit % 8));
      ++tampered_;
    }
    out.push_back(std::move(blob));
  }

  if (config_.replay && to > from) {
    std::vector<const Blob*> stale;
    for (const auto& old : history_) {
      bool served = std::any_of(out.begin(), out.end(), [&](const Blob& b) { return b.key == old.key; });
      if (old.key.camera_id == camera_id && !served)
        stale.push_back(&old);
    }
    if (!stale.empty()) {
      Blob replay = *stale[rng_() % stale.size()];
      replay.key.first_epoch = from + rng_() % (to - from);
      replay.key.sequence ^= 1;
      out.push_back(std::move(replay));
      ++replayed_;
      std::sort(out.begin(), out.end(), [](const Blob& a, const Blob& b) { return a.key < b.key; });
    }
  }
  return out;
}

Bytes encode_listing(const std::vector<Blob>& blobs)
{
  Writer w;
  for (const auto& blob : blobs)
    w.u64(blob.key.first_epoch).u64(blob.key.sequence).bytes32(blob.data);
  return w.take();
}

std::vector<Blob> decode_listing(const ByteArray<32>& camera_id, ByteView body)
{
  std::vector<Blob> out;
  Reader r(body);
  while (!r.done()) {
    Blob blob;
    blob.key.camera_id = camera_id;
    blob.key.first_epoch = r.u64();
    blob.key.sequence = r.u64();
    blob.data = r.bytes32();
    out.push_back(std::move(blob));
  }
  return out;
}

} // namespace cactus::storage
