#pragma once

// Untrusted blob storage for encrypted blocks. Nothing here authenticates
// anyone; the stores are append-only maps keyed by (camera, epoch, sequence).
//
// HTTP surface:
//   PUT /v1/{camera_id_hex}/{first_epoch}/{sequence}   201, or 409 on a duplicate key
//   GET /v1/{camera_id_hex}?from={e}&to={e}[&since={s}] listing, see encode_listing
//
// `since` drops blobs whose sequence is below it. Sequences are the first
// frame's timestamp, so a follower can use it as a cursor.

#include <atomic>
#include <compare>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "cactus/bytes.hpp"

namespace cactus::storage {

struct BlobKey
{
  ByteArray<32> camera_id{};
  uint64_t first_epoch = 0;
  uint64_t sequence = 0;

  friend bool operator==(const BlobKey&, const BlobKey&) = default;
  friend auto operator<=>(const BlobKey&, const BlobKey&) = default;
};

struct Blob
{
  BlobKey key;
  Bytes data;
};

class BlobStore
{
public:
  virtual ~BlobStore() = default;
  /// Throws Conflict if the key is taken.
  virtual void put(const BlobKey& key, ByteView data) = 0;
  /// Blobs with first_epoch in [from, to), ordered by (first_epoch, sequence).
  virtual std::vector<Blob> get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to) = 0;
  /// get_range restricted to sequence >= since.
  virtual std::vector<Blob> get_since(const ByteArray<32>& camera_id, uint64_t from, uint64_t to, uint64_t since);
};

class MemoryStore final : public BlobStore
{
public:
  void put(const BlobKey& key, ByteView data) override;
  std::vector<Blob> get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to) override;
  std::vector<Blob> get_since(const ByteArray<32>& camera_id, uint64_t from, uint64_t to, uint64_t since) override;

private:
  std::mutex mutex_;
  std::map<BlobKey, Bytes> blobs_;
};

/// One directory per camera (hex id) holding {first_epoch}-{sequence}.blk.
/// Writes go to a temp file that is then hard-linked into place, so a put is
/// all-or-nothing and never replaces an existing blob.
class FileStore final : public BlobStore
{
public:
  explicit FileStore(std::filesystem::path root);

  void put(const BlobKey& key, ByteView data) override;
  std::vector<Blob> get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to) override;

private:
  std::filesystem::path root_;
  std::atomic<uint64_t> temp_counter_{ 0 };
};

/// Client for a storaged instance, e.g. "http://127.0.0.1:8080".
class HttpStore final : public BlobStore
{
public:
  explicit HttpStore(std::string base_url);
  ~HttpStore() override;

  void put(const BlobKey& key, ByteView data) override;
  std::vector<Blob> get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to) override;
  std::vector<Blob> get_since(const ByteArray<32>& camera_id, uint64_t from, uint64_t to, uint64_t since) override;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct AdversaryConfig
{
  double tamper_rate = 0;
  double drop_rate = 0;
  /// Mix a previously served blob into later answers, relabelled with a key
  /// inside the requested range.
  bool replay = false;
  uint64_t seed = 1;

  bool honest() const { return tamper_rate <= 0 && drop_rate <= 0 && !replay; }
};

/// Wraps a store and misbehaves on reads. Writes pass through untouched.
class AdversarialStore final : public BlobStore
{
public:
  AdversarialStore(std::shared_ptr<BlobStore> inner, AdversaryConfig config);

  void put(const BlobKey& key, ByteView data) override { inner_->put(key, data); }
  std::vector<Blob> get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to) override;

  uint64_t tampered() const { return tampered_; }
  uint64_t dropped() const { return dropped_; }
  uint64_t replayed() const { return replayed_; }

private:
  std::shared_ptr<BlobStore> inner_;
  AdversaryConfig config_;
  std::mutex mutex_;
  std::mt19937_64 rng_;
  std::vector<Blob> history_;
  uint64_t tampered_ = 0;
  uint64_t dropped_ = 0;
  uint64_t replayed_ = 0;
};

/// Listing body: per blob, epoch u64 || sequence u64 || length u32 || bytes.
Bytes encode_listing(const std::vector<Blob>& blobs);
std::vector<Blob> decode_listing(const ByteArray<32>& camera_id, ByteView body);

std::string blob_file_name(uint64_t first_epoch, uint64_t sequence);

/// HTTP front end over any store.
class Server
{
public:
  explicit Server(std::shared_ptr<BlobStore> store);
  ~Server();

  /// Binds and returns the port (pass 0 for an ephemeral one). Throws Io.
  int bind(const std::string& host, int port);
  /// Serves on a background thread; returns once the listener is up.
  void start();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace cactus::storage
