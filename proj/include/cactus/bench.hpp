#pragma once

// Live-stream latency breakdown, one row per stage on each side.

#include <string>
#include <vector>

#include "cactus/keytree.hpp"
#include "cactus/storage.hpp"

namespace cactus::bench {

/// Adds WAN-like cost to every store call: one round trip plus the payload
/// at the given bandwidth. Sleeps; does not touch the data.
struct LinkModel
{
  double rtt_ms = 0;
  double mbit_per_s = 0;

  bool active() const { return rtt_ms > 0 || mbit_per_s > 0; }
  double delay_ms(size_t bytes) const;
};

class ShapedStore final : public storage::BlobStore
{
public:
  ShapedStore(std::shared_ptr<storage::BlobStore> inner, LinkModel link);

  void put(const storage::BlobKey& key, ByteView data) override;
  std::vector<storage::Blob> get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to) override;
  std::vector<storage::Blob> get_since(const ByteArray<32>& camera_id, uint64_t from, uint64_t to, uint64_t since) override;

private:
  std::shared_ptr<storage::BlobStore> inner_;
  LinkModel link_;
};

struct BenchConfig
{
  size_t frames = 1000;
  size_t frame_bytes = 460'800;
  double frame_rate = 10;
  keytree::TreeParams params{ 32, 10, 0 };
  /// All-zero frames instead of the pseudorandom source.
  bool zero_frames = false;
  /// Empty: an in-process storage server on loopback.
  std::string storage_url;
  LinkModel link;
};

struct Row
{
  std::string device;
  std::string operation;
  double mean_ms = 0;
  double sigma_ms = 0;
};

struct Report
{
  BenchConfig config;
  std::vector<Row> rows;
  /// Camera key extraction split by whether the frame opened a new epoch.
  double key_within_epoch_ms = 0;
  double key_at_boundary_ms = 0;
  size_t epoch_boundaries = 0;

  const Row& row(std::string_view device, std::string_view operation) const;
  std::string render() const;
};

inline constexpr const char* camera_device = "Camera";
inline constexpr const char* viewer_device = "Smartphone";

/// Streams `frames` frames one at a time through encrypt, hash, sign and
/// upload, then download, key extraction, hash and signature verification
/// and decryption on the viewer. Throws if any frame fails to round-trip.
Report bench_run(const BenchConfig& config);

} // namespace cactus::bench
