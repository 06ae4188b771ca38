#pragma once

// Viewer side of the stream: fetch blocks from untrusted storage, verify,
// decrypt, and hand out each frame at most once.

#include <set>
#include <string>

#include "cactus/admin.hpp"
#include "cactus/framecrypto.hpp"
#include "cactus/storage.hpp"

namespace cactus::viewer {

struct DeliveredFrame
{
  uint64_t t_ms = 0;
  Bytes payload;
};

/// What happened to one stored block.
struct BlockReport
{
  storage::BlobKey key;
  /// Block-level failure; per-frame problems live in `unauthorized` and
  /// `failed_frames`.
  std::optional<ErrorCode> error;
  std::string reason;
  std::vector<DeliveredFrame> frames;
  /// Timestamps of frames whose epoch key the viewer does not hold.
  std::vector<uint64_t> unauthorized;
  std::vector<std::pair<uint64_t, ErrorCode>> failed_frames;
};

class Playback
{
public:
  Playback(admin::Grant grant, std::shared_ptr<storage::BlobStore> store);

  const ByteArray<32>& camera_id() const { return camera_id_; }
  const keytree::TreeParams& params() const { return grant_.tree.params(); }

  /// Fetches blocks with first_epoch in [from, to) and processes every block
  /// not seen before. Blocks whose storage key disagrees with their manifest,
  /// or whose frames are not newer than what was already delivered, are
  /// rejected as replays. A nonzero `since` skips blocks whose sequence
  /// (first frame timestamp) is older.
  std::vector<BlockReport> fetch(uint64_t from_epoch, uint64_t to_epoch, uint64_t since = 0);

  /// Newest delivered frame timestamp.
  std::optional<uint64_t> last_delivered() const { return last_t_; }

private:
  BlockReport process(const storage::Blob& blob);

  admin::Grant grant_;
  std::shared_ptr<storage::BlobStore> store_;
  Bytes camera_public_;
  ByteArray<32> camera_id_{};
  std::set<storage::BlobKey> seen_;
  std::set<uint64_t> delivered_;
  std::optional<uint64_t> last_t_;
};

} // namespace cactus::viewer
