#include "cactus/viewer.hpp"

namespace cactus::viewer {

Playback::Playback(admin::Grant grant, std::shared_ptr<storage::BlobStore> store)
  : grant_(std::move(grant))
  , store_(std::move(store))
  , camera_public_(grant_.camera_public.ed25519.begin(), grant_.camera_public.ed25519.end())
  , camera_id_(framecrypto::camera_id_of(camera_public_))
{
}

std::vector<BlockReport> Playback::fetch(uint64_t from_epoch, uint64_t to_epoch, uint64_t since)
{
  std::vector<BlockReport> out;
  auto blobs = since ? store_->get_since(camera_id_, from_epoch, to_epoch, since) : store_->get_range(camera_id_, from_epoch, to_epoch);
  for (const auto& blob : blobs) {
    if (seen_.contains(blob.key))
      continue;
    auto report = process(blob);
    // Only an intact block settles its key; a damaged copy may be followed
    // by a good one on the next poll.
    if (!report.error && report.failed_frames.empty())
      seen_.insert(blob.key);
    out.push_back(std::move(report));
  }
  return out;
}

BlockReport Playback::process(const storage::Blob& blob)
{
  BlockReport report;
  report.key = blob.key;
  auto fail = [&](ErrorCode code, std::string reason) {
    report.error = code;
    report.reason = std::move(reason);
    return report;
  };

  framecrypto::BlockManifest block;
  try {
    block = framecrypto::BlockManifest::parse(blob.data);
  } catch (const Error& e) {
    return fail(ErrorCode::IntegrityFailure, std::string("unparseable block: ") + e.what());
  }
  if (block.camera_id != camera_id_ || block.first_epoch != blob.key.first_epoch || block.frames.empty() ||
      block.frames.front().t_ms != blob.key.sequence)
    return fail(ErrorCode::ReplayRejected, "storage key does not match the block it holds");

  std::vector<framecrypto::FrameOutcome> outcomes;
  try {
    outcomes = framecrypto::open_block(block, grant_.tree, camera_public_);
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  }

  for (size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    if (o.error == ErrorCode::KeyUnavailable) {
      report.unauthorized.push_back(o.t_ms);
      continue;
    }
    if (o.error) {
      report.failed_frames.emplace_back(o.t_ms, *o.error);
      continue;
    }
    // Left over from an earlier, partly damaged copy of this block.
    if (delivered_.contains(o.t_ms))
      continue;
    delivered_.insert(o.t_ms);
    last_t_ = std::max(last_t_.value_or(0), o.t_ms);
    report.frames.push_back({ o.t_ms, std::move(*o.payload) });
  }
  if (!report.failed_frames.empty() && report.frames.empty())
    return fail(report.failed_frames.front().second, "no frame of the block verified");
  return report;
}

} // namespace cactus::viewer
