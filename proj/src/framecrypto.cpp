#include "cactus/framecrypto.hpp"

#include "cactus/identity.hpp"

namespace cactus::framecrypto {

namespace {

void write_frame_body(Writer& w, uint64_t t_ms, const ByteArray<iv_size>& iv, ByteView ciphertext)
{
  w.u64(t_ms).raw(iv).bytes32(ciphertext);
}

void check_payload(const PlainFrame& frame)
{
  if (frame.payload.empty() || frame.payload.size() > max_payload_bytes)
    throw Error(ErrorCode::InvalidArgument, "frame payload must be 1 byte to 8 MiB");
}

} // namespace

void FrameRecord::write(Writer& w) const
{
  w.raw("CFR1");
  write_frame_body(w, t_ms, iv, ciphertext);
  w.raw(mac);
}

FrameRecord FrameRecord::read(Reader& r)
{
  r.expect_magic("CFR1");
  FrameRecord f;
  f.t_ms = r.u64();
  f.iv = r.array<iv_size>();
  f.ciphertext = r.bytes32();
  f.mac = r.array<mac_size>();
  return f;
}

Bytes BlockManifest::serialize() const
{
  Writer w;
  w.raw("CBM1").raw(camera_id).u64(first_epoch).u32(static_cast<uint32_t>(frames.size()));
  for (const auto& f : frames)
    f.write(w);
  w.bytes16(signature);
  return w.take();
}

BlockManifest BlockManifest::parse(ByteView data)
{
  Reader r(data);
  r.expect_magic("CBM1");
  BlockManifest b;
  b.camera_id = r.array<32>();
  b.first_epoch = r.u64();
  uint32_t count = r.u32();
  if (count == 0 || count > max_block_frames)
    throw Error(ErrorCode::Malformed, "frame count out of range");
  b.frames.reserve(count);
  for (uint32_t i = 0; i < count; ++i)
    b.frames.push_back(FrameRecord::read(r));
  b.signature = r.bytes16();
  r.expect_done();
  return b;
}

Bytes OtsFrame::serialize() const
{
  Writer w;
  w.raw("COF1");
  write_frame_body(w, t_ms, iv, ciphertext);
  w.bytes16(next_public_key).bytes16(signature);
  return w.take();
}

OtsFrame OtsFrame::parse(ByteView data)
{
  Reader r(data);
  r.expect_magic("COF1");
  OtsFrame f;
  f.t_ms = r.u64();
  f.iv = r.array<iv_size>();
  f.ciphertext = r.bytes32();
  f.next_public_key = r.bytes16();
  f.signature = r.bytes16();
  r.expect_done();
  return f;
}

const Verifier& default_verifier()
{
  static const Ed25519Verifier verifier;
  return verifier;
}

ByteArray<32> camera_id_of(ByteView signing_public_key)
{
  return crypto::sha256(signing_public_key);
}

CameraIdentity::CameraIdentity(std::shared_ptr<const Signer> signer)
  : signer_(std::move(signer))
{
  if (!signer_)
    throw Error(ErrorCode::InvalidArgument, "camera identity needs a signer");
  camera_id_ = camera_id_of(signer_->public_key());
}

CameraIdentity CameraIdentity::from_device_keys(const DeviceKeys& keys)
{
  return CameraIdentity(std::make_shared<Ed25519Signer>(keys.signer()));
}

Bytes seal_payload(const SecretKey& key, const ByteArray<iv_size>& iv, ByteView payload)
{
  return crypto::aes_gcm_seal(key.view(), iv, payload);
}

std::optional<Bytes> open_payload(const SecretKey& key, const ByteArray<iv_size>& iv, ByteView ciphertext)
{
  return crypto::aes_gcm_open(key.view(), iv, ciphertext);
}

ByteArray<mac_size> frame_mac(const SecretKey& key,
                              ByteView ciphertext,
                              const ByteArray<iv_size>& iv,
                              uint64_t t_ms,
                              ByteView next_public_key)
{
  Writer t;
  t.u64(t_ms);
  crypto::HmacSha256 mac(key.view());
  mac.update(ciphertext).update(iv).update(t.data());
  if (!next_public_key.empty())
    mac.update(next_public_key);
  return mac.finish();
}

Bytes block_signing_input(const std::vector<FrameRecord>& frames)
{
  Bytes out;
  out.reserve(frames.size() * mac_size);
  for (const auto& f : frames)
    out.insert(out.end(), f.mac.begin(), f.mac.end());
  return out;
}

const SecretKey& EpochKeyCache::key_for_time(uint64_t t_ms)
{
  uint64_t epoch = keytree::epoch_of(t_ms, tree_->params());
  if (epoch_ != epoch) {
    epoch_.reset();
    key_ = tree_->key_for_epoch(epoch);
    epoch_ = epoch;
  }
  return key_;
}

BlockManifest encrypt_block(const std::vector<PlainFrame>& frames,
                            const keytree::KeyTree& tree,
                            const CameraIdentity& camera)
{
  if (frames.empty() || frames.size() > max_block_frames)
    throw Error(ErrorCode::InvalidArgument, "a block holds 1 to 1024 frames");
  for (size_t i = 0; i < frames.size(); ++i) {
    check_payload(frames[i]);
    if (i > 0 && frames[i].t_ms <= frames[i - 1].t_ms)
      throw Error(ErrorCode::OrderingViolation, "frame timestamps must strictly increase", i);
  }

  BlockManifest block;
  block.camera_id = camera.camera_id();
  block.first_epoch = keytree::epoch_of(frames.front().t_ms, tree.params());
  block.frames.reserve(frames.size());

  EpochKeyCache keys(tree);
  for (const auto& frame : frames) {
    const SecretKey& k = keys.key_for_time(frame.t_ms);
    FrameRecord rec;
    rec.t_ms = frame.t_ms;
    rec.iv = crypto::random_array<iv_size>();
    rec.ciphertext = seal_payload(k, rec.iv, frame.payload);
    rec.mac = frame_mac(k, rec.ciphertext, rec.iv, rec.t_ms);
    block.frames.push_back(std::move(rec));
  }
  block.signature = camera.signer().sign(block_signing_input(block.frames));
  return block;
}

std::vector<FrameOutcome> open_block(const BlockManifest& block,
                                     const keytree::KeyTree& tree,
                                     ByteView camera_public_key,
                                     const Verifier& verifier)
{
  if (block.frames.empty() || block.frames.size() > max_block_frames)
    throw Error(ErrorCode::IntegrityFailure, "frame count out of range");
  if (!constant_time_equal(block.camera_id, camera_id_of(camera_public_key)))
    throw Error(ErrorCode::AuthenticityFailure, "block is not from this camera");
  if (!verifier.verify(camera_public_key, block_signing_input(block.frames), block.signature))
    throw Error(ErrorCode::AuthenticityFailure, "block signature does not verify");

  // The signature only covers the MACs; timestamps and the epoch header are
  // bound through them and checked here.
  for (size_t i = 0; i < block.frames.size(); ++i) {
    const auto& f = block.frames[i];
    if (i > 0 && f.t_ms <= block.frames[i - 1].t_ms)
      throw Error(ErrorCode::IntegrityFailure, "frame timestamps out of order", i);
    try {
      uint64_t epoch = keytree::epoch_of(f.t_ms, tree.params());
      if (i == 0 && epoch != block.first_epoch)
        throw Error(ErrorCode::IntegrityFailure, "first epoch does not match first frame", 0);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::IntegrityFailure)
        throw;
      throw Error(ErrorCode::IntegrityFailure, "frame timestamp outside the tree lifespan", i);
    }
  }

  std::vector<FrameOutcome> out;
  out.reserve(block.frames.size());
  for (size_t i = 0; i < block.frames.size(); ++i) {
    const auto& f = block.frames[i];
    FrameOutcome o;
    o.t_ms = f.t_ms;
    uint64_t epoch = keytree::epoch_of(f.t_ms, tree.params());
    if (!tree.available(epoch)) {
      o.error = ErrorCode::KeyUnavailable;
      out.push_back(std::move(o));
      continue;
    }
    SecretKey k = tree.key_for_epoch(epoch);
    if (!constant_time_equal(frame_mac(k, f.ciphertext, f.iv, f.t_ms), f.mac)) {
      o.error = ErrorCode::IntegrityFailure;
    } else if (auto plain = open_payload(k, f.iv, f.ciphertext)) {
      o.payload = std::move(*plain);
    } else {
      o.error = ErrorCode::DecryptionFailure;
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<PlainFrame> verify_decrypt_block(const BlockManifest& block,
                                             const keytree::KeyTree& tree,
                                             ByteView camera_public_key,
                                             const Verifier& verifier)
{
  auto outcomes = open_block(block, tree, camera_public_key, verifier);
  std::vector<PlainFrame> frames;
  frames.reserve(outcomes.size());
  for (size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    if (o.error) {
      if (*o.error == ErrorCode::KeyUnavailable) {
        uint64_t epoch = keytree::epoch_of(o.t_ms, tree.params());
        throw Error(ErrorCode::KeyUnavailable, "no key for epoch " + std::to_string(epoch), epoch);
      }
      throw Error(*o.error, "frame " + std::to_string(i) + " failed", i);
    }
    frames.push_back({ o.t_ms, std::move(*o.payload) });
  }
  return frames;
}

OneTimeKeyPool::OneTimeKeyPool(size_t reserve)
  : reserve_(reserve == 0 ? 1 : reserve)
{
  refill();
}

void OneTimeKeyPool::refill()
{
  while (pool_.size() < reserve_)
    pool_.push_back(std::make_unique<Ed25519Signer>());
}

std::unique_ptr<Signer> OneTimeKeyPool::take()
{
  if (pool_.empty())
    refill();
  auto out = std::move(pool_.front());
  pool_.pop_front();
  // Top up in batches once half the reserve is spent.
  if (pool_.size() < reserve_ / 2)
    refill();
  return out;
}

OtsStreamSigner::OtsStreamSigner(const keytree::KeyTree& tree, const CameraIdentity& camera, size_t key_reserve)
  : keys_(tree)
  , camera_(&camera)
  , pool_(key_reserve)
{
}

OtsFrame OtsStreamSigner::push(const PlainFrame& frame)
{
  check_payload(frame);
  if (last_t_ && frame.t_ms <= *last_t_)
    throw Error(ErrorCode::OrderingViolation, "frame timestamps must strictly increase", emitted_);

  const SecretKey& k = keys_.key_for_time(frame.t_ms);
  auto next = pool_.take();

  OtsFrame out;
  out.t_ms = frame.t_ms;
  out.iv = crypto::random_array<iv_size>();
  out.ciphertext = seal_payload(k, out.iv, frame.payload);
  out.next_public_key = next->public_key();
  auto h = frame_mac(k, out.ciphertext, out.iv, out.t_ms, out.next_public_key);
  out.signature = current_ ? current_->sign(h) : camera_->signer().sign(h);

  current_ = std::move(next);
  last_t_ = frame.t_ms;
  ++emitted_;
  return out;
}

OtsStreamVerifier::OtsStreamVerifier(const keytree::KeyTree& tree,
                                     ByteView camera_public_key,
                                     const Verifier& verifier)
  : tree_(&tree)
  , verifier_(&verifier)
  , expected_key_(camera_public_key.begin(), camera_public_key.end())
{
}

PlainFrame OtsStreamVerifier::next(const OtsFrame& frame)
{
  if (broken_)
    throw Error(ErrorCode::ChainBroken, "signature chain already broken", verified_);

  auto fail = [&](ErrorCode code, const char* what) -> Error {
    broken_ = true;
    return Error(code, what, verified_);
  };

  if (last_t_ && frame.t_ms <= *last_t_)
    throw fail(ErrorCode::IntegrityFailure, "frame timestamps out of order");

  SecretKey k;
  try {
    k = tree_->key_for_time(frame.t_ms);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::KeyUnavailable)
      throw fail(ErrorCode::KeyUnavailable, "no key for this frame's epoch");
    throw fail(ErrorCode::IntegrityFailure, "frame timestamp outside the tree lifespan");
  }

  auto h = frame_mac(k, frame.ciphertext, frame.iv, frame.t_ms, frame.next_public_key);
  // Past the first frame a dropped frame and a forged one look the same: the
  // signature does not match the carried key. Both sever the chain.
  if (!verifier_->verify(expected_key_, h, frame.signature)) {
    if (verified_ == 0)
      throw fail(ErrorCode::AuthenticityFailure, "first frame does not verify under the camera key");
    throw fail(ErrorCode::ChainBroken, "frame does not verify under the key carried by its predecessor");
  }

  auto plain = open_payload(k, frame.iv, frame.ciphertext);
  if (!plain)
    throw fail(ErrorCode::DecryptionFailure, "frame does not decrypt");

  expected_key_ = frame.next_public_key;
  last_t_ = frame.t_ms;
  ++verified_;
  return { frame.t_ms, std::move(*plain) };
}

} // namespace cactus::framecrypto
