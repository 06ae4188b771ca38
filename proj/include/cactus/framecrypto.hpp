#pragma once

// Frame encryption, block signing and the per-frame one-time-signature chain.
//
// Per frame i at time t_i with epoch key k_i:
//   C_i = AES-256-GCM(k_i, IV_i, F_i)          (IV_i: 16 random bytes, used whole)
//   h_i = HMAC-SHA-256(k_i, C_i || IV_i || t_i) (t_i as u64 big-endian ms)
// Per block: sigma = Sign(SK_c, h_1 || ... || h_N).
// One-time chain: h_i also covers PK_{i+1}, and sigma_i is made with SK_i
// (SK_c for the first frame).

#include <deque>
#include <memory>
#include <optional>
#include <vector>

#include "cactus/bytes.hpp"
#include "cactus/crypto.hpp"
#include "cactus/keytree.hpp"

namespace cactus {
class DeviceKeys;
}

namespace cactus::framecrypto {

inline constexpr size_t iv_size = 16;
inline constexpr size_t mac_size = 32;
inline constexpr size_t max_payload_bytes = size_t{ 8 } << 20;
inline constexpr size_t max_block_frames = 1024;
inline constexpr size_t default_block_frames = 10;

struct PlainFrame
{
  uint64_t t_ms = 0;
  Bytes payload;

  friend bool operator==(const PlainFrame&, const PlainFrame&) = default;
};

struct FrameRecord
{
  uint64_t t_ms = 0;
  ByteArray<iv_size> iv{};
  Bytes ciphertext;
  ByteArray<mac_size> mac{};

  void write(Writer& w) const;
  static FrameRecord read(Reader& r);

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct BlockManifest
{
  ByteArray<32> camera_id{};
  uint64_t first_epoch = 0;
  std::vector<FrameRecord> frames;
  Bytes signature;

  Bytes serialize() const;
  static BlockManifest parse(ByteView data);

  friend bool operator==(const BlockManifest&, const BlockManifest&) = default;
};

struct OtsFrame
{
  uint64_t t_ms = 0;
  ByteArray<iv_size> iv{};
  Bytes ciphertext;
  Bytes next_public_key;
  Bytes signature;

  Bytes serialize() const;
  static OtsFrame parse(ByteView data);

  friend bool operator==(const OtsFrame&, const OtsFrame&) = default;
};

/// Abstract signature scheme, so the block and one-time signers can be
/// swapped without touching the frame pipeline.
class Signer
{
public:
  virtual ~Signer() = default;
  virtual Bytes sign(ByteView message) const = 0;
  virtual Bytes public_key() const = 0;
};

class Verifier
{
public:
  virtual ~Verifier() = default;
  virtual bool verify(ByteView public_key, ByteView message, ByteView signature) const = 0;
};

class Ed25519Signer final : public Signer
{
public:
  Ed25519Signer()
    : key_(crypto::Ed25519Key::generate())
  {
  }
  explicit Ed25519Signer(crypto::Ed25519Key key)
    : key_(std::move(key))
  {
  }

  Bytes sign(ByteView message) const override { return key_.sign(message); }
  Bytes public_key() const override
  {
    auto pk = key_.public_key();
    return { pk.begin(), pk.end() };
  }

private:
  crypto::Ed25519Key key_;
};

class Ed25519Verifier final : public Verifier
{
public:
  bool verify(ByteView public_key, ByteView message, ByteView signature) const override
  {
    return crypto::ed25519_verify(public_key, message, signature);
  }
};

const Verifier& default_verifier();

/// (SK_c, PK_c) as used for block signatures.
class CameraIdentity
{
public:
  explicit CameraIdentity(std::shared_ptr<const Signer> signer);
  static CameraIdentity from_device_keys(const DeviceKeys& keys);

  const Signer& signer() const { return *signer_; }
  Bytes public_key() const { return signer_->public_key(); }
  const ByteArray<32>& camera_id() const { return camera_id_; }

private:
  std::shared_ptr<const Signer> signer_;
  ByteArray<32> camera_id_{};
};

/// Camera identifier carried in manifests: SHA-256 of the signing public key.
ByteArray<32> camera_id_of(ByteView signing_public_key);

// Building blocks, exposed for the staged pipeline and the benchmark.

Bytes seal_payload(const SecretKey& key, const ByteArray<iv_size>& iv, ByteView payload);
std::optional<Bytes> open_payload(const SecretKey& key, const ByteArray<iv_size>& iv, ByteView ciphertext);
ByteArray<mac_size> frame_mac(const SecretKey& key,
                              ByteView ciphertext,
                              const ByteArray<iv_size>& iv,
                              uint64_t t_ms,
                              ByteView next_public_key = {});
Bytes block_signing_input(const std::vector<FrameRecord>& frames);

/// Caches the current epoch key so per-frame extraction is a lookup except
/// at epoch boundaries.
class EpochKeyCache
{
public:
  explicit EpochKeyCache(const keytree::KeyTree& tree)
    : tree_(&tree)
  {
  }

  const SecretKey& key_for_time(uint64_t t_ms);
  void reset() { epoch_.reset(); key_.wipe(); }

private:
  const keytree::KeyTree* tree_;
  std::optional<uint64_t> epoch_;
  SecretKey key_;
};

/// Encrypts, MACs and signs one block. Throws KeyUnavailable, OrderingViolation
/// or InvalidArgument.
BlockManifest encrypt_block(const std::vector<PlainFrame>& frames,
                            const keytree::KeyTree& tree,
                            const CameraIdentity& camera);

/// Per-frame result of opening a block whose signature already checked out.
struct FrameOutcome
{
  uint64_t t_ms = 0;
  std::optional<Bytes> payload;
  std::optional<ErrorCode> error;
};

/// Verifies the block signature (before any key use or decryption), then
/// handles each frame independently: frames whose epoch key is missing are
/// reported KeyUnavailable, the rest are MAC-checked and decrypted. Throws
/// only for block-level failures (AuthenticityFailure, IntegrityFailure on
/// structure).
std::vector<FrameOutcome> open_block(const BlockManifest& block,
                                     const keytree::KeyTree& tree,
                                     ByteView camera_public_key,
                                     const Verifier& verifier = default_verifier());

/// Strict variant: every frame must open. Throws AuthenticityFailure,
/// IntegrityFailure(index), DecryptionFailure(index) or KeyUnavailable.
std::vector<PlainFrame> verify_decrypt_block(const BlockManifest& block,
                                             const keytree::KeyTree& tree,
                                             ByteView camera_public_key,
                                             const Verifier& verifier = default_verifier());

/// Source of one-time signing keys. Keeps a pre-generated reserve so frame
/// emission does not wait on key generation.
class OneTimeKeyPool
{
public:
  explicit OneTimeKeyPool(size_t reserve = 16);
  std::unique_ptr<Signer> take();
  size_t available() const { return pool_.size(); }

private:
  void refill();

  size_t reserve_;
  std::deque<std::unique_ptr<Signer>> pool_;
};

/// Incremental signer for the one-time-signature stream. Frame i is emitted
/// before frame i+1 exists. Holds references to `tree` and `camera`.
class OtsStreamSigner
{
public:
  OtsStreamSigner(const keytree::KeyTree& tree, const CameraIdentity& camera, size_t key_reserve = 16);

  OtsFrame push(const PlainFrame& frame);
  size_t emitted() const { return emitted_; }

private:
  EpochKeyCache keys_;
  const CameraIdentity* camera_;
  OneTimeKeyPool pool_;
  std::unique_ptr<Signer> current_;
  std::optional<uint64_t> last_t_;
  size_t emitted_ = 0;
};

/// Incremental verifier. The first frame verifies under PK_c, each later one
/// under the key carried by its predecessor; a mismatch there is reported as
/// ChainBroken. After the first failure every later frame yields ChainBroken.
class OtsStreamVerifier
{
public:
  OtsStreamVerifier(const keytree::KeyTree& tree,
                    ByteView camera_public_key,
                    const Verifier& verifier = default_verifier());

  PlainFrame next(const OtsFrame& frame);
  bool broken() const { return broken_; }
  size_t verified() const { return verified_; }

private:
  const keytree::KeyTree* tree_;
  const Verifier* verifier_;
  Bytes expected_key_;
  std::optional<uint64_t> last_t_;
  bool broken_ = false;
  size_t verified_ = 0;
};

} // namespace cactus::framecrypto
