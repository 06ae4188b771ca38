#pragma once

// Seeing-Is-Believing pairing, as message-driven state machines.
//
// Both protocols share steps 1-5. The "anchor" is the side whose key hash is
// shown first (camera during initialization, owner during delegation); the
// "joiner" is the other side.
//
//   1  anchor shows SHA-256(PK_a) on the visual channel
//   2  anchor -> joiner  ANCHOR_KEY(PK_a)              joiner checks the hash
//   3  joiner -> anchor  JOINER_KEY(PK_j), then shows SHA-256(PK_j)
//   4  anchor checks the scanned hash against PK_j
//   5  joiner -> NONCE(n_j); anchor -> NONCE(n_a);
//      joiner -> PROOF(HMAC(ss, n_a || label_j2a)); anchor verifies
//      anchor -> PROOF(HMAC(ss, n_j || label_a2j)); joiner verifies
//   6  init: camera -> owner  seal_signed(PK_o, SK_f, PK_c)
//      delegation: owner -> delegatee  seal_signed(PK_d, SK_o, PK_c || grant)
//   7  init: owner -> camera  seal_signed(PK_c, SK_o, InitSecrets)
//   the receiver of the last sealed message answers ACK(HMAC(ss, "ack" || H(transcript)))
//
// ss = HKDF(X25519(own, peer)). Every abort wipes the session's secrets and
// raises PairingAborted with detail = step.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cactus/channel.hpp"
#include "cactus/escrow.hpp"
#include "cactus/identity.hpp"
#include "cactus/keytree.hpp"

namespace cactus::pairing {

using channel::Frame;

enum class Tag : uint8_t {
  anchor_key = 1,
  joiner_key = 2,
  joiner_nonce = 3,
  anchor_nonce = 4,
  joiner_proof = 5,
  anchor_proof = 6,
  camera_key = 7,
  init_secrets = 8,
  grant = 9,
  ack = 10,
};

inline Frame make_frame(Tag tag, Bytes body)
{
  return { static_cast<uint8_t>(tag), std::move(body) };
}

enum class Protocol { initialization, delegation };
enum class Side { anchor, joiner };
enum class Role { camera, owner, delegator, delegatee };

inline Side other(Side s)
{
  return s == Side::anchor ? Side::joiner : Side::anchor;
}

struct VisualPayload
{
  ByteArray<32> hash{};

  static VisualPayload of(const PublicKeyBundle& key) { return { key.fingerprint() }; }
  /// Lowercase hex, the .vch text form.
  std::string to_text() const { return to_hex(hash); }
  /// Accepts 32 raw bytes or 64 hex characters (surrounding whitespace ignored).
  static VisualPayload parse(ByteView data);

  friend bool operator==(const VisualPayload&, const VisualPayload&) = default;
};

/// One device's view of the visual channel: it can show a payload to the
/// peer and scan what the peer shows.
class VisualLink
{
public:
  virtual ~VisualLink() = default;
  virtual void show(const VisualPayload& payload) = 0;
  virtual std::optional<VisualPayload> scan() = 0;
};

/// In-process visual channel: one mailbox per direction.
class VisualChannel
{
public:
  VisualChannel() = default;
  VisualChannel(const VisualChannel&) = delete;
  VisualChannel& operator=(const VisualChannel&) = delete;

  VisualLink& link(Side side) { return side == Side::anchor ? anchor_ : joiner_; }

private:
  class Link final : public VisualLink
  {
  public:
    Link(std::optional<VisualPayload>& out, std::optional<VisualPayload>& in)
      : out_(&out)
      , in_(&in)
    {
    }
    void show(const VisualPayload& payload) override { *out_ = payload; }
    std::optional<VisualPayload> scan() override { return *in_; }

  private:
    std::optional<VisualPayload>* out_;
    std::optional<VisualPayload>* in_;
  };

  std::optional<VisualPayload> to_joiner_;
  std::optional<VisualPayload> to_anchor_;
  Link anchor_{ to_joiner_, to_anchor_ };
  Link joiner_{ to_anchor_, to_joiner_ };
};

/// Visual link backed by two .vch files, for pairing across processes.
class FileVisualLink final : public VisualLink
{
public:
  FileVisualLink(std::string show_path, std::string scan_path)
    : show_path_(std::move(show_path))
    , scan_path_(std::move(scan_path))
  {
  }
  void show(const VisualPayload& payload) override;
  std::optional<VisualPayload> scan() override;

private:
  std::string show_path_;
  std::string scan_path_;
};

/// Secrets the owner hands the camera at step 7. The tree parameters ride
/// along so both sides agree on epochs.
struct InitSecrets
{
  std::string wifi_credentials;
  SecretKey seed;
  keytree::TreeParams params;
  Bytes escrow_blob;

  Bytes serialize() const;
  static InitSecrets parse(ByteView data);
};

struct Options
{
  /// Test-only switch for demonstrating that the visual checks are needed.
  bool check_visual = true;
};

struct CameraSetup
{
  const DeviceKeys* factory_keys = nullptr;
  /// (SK_c, PK_c); generated at step 6 when absent.
  std::optional<DeviceKeys> camera_keys;
};

struct OwnerSetup
{
  /// (SK_o, PK_o); generated at step 3 when absent.
  std::optional<DeviceKeys> owner_keys;
  std::string wifi_credentials;
  keytree::TreeParams params;
  /// Fresh random seed when absent.
  std::optional<SecretKey> seed;
};

struct DelegatorSetup
{
  const DeviceKeys* owner_keys = nullptr;
  keytree::TreeParams params;
  std::vector<keytree::NodeKey> grant;
  /// PK_c travels with the grant so the delegatee can verify blocks.
  std::optional<PublicKeyBundle> camera_public;
};

struct DelegateeSetup
{
  std::optional<DeviceKeys> keys;
};

struct CameraOutcome
{
  DeviceKeys camera_keys;
  PublicKeyBundle owner_public;
  InitSecrets secrets;
};

struct OwnerOutcome
{
  DeviceKeys owner_keys;
  PublicKeyBundle factory_public;
  PublicKeyBundle camera_public;
  InitSecrets secrets;
  escrow::Passphrase passphrase;
};

struct DelegateeOutcome
{
  DeviceKeys keys;
  PublicKeyBundle delegator_public;
  keytree::KeyTree grant;
  std::optional<PublicKeyBundle> camera_public;
};

struct DelegatorOutcome
{
  PublicKeyBundle delegatee_public;
};

/// Role labels bound into the step-5 proofs.
std::string_view proof_label(Protocol protocol, Side from);

/// Step-5 shared secret as `own_side` computes it.
SecretKey shared_secret(Protocol protocol,
                        Side own_side,
                        const crypto::X25519Key& own,
                        const ByteArray<32>& anchor_dh_public,
                        const ByteArray<32>& joiner_dh_public);

ByteArray<32> knowledge_proof(const SecretKey& ss, ByteView nonce, std::string_view label);

class Session
{
public:
  static std::unique_ptr<Session> camera(CameraSetup setup, VisualLink& visual, Options options = {});
  static std::unique_ptr<Session> owner(OwnerSetup setup, VisualLink& visual, Options options = {});
  static std::unique_ptr<Session> delegator(DelegatorSetup setup, VisualLink& visual, Options options = {});
  static std::unique_ptr<Session> delegatee(DelegateeSetup setup, VisualLink& visual, Options options = {});

  ~Session();

  Role role() const { return role_; }
  Side side() const;
  Protocol protocol() const;

  /// Step 1 and the anchor's opening message. Joiners return nothing.
  std::vector<Frame> start();
  /// Consumes one message and returns the replies. Throws PairingAborted.
  std::vector<Frame> handle(const Frame& frame);

  bool complete() const { return state_ == State::done; }
  bool aborted() const { return state_ == State::aborted; }
  std::optional<unsigned> abort_step() const { return abort_step_; }
  /// Step the session is currently waiting in.
  unsigned step() const;

  /// Aborts from outside, e.g. when the peer hangs up. Always throws.
  [[noreturn]] void cancel(const std::string& why) { abort(step(), why); }

  /// Every message sent or received, framed, in protocol order.
  const Bytes& transcript() const { return transcript_; }

  /// All secret bytes the session currently holds; empty after an abort.
  Bytes secret_material() const;

  /// Available once complete(); throw InvalidArgument otherwise.
  const CameraOutcome& camera_outcome() const;
  const OwnerOutcome& owner_outcome() const;
  const DelegateeOutcome& delegatee_outcome() const;
  const DelegatorOutcome& delegator_outcome() const;

  /// Extracts the outcome, leaving the session empty.
  CameraOutcome take_camera_outcome();
  OwnerOutcome take_owner_outcome();
  DelegateeOutcome take_delegatee_outcome();

private:
  enum class State {
    idle,
    await_anchor_key,
    await_joiner_key,
    await_joiner_nonce,
    await_anchor_nonce,
    await_joiner_proof,
    await_anchor_proof,
    await_step6,
    await_step7,
    await_ack,
    done,
    aborted,
  };

  struct Data;

  Session(Role role, VisualLink& visual, Options options);

  [[noreturn]] void abort(unsigned step, const std::string& why);
  std::vector<Frame> dispatch(const Frame& frame);
  std::vector<Frame> send(std::vector<Frame> frames);
  void record(const Frame& frame);
  const DeviceKeys& identity();
  ByteArray<32> ack_tag(size_t transcript_length) const;

  std::vector<Frame> on_anchor_key(const Frame& frame);
  std::vector<Frame> on_joiner_key(const Frame& frame);
  std::vector<Frame> on_joiner_nonce(const Frame& frame);
  std::vector<Frame> on_anchor_nonce(const Frame& frame);
  std::vector<Frame> on_joiner_proof(const Frame& frame);
  std::vector<Frame> on_anchor_proof(const Frame& frame);
  std::vector<Frame> on_step6(const Frame& frame);
  std::vector<Frame> on_step7(const Frame& frame);
  std::vector<Frame> on_ack(const Frame& frame);

  Role role_;
  VisualLink* visual_;
  Options options_;
  State state_ = State::idle;
  std::optional<unsigned> abort_step_;
  Bytes transcript_;
  std::unique_ptr<Data> d_;
};

/// Interposes on the insecure channel. Deliveries name the receiving side.
class Adversary
{
public:
  struct Delivery
  {
    Side to;
    Frame frame;
  };

  virtual ~Adversary() = default;
  /// Messages the adversary originates before anything is sent.
  virtual std::vector<Delivery> begin() { return {}; }
  /// Default behavior forwards untouched.
  virtual std::vector<Delivery> intercept(Side from, const Frame& frame) { return { { other(from), frame } }; }
};

struct RunResult
{
  bool anchor_complete = false;
  bool joiner_complete = false;
  std::optional<unsigned> anchor_abort;
  std::optional<unsigned> joiner_abort;
  size_t delivered = 0;
};

/// Pumps messages between two sessions until neither can make progress.
RunResult run(Session& anchor, Session& joiner, Adversary* adversary = nullptr);

/// Drives one session over a framed byte stream. Throws PairingAborted on
/// abort or when the peer hangs up early. An adversary here sees both
/// directions of this end of the stream.
void run_over(Session& session, channel::FdChannel& channel, Adversary* adversary = nullptr);

} // namespace cactus::pairing
