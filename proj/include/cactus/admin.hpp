#pragma once

// Owner -> camera control plane and the two device states it mutates.
//
// Request wire: tag u8 || ts u64 || body || sig_len u16 || sig, with
// body = has_range u8 [|| start u64 || end u64] || payload_len u32 || payload.
// The RSA-PSS signature by SK_o covers everything before sig_len. The key
// material payload is already sealed to PK_o, so requests travel in the clear.

#include <functional>
#include <optional>

#include "cactus/channel.hpp"
#include "cactus/escrow.hpp"
#include "cactus/identity.hpp"
#include "cactus/keytree.hpp"
#include "cactus/pairing.hpp"

namespace cactus::admin {

enum class RequestKind : uint8_t {
  delete_range = 1,
  factory_reset = 2,
  update_key_material = 3,
};

/// Requests must be within this distance of the camera clock and strictly
/// newer than the last accepted one.
inline constexpr uint64_t replay_window_ms = 120'000;

uint64_t system_clock_ms();

struct AdminRequest
{
  RequestKind kind = RequestKind::delete_range;
  std::optional<keytree::EpochRange> range;
  uint64_t timestamp_ms = 0;
  Bytes payload;
  Bytes signature;

  Bytes signed_part() const;
  Bytes serialize() const;
  static AdminRequest parse(ByteView data);

  static AdminRequest make(RequestKind kind,
                           std::optional<keytree::EpochRange> range,
                           uint64_t timestamp_ms,
                           Bytes payload,
                           const DeviceKeys& signer);
};

// Frame tags on the camera's admin channel.
enum class Tag : uint8_t {
  request = 0x20,
  result = 0x21,
  escrow_request = 0x22,
  escrow_material = 0x23,
};

/// Result frame body: status u8 (0 ok, otherwise ErrorCode + 1) || message.
channel::Frame result_frame(std::optional<ErrorCode> error, std::string_view message = {});
/// Throws the carried error, if any.
void check_result(const channel::Frame& frame);

class CameraDevice
{
public:
  explicit CameraDevice(DeviceKeys factory);

  /// Installs the outcome of a completed initialization pairing.
  void install(pairing::CameraOutcome outcome);

  bool initialized() const { return state_.has_value(); }
  const DeviceKeys& factory_keys() const { return factory_; }
  const DeviceKeys& camera_keys() const;
  const PublicKeyBundle& owner_public() const;
  const keytree::KeyTree& tree() const;
  const escrow::EscrowMaterial& escrow() const;
  const std::string& wifi_credentials() const;
  std::optional<uint64_t> last_request_ms() const;

  /// Rotation: forgets every epoch before `epoch`.
  void advance_to(uint64_t epoch);

  /// Timestamp of the newest frame handed to storage; a restarted camera
  /// resumes strictly after it.
  void record_frame(uint64_t t_ms);
  std::optional<uint64_t> last_frame_ms() const { return state_ ? state_->last_frame_ms : std::nullopt; }

  /// Verifies and performs one request. Throws Rejected, ReplayRejected,
  /// NotInitialized or, for a reset of an uninitialized camera, AlreadyReset.
  void apply(const AdminRequest& request, uint64_t now_ms);

  /// Serves one admin-channel message: escrow fetch (no authentication) or
  /// an admin request. Always answers; failures go into the result frame.
  channel::Frame handle(const channel::Frame& frame, uint64_t now_ms);

  Bytes serialize() const;
  static CameraDevice parse(ByteView data);

private:
  struct State
  {
    DeviceKeys camera_keys;
    PublicKeyBundle owner_public;
    keytree::KeyTree tree;
    escrow::EscrowMaterial escrow;
    std::string wifi;
    std::optional<uint64_t> last_request_ms;
    std::optional<uint64_t> last_frame_ms;
  };

  const State& state() const;

  DeviceKeys factory_;
  std::optional<State> state_;
};

class OwnerDevice
{
public:
  static OwnerDevice from_pairing(const pairing::OwnerOutcome& outcome);
  /// Restores owner state from the camera's escrow. Throws EscrowLocked.
  static OwnerDevice recover(const escrow::EscrowMaterial& material, const escrow::Passphrase& passphrase);

  bool paired() const { return camera_public_.has_value(); }
  const DeviceKeys& keys() const { return keys_; }
  const PublicKeyBundle& camera_public() const;
  const keytree::KeyTree& tree() const { return tree_; }

  /// Punctures the local tree and returns the signed request carrying the
  /// refreshed key material.
  AdminRequest delete_videos(const keytree::EpochRange& range, uint64_t now_ms);
  AdminRequest update_key_material(uint64_t now_ms) const;
  /// Builds the request, then drops the local tree and camera association.
  AdminRequest factory_reset(uint64_t now_ms);

  /// Minimal cover to hand a delegatee.
  std::vector<keytree::NodeKey> grant(const keytree::EpochRange& range) const { return tree_.minimal_cover(range); }

  Bytes serialize() const;
  static OwnerDevice parse(ByteView data);

private:
  OwnerDevice(DeviceKeys keys, std::optional<PublicKeyBundle> camera_public, keytree::KeyTree tree)
    : keys_(std::move(keys))
    , camera_public_(std::move(camera_public))
    , tree_(std::move(tree))
  {
  }

  DeviceKeys keys_;
  std::optional<PublicKeyBundle> camera_public_;
  keytree::KeyTree tree_;
};

/// Viewing rights handed to a delegatee: the camera's public key and the
/// granted subtree. Owners can export one for themselves.
struct Grant
{
  PublicKeyBundle camera_public;
  keytree::KeyTree tree;

  Bytes serialize() const;
  static Grant parse(ByteView data);
};

/// Asks the camera for its escrow. Needs no credentials.
escrow::EscrowMaterial fetch_escrow(channel::FdChannel& channel);

/// Fetches the escrow over an admin channel and opens it.
OwnerDevice recover_over(channel::FdChannel& channel, const escrow::Passphrase& passphrase);

} // namespace cactus::admin
