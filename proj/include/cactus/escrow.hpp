#pragma once

// Passphrase-locked recovery bundle kept on the camera.
//
// File layout: "CESC" || version u8 || kdf_id u8 || nonce (24) ||
// enc_owner_keypair || enc_key_material || camera_public_key, each field
// u32 big-endian length prefixed.

#include <string>

#include "cactus/identity.hpp"
#include "cactus/keytree.hpp"

namespace cactus::escrow {

inline constexpr uint8_t format_version = 1;
/// The passphrase is already a uniformly random 128-bit key; no stretching.
inline constexpr uint8_t kdf_none = 0;

class Passphrase
{
public:
  static Passphrase generate();
  /// Accepts the 32-character hex form, case-insensitive. Throws InvalidArgument.
  static Passphrase parse(std::string_view hex);

  std::string display() const;
  const ByteArray<16>& key() const { return key_; }

  ~Passphrase() { secure_zero(key_.data(), key_.size()); }
  Passphrase(const Passphrase&) = default;
  Passphrase& operator=(const Passphrase&) = default;

private:
  Passphrase() = default;
  ByteArray<16> key_{};
};

struct EscrowMaterial
{
  uint8_t version = format_version;
  uint8_t kdf_id = kdf_none;
  ByteArray<24> nonce{};
  Bytes enc_owner_keypair;
  Bytes enc_key_material;
  Bytes camera_public_key;

  Bytes serialize() const;
  static EscrowMaterial parse(ByteView data);

  /// PK_c, readable without any secret.
  PublicKeyBundle camera_public() const { return PublicKeyBundle::parse(camera_public_key); }

  friend bool operator==(const EscrowMaterial&, const EscrowMaterial&) = default;
};

struct Built
{
  EscrowMaterial material;
  Passphrase passphrase;
};

Built build_escrow(const DeviceKeys& owner, const keytree::KeyTree& tree, const PublicKeyBundle& camera_public);

/// Key material: the serialized tree frontier sealed to PK_o.
Bytes seal_key_material(const PublicKeyBundle& owner_public, const keytree::KeyTree& tree);
keytree::KeyTree open_key_material(const DeviceKeys& owner, ByteView sealed);

struct Opened
{
  DeviceKeys owner_keys;
  keytree::KeyTree tree;
  PublicKeyBundle camera_public;
};

/// Throws EscrowLocked when the passphrase does not open the owner keypair.
Opened open_escrow(const EscrowMaterial& material, const Passphrase& passphrase);

} // namespace cactus::escrow
