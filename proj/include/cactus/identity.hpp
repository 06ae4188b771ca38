#pragma once

#include "cactus/crypto.hpp"

namespace cactus {

/// Public half of a device identity. The RSA key carries the authenticated
/// transport of the pairing and admin protocols, the X25519 key the
/// Diffie-Hellman knowledge proof and escrow sealing, and the Ed25519 key
/// block signatures.
struct PublicKeyBundle
{
  Bytes rsa_spki;
  ByteArray<32> x25519{};
  ByteArray<32> ed25519{};

  Bytes serialize() const;
  static PublicKeyBundle parse(ByteView data);

  /// SHA-256 of the serialized bundle; what the visual channel carries.
  crypto::Digest fingerprint() const;

  friend bool operator==(const PublicKeyBundle&, const PublicKeyBundle&) = default;
};

/// A device's asymmetric key set: (SK_f, PK_f), (SK_o, PK_o), (SK_c, PK_c)
/// and (SK_d, PK_d) are all instances of this.
class DeviceKeys
{
public:
  static DeviceKeys generate(unsigned rsa_bits = crypto::RsaKey::default_bits);

  const crypto::RsaKey& rsa() const { return rsa_; }
  const crypto::X25519Key& dh() const { return dh_; }
  const crypto::Ed25519Key& signer() const { return signer_; }

  PublicKeyBundle public_bundle() const;

  /// Private serialization. Callers own wiping the returned buffer.
  Bytes serialize_private() const;
  static DeviceKeys parse_private(ByteView data);

private:
  crypto::RsaKey rsa_;
  crypto::X25519Key dh_;
  crypto::Ed25519Key signer_;
};

/// Sign-then-encrypt: PSS signature by `sender` over `message`, placed inside
/// an AES-256-GCM body whose key is RSA-OAEP wrapped to `recipient`.
/// `context` is a domain label bound into the signature.
Bytes seal_signed(const PublicKeyBundle& recipient,
                  const DeviceKeys& sender,
                  std::string_view context,
                  ByteView message);

/// Inverse of seal_signed. Throws DecryptionFailure when the envelope does not
/// open and AuthenticityFailure when the inner signature does not verify.
Bytes open_signed(const DeviceKeys& recipient,
                  const PublicKeyBundle& sender,
                  std::string_view context,
                  ByteView sealed);

/// Anonymous hybrid sealing to the recipient's X25519 key: ephemeral DH,
/// HKDF, AES-256-GCM. Output: ephemeral public (32) || nonce (12) || ct.
Bytes seal_to(const PublicKeyBundle& recipient, std::string_view context, ByteView message);
Bytes open_sealed(const DeviceKeys& recipient, std::string_view context, ByteView sealed);

} // namespace cactus
