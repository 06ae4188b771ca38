#pragma once

// Thin RAII layer over OpenSSL libcrypto. Everything above this header works
// in terms of byte views and value types; no OpenSSL type leaks out.

#include <memory>
#include <optional>

#include "cactus/bytes.hpp"

typedef struct evp_pkey_st EVP_PKEY;
typedef struct evp_mac_ctx_st EVP_MAC_CTX;

namespace cactus::crypto {

using Digest = ByteArray<32>;

Digest sha256(ByteView data);
Digest hmac_sha256(ByteView key, ByteView data);
Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, size_t length);

void random_fill(std::span<uint8_t> out);
Bytes random_bytes(size_t n);

template<size_t N>
ByteArray<N> random_array()
{
  ByteArray<N> out{};
  random_fill(out);
  return out;
}

/// Incremental HMAC-SHA-256, so large frames are not concatenated first.
class HmacSha256
{
public:
  explicit HmacSha256(ByteView key);
  ~HmacSha256();
  HmacSha256(const HmacSha256&) = delete;
  HmacSha256& operator=(const HmacSha256&) = delete;

  HmacSha256& update(ByteView data);
  Digest finish();

private:
  EVP_MAC_CTX* ctx_;
};

inline constexpr size_t gcm_tag_size = 16;

/// AES-GCM with a caller-chosen IV length; key length picks AES-128 or
/// AES-256. Output is ciphertext || 16-byte tag.
Bytes aes_gcm_seal(ByteView key, ByteView iv, ByteView plaintext, ByteView aad = {});
std::optional<Bytes> aes_gcm_open(ByteView key, ByteView iv, ByteView sealed, ByteView aad = {});

/// AES-256-CTR keystream, 32-byte key and 16-byte initial counter block.
void aes_ctr_keystream(ByteView key, ByteView iv, std::span<uint8_t> out);

/// Shared, immutable handle to an EVP_PKEY.
class PKey
{
public:
  PKey() = default;
  explicit PKey(EVP_PKEY* owned);

  EVP_PKEY* get() const { return key_.get(); }
  explicit operator bool() const { return static_cast<bool>(key_); }

private:
  std::shared_ptr<EVP_PKEY> key_;
};

class Ed25519Key
{
public:
  static constexpr size_t public_size = 32;
  static constexpr size_t signature_size = 64;

  static Ed25519Key generate();
  static Ed25519Key from_private(ByteView raw32);

  Bytes sign(ByteView message) const;
  ByteArray<32> public_key() const;
  SecretKey private_bytes() const;

private:
  PKey key_;
};

bool ed25519_verify(ByteView public_key, ByteView message, ByteView signature);

class X25519Key
{
public:
  static X25519Key generate();
  static X25519Key from_private(ByteView raw32);

  ByteArray<32> public_key() const;
  SecretKey private_bytes() const;
  /// Raw Diffie-Hellman output with the peer's public value.
  SecretKey agree(ByteView peer_public) const;

private:
  PKey key_;
};

class RsaKey
{
public:
  static constexpr unsigned default_bits = 3072;

  static RsaKey generate(unsigned bits = default_bits);
  static RsaKey from_private_der(ByteView der);

  Bytes public_der() const;
  Bytes private_der() const;

  Bytes sign_pss(ByteView message) const;
  std::optional<Bytes> decrypt_oaep(ByteView ciphertext) const;

private:
  PKey key_;
};

bool rsa_pss_verify(ByteView public_der, ByteView message, ByteView signature);
Bytes rsa_oaep_encrypt(ByteView public_der, ByteView plaintext);

} // namespace cactus::crypto
