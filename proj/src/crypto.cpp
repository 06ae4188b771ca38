#include "cactus/crypto.hpp"

#include <algorithm>

#include <openssl/core_names.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>
#include <openssl/x509.h>

namespace cactus::crypto {

namespace {

[[noreturn]] void fail(const char* what)
{
  ERR_clear_error();
  throw Error(ErrorCode::InvalidArgument, std::string("openssl: ") + what);
}

void check(int rc, const char* what)
{
  if (rc != 1)
    fail(what);
}

struct CipherCtxDeleter
{
  void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};
struct MdCtxDeleter
{
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct PkeyCtxDeleter
{
  void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct KdfCtxDeleter
{
  void operator()(EVP_KDF_CTX* p) const { EVP_KDF_CTX_free(p); }
};

using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;
using KdfCtx = std::unique_ptr<EVP_KDF_CTX, KdfCtxDeleter>;

EVP_MAC* hmac_algorithm()
{
  static EVP_MAC* mac = EVP_MAC_fetch(nullptr, "HMAC", nullptr);
  return mac;
}

EVP_KDF* hkdf_algorithm()
{
  static EVP_KDF* kdf = EVP_KDF_fetch(nullptr, "HKDF", nullptr);
  return kdf;
}

const EVP_CIPHER* gcm_for_key(size_t key_size)
{
  switch (key_size) {
    case 16: return EVP_aes_128_gcm();
    case 32: return EVP_aes_256_gcm();
    default: throw Error(ErrorCode::InvalidArgument, "AES-GCM key must be 16 or 32 bytes");
  }
}

PKey raw_private(int type, ByteView raw32)
{
  if (raw32.size() != 32)
    throw Error(ErrorCode::InvalidArgument, "raw private key must be 32 bytes");
  EVP_PKEY* k = EVP_PKEY_new_raw_private_key(type, nullptr, raw32.data(), raw32.size());
  if (k == nullptr)
    fail("raw private key");
  return PKey(k);
}

ByteArray<32> raw_public_of(const PKey& key)
{
  ByteArray<32> out{};
  size_t len = out.size();
  check(EVP_PKEY_get_raw_public_key(key.get(), out.data(), &len), "raw public key");
  return out;
}

SecretKey raw_private_of(const PKey& key)
{
  SecretKey out;
  size_t len = SecretKey::size;
  check(EVP_PKEY_get_raw_private_key(key.get(), out.mutable_array().data(), &len), "raw private key");
  return out;
}

} // namespace

Digest sha256(ByteView data)
{
  Digest out{};
  unsigned int len = 0;
  check(EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr), "sha256");
  return out;
}

HmacSha256::HmacSha256(ByteView key)
  : ctx_(EVP_MAC_CTX_new(hmac_algorithm()))
{
  if (ctx_ == nullptr)
    fail("hmac context");
  char digest[] = "SHA256";
  OSSL_PARAM params[] = {
    OSSL_PARAM_construct_utf8_string(OSSL_MAC_PARAM_DIGEST, digest, 0),
    OSSL_PARAM_construct_end(),
  };
  if (EVP_MAC_init(ctx_, key.data(), key.size(), params) != 1) {
    EVP_MAC_CTX_free(ctx_);
    fail("hmac init");
  }
}

HmacSha256::~HmacSha256()
{
  EVP_MAC_CTX_free(ctx_);
}

HmacSha256& HmacSha256::update(ByteView data)
{
  check(EVP_MAC_update(ctx_, data.data(), data.size()), "hmac update");
  return *this;
}

Digest HmacSha256::finish()
{
  Digest out{};
  size_t len = 0;
  check(EVP_MAC_final(ctx_, out.data(), &len, out.size()), "hmac final");
  return out;
}

Digest hmac_sha256(ByteView key, ByteView data)
{
  return HmacSha256(key).update(data).finish();
}

Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, size_t length)
{
  KdfCtx ctx(EVP_KDF_CTX_new(hkdf_algorithm()));
  if (!ctx)
    fail("hkdf context");
  char digest[] = "SHA256";
  OSSL_PARAM params[] = {
    OSSL_PARAM_construct_utf8_string(OSSL_KDF_PARAM_DIGEST, digest, 0),
    OSSL_PARAM_construct_octet_string(OSSL_KDF_PARAM_KEY, const_cast<uint8_t*>(ikm.data()), ikm.size()),
    OSSL_PARAM_construct_octet_string(OSSL_KDF_PARAM_SALT, const_cast<uint8_t*>(salt.data()), salt.size()),
    OSSL_PARAM_construct_octet_string(OSSL_KDF_PARAM_INFO, const_cast<uint8_t*>(info.data()), info.size()),
    OSSL_PARAM_construct_end(),
  };
  Bytes out(length);
  check(EVP_KDF_derive(ctx.get(), out.data(), out.size(), params), "hkdf derive");
  return out;
}

void random_fill(std::span<uint8_t> out)
{
  if (out.empty())
    return;
  check(RAND_bytes(out.data(), static_cast<int>(out.size())), "RAND_bytes");
}

Bytes random_bytes(size_t n)
{
  Bytes out(n);
  random_fill(out);
  return out;
}

Bytes aes_gcm_seal(ByteView key, ByteView iv, ByteView plaintext, ByteView aad)
{
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx)
    fail("cipher context");
  check(EVP_EncryptInit_ex(ctx.get(), gcm_for_key(key.size()), nullptr, nullptr, nullptr), "gcm init");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(iv.size()), nullptr), "gcm ivlen");
  check(EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), iv.data()), "gcm key");

  int len = 0;
  if (!aad.empty())
    check(EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())), "gcm aad");

  Bytes out(plaintext.size() + gcm_tag_size);
  int written = 0;
  if (!plaintext.empty()) {
    check(EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(), static_cast<int>(plaintext.size())),
          "gcm encrypt");
    written = len;
  }
  check(EVP_EncryptFinal_ex(ctx.get(), out.data() + written, &len), "gcm final");
  written += len;
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, gcm_tag_size, out.data() + written), "gcm tag");
  out.resize(static_cast<size_t>(written) + gcm_tag_size);
  return out;
}

void aes_ctr_keystream(ByteView key, ByteView iv, std::span<uint8_t> out)
{
  if (key.size() != 32 || iv.size() != 16)
    throw Error(ErrorCode::InvalidArgument, "aes-ctr wants a 32-byte key and 16-byte iv");
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx)
    fail("cipher context");
  check(EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_ctr(), nullptr, key.data(), iv.data()), "ctr init");
  std::fill(out.begin(), out.end(), uint8_t{ 0 });
  constexpr size_t chunk = 1 << 20;
  for (size_t off = 0; off < out.size(); off += chunk) {
    int n = static_cast<int>(std::min(chunk, out.size() - off));
    int len = 0;
    check(EVP_EncryptUpdate(ctx.get(), out.data() + off, &len, out.data() + off, n), "ctr update");
  }
}

std::optional<Bytes> aes_gcm_open(ByteView key, ByteView iv, ByteView sealed, ByteView aad)
{
  if (sealed.size() < gcm_tag_size)
    return std::nullopt;
  const size_t body = sealed.size() - gcm_tag_size;

  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx)
    fail("cipher context");
  check(EVP_DecryptInit_ex(ctx.get(), gcm_for_key(key.size()), nullptr, nullptr, nullptr), "gcm init");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(iv.size()), nullptr), "gcm ivlen");
  check(EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), iv.data()), "gcm key");

  int len = 0;
  if (!aad.empty())
    check(EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())), "gcm aad");

  Bytes out(body);
  int written = 0;
  if (body > 0) {
    check(EVP_DecryptUpdate(ctx.get(), out.data(), &len, sealed.data(), static_cast<int>(body)), "gcm decrypt");
    written = len;
  }
  ByteArray<gcm_tag_size> tag{};
  std::copy(sealed.begin() + static_cast<std::ptrdiff_t>(body), sealed.end(), tag.begin());
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, gcm_tag_size, tag.data()), "gcm set tag");
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) {
    ERR_clear_error();
    secure_zero(out);
    return std::nullopt;
  }
  out.resize(static_cast<size_t>(written + len));
  return out;
}

PKey::PKey(EVP_PKEY* owned)
  : key_(owned, EVP_PKEY_free)
{
}

// --- Ed25519 ---

Ed25519Key Ed25519Key::generate()
{
  Ed25519Key out;
  EVP_PKEY* k = EVP_PKEY_Q_keygen(nullptr, nullptr, "ED25519");
  if (k == nullptr)
    fail("ed25519 keygen");
  out.key_ = PKey(k);
  return out;
}

Ed25519Key Ed25519Key::from_private(ByteView raw32)
{
  Ed25519Key out;
  out.key_ = raw_private(EVP_PKEY_ED25519, raw32);
  return out;
}

Bytes Ed25519Key::sign(ByteView message) const
{
  MdCtx ctx(EVP_MD_CTX_new());
  check(EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key_.get()), "ed25519 sign init");
  Bytes sig(signature_size);
  size_t len = sig.size();
  check(EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()), "ed25519 sign");
  sig.resize(len);
  return sig;
}

ByteArray<32> Ed25519Key::public_key() const
{
  return raw_public_of(key_);
}

SecretKey Ed25519Key::private_bytes() const
{
  return raw_private_of(key_);
}

bool ed25519_verify(ByteView public_key, ByteView message, ByteView signature)
{
  if (public_key.size() != Ed25519Key::public_size || signature.size() != Ed25519Key::signature_size)
    return false;
  EVP_PKEY* raw = EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(), public_key.size());
  if (raw == nullptr) {
    ERR_clear_error();
    return false;
  }
  PKey key(raw);
  MdCtx ctx(EVP_MD_CTX_new());
  check(EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()), "ed25519 verify init");
  int rc = EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(), message.size());
  ERR_clear_error();
  return rc == 1;
}

// --- X25519 ---

X25519Key X25519Key::generate()
{
  X25519Key out;
  EVP_PKEY* k = EVP_PKEY_Q_keygen(nullptr, nullptr, "X25519");
  if (k == nullptr)
    fail("x25519 keygen");
  out.key_ = PKey(k);
  return out;
}

X25519Key X25519Key::from_private(ByteView raw32)
{
  X25519Key out;
  out.key_ = raw_private(EVP_PKEY_X25519, raw32);
  return out;
}

ByteArray<32> X25519Key::public_key() const
{
  return raw_public_of(key_);
}

SecretKey X25519Key::private_bytes() const
{
  return raw_private_of(key_);
}

SecretKey X25519Key::agree(ByteView peer_public) const
{
  if (peer_public.size() != 32)
    throw Error(ErrorCode::InvalidArgument, "x25519 public key must be 32 bytes");
  EVP_PKEY* raw = EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, peer_public.data(), peer_public.size());
  if (raw == nullptr)
    fail("x25519 peer key");
  PKey peer(raw);
  PkeyCtx ctx(EVP_PKEY_CTX_new(key_.get(), nullptr));
  check(EVP_PKEY_derive_init(ctx.get()), "x25519 derive init");
  check(EVP_PKEY_derive_set_peer(ctx.get(), peer.get()), "x25519 set peer");
  SecretKey out;
  size_t len = SecretKey::size;
  check(EVP_PKEY_derive(ctx.get(), out.mutable_array().data(), &len), "x25519 derive");
  return out;
}

// --- RSA ---

RsaKey RsaKey::generate(unsigned bits)
{
  RsaKey out;
  EVP_PKEY* k = EVP_PKEY_Q_keygen(nullptr, nullptr, "RSA", static_cast<size_t>(bits));
  if (k == nullptr)
    fail("rsa keygen");
  out.key_ = PKey(k);
  return out;
}

RsaKey RsaKey::from_private_der(ByteView der)
{
  const unsigned char* p = der.data();
  EVP_PKEY* k = d2i_PrivateKey(EVP_PKEY_RSA, nullptr, &p, static_cast<long>(der.size()));
  if (k == nullptr) {
    ERR_clear_error();
    throw Error(ErrorCode::Malformed, "invalid RSA private key encoding");
  }
  RsaKey out;
  out.key_ = PKey(k);
  return out;
}

Bytes RsaKey::public_der() const
{
  int len = i2d_PUBKEY(key_.get(), nullptr);
  if (len <= 0)
    fail("rsa public der");
  Bytes out(static_cast<size_t>(len));
  unsigned char* p = out.data();
  i2d_PUBKEY(key_.get(), &p);
  return out;
}

Bytes RsaKey::private_der() const
{
  int len = i2d_PrivateKey(key_.get(), nullptr);
  if (len <= 0)
    fail("rsa private der");
  Bytes out(static_cast<size_t>(len));
  unsigned char* p = out.data();
  i2d_PrivateKey(key_.get(), &p);
  return out;
}

Bytes RsaKey::sign_pss(ByteView message) const
{
  MdCtx ctx(EVP_MD_CTX_new());
  EVP_PKEY_CTX* pctx = nullptr;
  check(EVP_DigestSignInit(ctx.get(), &pctx, EVP_sha256(), nullptr, key_.get()), "pss init");
  check(EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PSS_PADDING), "pss padding");
  check(EVP_PKEY_CTX_set_rsa_pss_saltlen(pctx, RSA_PSS_SALTLEN_DIGEST), "pss saltlen");
  size_t len = 0;
  check(EVP_DigestSign(ctx.get(), nullptr, &len, message.data(), message.size()), "pss size");
  Bytes sig(len);
  check(EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()), "pss sign");
  sig.resize(len);
  return sig;
}

namespace {

PKey parse_rsa_public(ByteView der)
{
  const unsigned char* p = der.data();
  EVP_PKEY* k = d2i_PUBKEY(nullptr, &p, static_cast<long>(der.size()));
  if (k == nullptr || EVP_PKEY_get_base_id(k) != EVP_PKEY_RSA) {
    EVP_PKEY_free(k);
    ERR_clear_error();
    return PKey();
  }
  return PKey(k);
}

void set_oaep(EVP_PKEY_CTX* ctx)
{
  check(EVP_PKEY_CTX_set_rsa_padding(ctx, RSA_PKCS1_OAEP_PADDING), "oaep padding");
  check(EVP_PKEY_CTX_set_rsa_oaep_md(ctx, EVP_sha256()), "oaep md");
  check(EVP_PKEY_CTX_set_rsa_mgf1_md(ctx, EVP_sha256()), "oaep mgf1");
}

} // namespace

std::optional<Bytes> RsaKey::decrypt_oaep(ByteView ciphertext) const
{
  PkeyCtx ctx(EVP_PKEY_CTX_new(key_.get(), nullptr));
  check(EVP_PKEY_decrypt_init(ctx.get()), "oaep decrypt init");
  set_oaep(ctx.get());
  size_t len = 0;
  if (EVP_PKEY_decrypt(ctx.get(), nullptr, &len, ciphertext.data(), ciphertext.size()) != 1) {
    ERR_clear_error();
    return std::nullopt;
  }
  Bytes out(len);
  if (EVP_PKEY_decrypt(ctx.get(), out.data(), &len, ciphertext.data(), ciphertext.size()) != 1) {
    ERR_clear_error();
    return std::nullopt;
  }
  out.resize(len);
  return out;
}

bool rsa_pss_verify(ByteView public_der, ByteView message, ByteView signature)
{
  PKey key = parse_rsa_public(public_der);
  if (!key)
    return false;
  MdCtx ctx(EVP_MD_CTX_new());
  EVP_PKEY_CTX* pctx = nullptr;
  check(EVP_DigestVerifyInit(ctx.get(), &pctx, EVP_sha256(), nullptr, key.get()), "pss verify init");
  check(EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PSS_PADDING), "pss padding");
  check(EVP_PKEY_CTX_set_rsa_pss_saltlen(pctx, RSA_PSS_SALTLEN_DIGEST), "pss saltlen");
  int rc = EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(), message.size());
  ERR_clear_error();
  return rc == 1;
}

Bytes rsa_oaep_encrypt(ByteView public_der, ByteView plaintext)
{
  PKey key = parse_rsa_public(public_der);
  if (!key)
    throw Error(ErrorCode::Malformed, "invalid RSA public key encoding");
  PkeyCtx ctx(EVP_PKEY_CTX_new(key.get(), nullptr));
  check(EVP_PKEY_encrypt_init(ctx.get()), "oaep encrypt init");
  set_oaep(ctx.get());
  size_t len = 0;
  check(EVP_PKEY_encrypt(ctx.get(), nullptr, &len, plaintext.data(), plaintext.size()), "oaep size");
  Bytes out(len);
  check(EVP_PKEY_encrypt(ctx.get(), out.data(), &len, plaintext.data(), plaintext.size()), "oaep encrypt");
  out.resize(len);
  return out;
}

} // namespace cactus::crypto
