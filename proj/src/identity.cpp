#include "cactus/identity.hpp"

namespace cactus {

Bytes PublicKeyBundle::serialize() const
{
  Writer w;
  w.raw("CPK1").bytes16(rsa_spki).raw(x25519).raw(ed25519);
  return w.take();
}

PublicKeyBundle PublicKeyBundle::parse(ByteView data)
{
  Reader r(data);
  r.expect_magic("CPK1");
  PublicKeyBundle out;
  out.rsa_spki = r.bytes16();
  out.x25519 = r.array<32>();
  out.ed25519 = r.array<32>();
  r.expect_done();
  return out;
}

crypto::Digest PublicKeyBundle::fingerprint() const
{
  return crypto::sha256(serialize());
}

DeviceKeys DeviceKeys::generate(unsigned rsa_bits)
{
  DeviceKeys out;
  out.rsa_ = crypto::RsaKey::generate(rsa_bits);
  out.dh_ = crypto::X25519Key::generate();
  out.signer_ = crypto::Ed25519Key::generate();
  return out;
}

PublicKeyBundle DeviceKeys::public_bundle() const
{
  return { rsa_.public_der(), dh_.public_key(), signer_.public_key() };
}

Bytes DeviceKeys::serialize_private() const
{
  Bytes der = rsa_.private_der();
  Writer w;
  w.raw("CSK1").bytes16(der).raw(dh_.private_bytes().view()).raw(signer_.private_bytes().view());
  secure_zero(der);
  return w.take();
}

DeviceKeys DeviceKeys::parse_private(ByteView data)
{
  Reader r(data);
  r.expect_magic("CSK1");
  DeviceKeys out;
  auto der_len = r.u16();
  out.rsa_ = crypto::RsaKey::from_private_der(r.raw(der_len));
  out.dh_ = crypto::X25519Key::from_private(r.raw(32));
  out.signer_ = crypto::Ed25519Key::from_private(r.raw(32));
  r.expect_done();
  return out;
}

namespace {

Bytes signed_payload(std::string_view context, ByteView message)
{
  Writer w;
  w.bytes16(as_view(context)).raw(message);
  return w.take();
}

constexpr size_t transport_iv_size = 12;

} // namespace

Bytes seal_signed(const PublicKeyBundle& recipient,
                  const DeviceKeys& sender,
                  std::string_view context,
                  ByteView message)
{
  Bytes to_sign = signed_payload(context, message);
  Bytes sig = sender.rsa().sign_pss(to_sign);

  Writer inner;
  inner.bytes32(message).bytes16(sig);
  Bytes plain = inner.take();

  auto body_key = crypto::random_array<32>();
  auto iv = crypto::random_array<transport_iv_size>();
  Bytes wrapped = crypto::rsa_oaep_encrypt(recipient.rsa_spki, body_key);
  Bytes body = crypto::aes_gcm_seal(body_key, iv, plain, as_view(context));
  secure_zero(body_key.data(), body_key.size());
  secure_zero(plain);

  Writer w;
  w.bytes16(wrapped).raw(iv).bytes32(body);
  return w.take();
}

Bytes open_signed(const DeviceKeys& recipient,
                  const PublicKeyBundle& sender,
                  std::string_view context,
                  ByteView sealed)
{
  Bytes wrapped, body;
  ByteArray<transport_iv_size> iv{};
  try {
    Reader r(sealed);
    wrapped = r.bytes16();
    iv = r.array<transport_iv_size>();
    body = r.bytes32();
    r.expect_done();
  } catch (const Error&) {
    throw Error(ErrorCode::DecryptionFailure, "malformed sealed envelope");
  }

  auto body_key = recipient.rsa().decrypt_oaep(wrapped);
  if (!body_key || body_key->size() != 32)
    throw Error(ErrorCode::DecryptionFailure, "envelope key does not unwrap");
  auto plain = crypto::aes_gcm_open(*body_key, iv, body, as_view(context));
  secure_zero(*body_key);
  if (!plain)
    throw Error(ErrorCode::DecryptionFailure, "envelope body does not authenticate");

  Bytes message, sig;
  try {
    Reader r(*plain);
    message = r.bytes32();
    sig = r.bytes16();
    r.expect_done();
  } catch (const Error&) {
    secure_zero(*plain);
    throw Error(ErrorCode::DecryptionFailure, "malformed envelope body");
  }
  secure_zero(*plain);

  if (!crypto::rsa_pss_verify(sender.rsa_spki, signed_payload(context, message), sig)) {
    secure_zero(message);
    throw Error(ErrorCode::AuthenticityFailure, "sender signature does not verify");
  }
  return message;
}

namespace {

constexpr std::string_view seal_salt = "cactus-seal-v1";

SecretKey seal_key(const SecretKey& shared, ByteView eph_pub, ByteView recipient_pub, std::string_view context)
{
  Writer info;
  info.raw(eph_pub).raw(recipient_pub).raw(context);
  return SecretKey(crypto::hkdf_sha256(shared.view(), as_view(seal_salt), info.data(), 32));
}

} // namespace

Bytes seal_to(const PublicKeyBundle& recipient, std::string_view context, ByteView message)
{
  auto eph = crypto::X25519Key::generate();
  auto eph_pub = eph.public_key();
  SecretKey key = seal_key(eph.agree(recipient.x25519), eph_pub, recipient.x25519, context);
  auto nonce = crypto::random_array<12>();
  Writer w;
  w.raw(eph_pub).raw(nonce).raw(crypto::aes_gcm_seal(key.view(), nonce, message, as_view(context)));
  return w.take();
}

Bytes open_sealed(const DeviceKeys& recipient, std::string_view context, ByteView sealed)
{
  if (sealed.size() < 32 + 12 + crypto::gcm_tag_size)
    throw Error(ErrorCode::DecryptionFailure, "sealed box too short");
  auto eph_pub = sealed.subspan(0, 32);
  auto nonce = sealed.subspan(32, 12);
  auto body = sealed.subspan(44);
  SecretKey shared;
  try {
    shared = recipient.dh().agree(eph_pub);
  } catch (const Error&) {
    throw Error(ErrorCode::DecryptionFailure, "invalid ephemeral key");
  }
  SecretKey key = seal_key(shared, eph_pub, recipient.dh().public_key(), context);
  auto plain = crypto::aes_gcm_open(key.view(), nonce, body, as_view(context));
  if (!plain)
    throw Error(ErrorCode::DecryptionFailure, "sealed box does not open");
  return std::move(*plain);
}

} // namespace cactus
