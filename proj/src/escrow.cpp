#include "cactus/escrow.hpp"

#include <cctype>

namespace cactus::escrow {

namespace {

constexpr std::string_view key_material_context = "cactus-escrow-key-material-v1";

Bytes header_aad(uint8_t version, uint8_t kdf_id)
{
  Writer w;
  w.raw("CESC").u8(version).u8(kdf_id);
  return w.take();
}

} // namespace

Passphrase Passphrase::generate()
{
  Passphrase p;
  p.key_ = crypto::random_array<16>();
  return p;
}

Passphrase Passphrase::parse(std::string_view hex)
{
  std::string lower(hex);
  for (auto& c : lower)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  Bytes raw;
  try {
    raw = from_hex(lower);
  } catch (const Error&) {
    throw Error(ErrorCode::InvalidArgument, "passphrase must be 32 hex characters");
  }
  if (raw.size() != 16)
    throw Error(ErrorCode::InvalidArgument, "passphrase must be 32 hex characters");
  Passphrase p;
  std::copy(raw.begin(), raw.end(), p.key_.begin());
  secure_zero(raw.data(), raw.size());
  return p;
}

std::string Passphrase::display() const
{
  return to_hex(key_);
}

Bytes EscrowMaterial::serialize() const
{
  Writer w;
  w.raw("CESC").u8(version).u8(kdf_id).raw(nonce);
  w.bytes32(enc_owner_keypair).bytes32(enc_key_material).bytes32(camera_public_key);
  return w.take();
}

EscrowMaterial EscrowMaterial::parse(ByteView data)
{
  Reader r(data);
  r.expect_magic("CESC");
  EscrowMaterial m;
  m.version = r.u8();
  if (m.version != format_version)
    throw Error(ErrorCode::Malformed, "unsupported escrow version");
  m.kdf_id = r.u8();
  if (m.kdf_id != kdf_none)
    throw Error(ErrorCode::Malformed, "unsupported escrow kdf");
  m.nonce = r.array<24>();
  m.enc_owner_keypair = r.bytes32();
  m.enc_key_material = r.bytes32();
  m.camera_public_key = r.bytes32();
  r.expect_done();
  return m;
}

Bytes seal_key_material(const PublicKeyBundle& owner_public, const keytree::KeyTree& tree)
{
  Bytes plain = tree.serialize();
  Bytes sealed = seal_to(owner_public, key_material_context, plain);
  secure_zero(plain.data(), plain.size());
  return sealed;
}

keytree::KeyTree open_key_material(const DeviceKeys& owner, ByteView sealed)
{
  Bytes plain = open_sealed(owner, key_material_context, sealed);
  auto tree = keytree::KeyTree::parse(plain);
  secure_zero(plain.data(), plain.size());
  return tree;
}

Built build_escrow(const DeviceKeys& owner, const keytree::KeyTree& tree, const PublicKeyBundle& camera_public)
{
  Built out{ {}, Passphrase::generate() };
  auto& m = out.material;
  m.nonce = crypto::random_array<24>();
  Bytes keypair = owner.serialize_private();
  m.enc_owner_keypair = crypto::aes_gcm_seal(out.passphrase.key(), m.nonce, keypair, header_aad(m.version, m.kdf_id));
  secure_zero(keypair.data(), keypair.size());
  m.enc_key_material = seal_key_material(owner.public_bundle(), tree);
  m.camera_public_key = camera_public.serialize();
  return out;
}

Opened open_escrow(const EscrowMaterial& m, const Passphrase& passphrase)
{
  auto keypair = crypto::aes_gcm_open(passphrase.key(), m.nonce, m.enc_owner_keypair, header_aad(m.version, m.kdf_id));
  if (!keypair)
    throw Error(ErrorCode::EscrowLocked, "passphrase does not open the escrow");
  auto owner = DeviceKeys::parse_private(*keypair);
  secure_zero(keypair->data(), keypair->size());
  auto tree = open_key_material(owner, m.enc_key_material);
  return { std::move(owner), std::move(tree), m.camera_public() };
}

} // namespace cactus::escrow
