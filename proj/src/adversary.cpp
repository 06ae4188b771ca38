#include "cactus/adversary.hpp"

namespace cactus::pairing {

namespace {

bool is(const Frame& f, Tag tag)
{
  return f.tag == static_cast<uint8_t>(tag);
}

Bytes to_bytes(const ByteArray<32>& a)
{
  return { a.begin(), a.end() };
}

} // namespace

KeySubstitution::KeySubstitution(Side victim, std::optional<PublicKeyBundle> replacement)
  : victim_(victim)
  , replacement_(std::move(replacement))
  , attacker_dh_(crypto::X25519Key::generate())
{
}

std::vector<Adversary::Delivery> KeySubstitution::intercept(Side from, const Frame& frame)
{
  Tag key_tag = victim_ == Side::anchor ? Tag::anchor_key : Tag::joiner_key;
  if (from != victim_ || !is(frame, key_tag))
    return { { other(from), frame } };
  PublicKeyBundle forged;
  if (replacement_) {
    forged = *replacement_;
  } else {
    forged = PublicKeyBundle::parse(frame.body);
    forged.x25519 = attacker_dh_.public_key();
  }
  return { { other(from), make_frame(key_tag, forged.serialize()) } };
}

RelayWithoutKey::RelayWithoutKey(Protocol protocol)
  : protocol_(protocol)
  , attacker_dh_(crypto::X25519Key::generate())
{
}

std::vector<Adversary::Delivery> RelayWithoutKey::intercept(Side from, const Frame& frame)
{
  if (!keys_done_) {
    if (from == Side::anchor && is(frame, Tag::anchor_key))
      anchor_dh_ = PublicKeyBundle::parse(frame.body).x25519;
    if (from == Side::joiner && is(frame, Tag::joiner_key)) {
      joiner_dh_ = PublicKeyBundle::parse(frame.body).x25519;
      keys_done_ = true;
    }
    return { { other(from), frame } };
  }
  // From here on the real anchor is cut off and the attacker speaks for it.
  if (from == Side::anchor)
    return {};
  if (is(frame, Tag::joiner_nonce)) {
    nonce_ = ByteArray<32>{};
    std::copy_n(frame.body.begin(), std::min<size_t>(32, frame.body.size()), nonce_->begin());
    return { { Side::joiner, make_frame(Tag::anchor_nonce, to_bytes(crypto::random_array<32>())) } };
  }
  if (is(frame, Tag::joiner_proof) && nonce_ && anchor_dh_ && joiner_dh_) {
    // Best effort without SK_a: DH with the attacker's own key.
    auto guess_ss = shared_secret(protocol_, Side::anchor, attacker_dh_, *anchor_dh_, *joiner_dh_);
    auto proof = knowledge_proof(guess_ss, *nonce_, proof_label(protocol_, Side::anchor));
    return { { Side::joiner, make_frame(Tag::anchor_proof, to_bytes(proof)) } };
  }
  return {};
}

std::vector<Adversary::Delivery> Reflection::intercept(Side from, const Frame& frame)
{
  if (!keys_done_) {
    if (from == Side::joiner && is(frame, Tag::joiner_key))
      keys_done_ = true;
    return { { other(from), frame } };
  }
  if (from == Side::anchor)
    return {};
  if (is(frame, Tag::joiner_nonce))
    return { { Side::joiner, make_frame(Tag::anchor_nonce, frame.body) } };
  if (is(frame, Tag::joiner_proof))
    return { { Side::joiner, make_frame(Tag::anchor_proof, frame.body) } };
  return {};
}

ManInTheMiddle::ManInTheMiddle(std::unique_ptr<Session> fake_anchor, std::unique_ptr<Session> fake_joiner)
  : fake_anchor_(std::move(fake_anchor))
  , fake_joiner_(std::move(fake_joiner))
{
}

std::vector<Adversary::Delivery> ManInTheMiddle::begin()
{
  std::vector<Delivery> out;
  for (auto& f : fake_anchor_->start())
    out.push_back({ Side::joiner, std::move(f) });
  fake_joiner_->start();
  return out;
}

std::vector<Adversary::Delivery> ManInTheMiddle::intercept(Side from, const Frame& frame)
{
  Session& facing = from == Side::anchor ? *fake_joiner_ : *fake_anchor_;
  std::vector<Delivery> out;
  try {
    for (auto& f : facing.handle(frame))
      out.push_back({ from, std::move(f) });
  } catch (const Error& e) {
    if (e.code() != ErrorCode::PairingAborted)
      throw;
  }
  return out;
}

namespace {

class Passthrough final : public Adversary
{
};

} // namespace

std::unique_ptr<Adversary> make_scripted_adversary(const std::string& name, Protocol protocol)
{
  if (name == "substitute-anchor-key" || name == "substitute-factory-key")
    return std::make_unique<KeySubstitution>(Side::anchor);
  if (name == "substitute-joiner-key" || name == "substitute-owner-key")
    return std::make_unique<KeySubstitution>(Side::joiner);
  if (name == "relay-without-key")
    return std::make_unique<RelayWithoutKey>(protocol);
  if (name == "reflect")
    return std::make_unique<Reflection>();
  if (name == "passthrough")
    return std::make_unique<Passthrough>();
  throw Error(ErrorCode::InvalidArgument, "unknown adversary script: " + name);
}

} // namespace cactus::pairing
