#pragma once

// Scripted attackers on the insecure pairing channel. Each one sits between
// the two sessions through the Adversary hook; none of them can touch the
// visual channel.

#include <memory>
#include <string>

#include "cactus/pairing.hpp"

namespace cactus::pairing {

/// Swaps the public key sent by `victim` for one the attacker controls.
/// Without an explicit replacement the X25519 component is replaced.
class KeySubstitution final : public Adversary
{
public:
  explicit KeySubstitution(Side victim, std::optional<PublicKeyBundle> replacement = std::nullopt);
  std::vector<Delivery> intercept(Side from, const Frame& frame) override;

private:
  Side victim_;
  std::optional<PublicKeyBundle> replacement_;
  crypto::X25519Key attacker_dh_;
};

/// Forwards both genuine public keys, then takes the anchor's place for the
/// knowledge proof. It never holds the anchor's private key.
class RelayWithoutKey final : public Adversary
{
public:
  explicit RelayWithoutKey(Protocol protocol);
  std::vector<Delivery> intercept(Side from, const Frame& frame) override;

private:
  Protocol protocol_;
  crypto::X25519Key attacker_dh_;
  std::optional<ByteArray<32>> anchor_dh_;
  std::optional<ByteArray<32>> joiner_dh_;
  std::optional<ByteArray<32>> nonce_;
  bool keys_done_ = false;
};

/// Forwards both genuine public keys, then answers the joiner by echoing its
/// own challenge and its own proof back at it.
class Reflection final : public Adversary
{
public:
  std::vector<Delivery> intercept(Side from, const Frame& frame) override;

private:
  bool keys_done_ = false;
};

/// Full man in the middle: terminates each real session with one of its own.
/// Succeeds only where the victim's visual check is switched off.
class ManInTheMiddle final : public Adversary
{
public:
  /// `fake_anchor` faces the real joiner, `fake_joiner` faces the real anchor.
  ManInTheMiddle(std::unique_ptr<Session> fake_anchor, std::unique_ptr<Session> fake_joiner);

  std::vector<Delivery> begin() override;
  std::vector<Delivery> intercept(Side from, const Frame& frame) override;

  Session& fake_anchor() { return *fake_anchor_; }
  Session& fake_joiner() { return *fake_joiner_; }

private:
  std::unique_ptr<Session> fake_anchor_;
  std::unique_ptr<Session> fake_joiner_;
};

/// Visual link that shows nothing and sees nothing; for attacker sessions.
class BlindVisualLink final : public VisualLink
{
public:
  void show(const VisualPayload&) override {}
  std::optional<VisualPayload> scan() override { return std::nullopt; }
};

/// Script names: substitute-anchor-key (alias substitute-factory-key),
/// substitute-joiner-key (alias substitute-owner-key), relay-without-key,
/// reflect, passthrough. Throws InvalidArgument for anything else.
std::unique_ptr<Adversary> make_scripted_adversary(const std::string& name, Protocol protocol);

} // namespace cactus::pairing
