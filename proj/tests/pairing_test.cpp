#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <thread>

#include <sys/socket.h>
#include <unistd.h>

#include "cactus/adversary.hpp"
#include "cactus/pairing.hpp"
#include "test_support.hpp"

using namespace cactus;
using namespace cactus::pairing;
using keytree::EpochRange;
using keytree::KeyTree;
using keytree::TreeParams;

namespace {

// Pool slots: 0 factory, 1 camera, 2 owner, 3 delegatee, 4-6 attacker.
TreeParams small_params()
{
  TreeParams p;
  p.depth = 10;
  return p;
}

struct InitPair
{
  VisualChannel visual;
  std::unique_ptr<Session> camera;
  std::unique_ptr<Session> owner;

  explicit InitPair(Options camera_opts = {}, Options owner_opts = {}, std::optional<SecretKey> seed = std::nullopt)
  {
    camera = Session::camera({ &test::pooled_keys(0), test::pooled_keys(1) }, visual.link(Side::anchor), camera_opts);
    owner = Session::owner({ test::pooled_keys(2), "ssid=home;psk=hunter2", small_params(), std::move(seed) },
                           visual.link(Side::joiner),
                           owner_opts);
  }

  RunResult run(Adversary* adversary = nullptr) { return pairing::run(*camera, *owner, adversary); }
};

struct DelegationPair
{
  VisualChannel visual;
  std::unique_ptr<Session> delegator;
  std::unique_ptr<Session> delegatee;

  explicit DelegationPair(std::vector<keytree::NodeKey> grant, TreeParams params = small_params())
  {
    delegator = Session::delegator({ &test::pooled_keys(2), params, std::move(grant) }, visual.link(Side::anchor));
    delegatee = Session::delegatee({ test::pooled_keys(3) }, visual.link(Side::joiner));
  }

  RunResult run(Adversary* adversary = nullptr) { return pairing::run(*delegator, *delegatee, adversary); }
};

KeyTree owner_tree(unsigned depth = 10)
{
  ByteArray<32> seed{};
  seed.fill(0x42);
  TreeParams p;
  p.depth = depth;
  return KeyTree::from_seed(p, SecretKey(seed));
}

class Tamper final : public Adversary
{
public:
  explicit Tamper(Tag tag)
    : tag_(tag)
  {
  }
  std::vector<Delivery> intercept(Side from, const Frame& frame) override
  {
    Frame f = frame;
    if (f.tag == static_cast<uint8_t>(tag_))
      f.body[f.body.size() / 2] ^= 0x01;
    return { { other(from), std::move(f) } };
  }

private:
  Tag tag_;
};

} // namespace

TEST(InitPairing, HonestRunCompletes)
{
  ByteArray<32> seed_bytes{};
  seed_bytes.fill(9);
  InitPair p({}, {}, SecretKey(seed_bytes));
  auto r = p.run();
  ASSERT_TRUE(r.anchor_complete);
  ASSERT_TRUE(r.joiner_complete);

  const auto& cam = p.camera->camera_outcome();
  const auto& own = p.owner->owner_outcome();
  EXPECT_EQ(cam.owner_public, test::pooled_keys(2).public_bundle());
  EXPECT_EQ(own.camera_public, test::pooled_keys(1).public_bundle());
  EXPECT_EQ(own.factory_public, test::pooled_keys(0).public_bundle());
  EXPECT_EQ(cam.secrets.seed, SecretKey(seed_bytes));
  EXPECT_EQ(cam.secrets.wifi_credentials, "ssid=home;psk=hunter2");
  EXPECT_EQ(cam.secrets.params.depth, 10u);

  // Camera's tree root is the seed the owner chose.
  auto camera_tree = KeyTree::from_seed(cam.secrets.params, cam.secrets.seed);
  auto owner_tree = KeyTree::from_seed(own.secrets.params, own.secrets.seed);
  EXPECT_EQ(camera_tree.key_for_epoch(77), owner_tree.key_for_epoch(77));

  // The escrow the camera now holds opens with the owner's passphrase.
  auto opened = escrow::open_escrow(escrow::EscrowMaterial::parse(cam.secrets.escrow_blob), own.passphrase);
  EXPECT_EQ(opened.camera_public, test::pooled_keys(1).public_bundle());
  EXPECT_EQ(opened.tree.key_for_epoch(3), owner_tree.key_for_epoch(3));
}

TEST(InitPairing, TranscriptsMatchOnBothSides)
{
  InitPair p;
  ASSERT_TRUE(p.run().joiner_complete);
  EXPECT_FALSE(p.camera->transcript().empty());
  EXPECT_EQ(p.camera->transcript(), p.owner->transcript());
}

TEST(InitPairing, SubstitutedFactoryKeyAbortsAtStep2)
{
  InitPair p;
  KeySubstitution attacker(Side::anchor, test::pooled_keys(4).public_bundle());
  auto r = p.run(&attacker);
  EXPECT_EQ(r.joiner_abort, 2u);
  EXPECT_FALSE(r.anchor_complete);
  EXPECT_TRUE(p.owner->secret_material().empty());
}

TEST(InitPairing, SubstitutedOwnerKeyAbortsAtStep4)
{
  InitPair p;
  KeySubstitution attacker(Side::joiner, test::pooled_keys(5).public_bundle());
  auto r = p.run(&attacker);
  EXPECT_EQ(r.anchor_abort, 4u);
  EXPECT_FALSE(r.joiner_complete);
  EXPECT_TRUE(p.camera->secret_material().empty());
}

TEST(InitPairing, RelayWithoutPrivateKeyAbortsAtStep5)
{
  InitPair p;
  RelayWithoutKey attacker(Protocol::initialization);
  auto r = p.run(&attacker);
  EXPECT_EQ(r.joiner_abort, 5u);
  EXPECT_FALSE(r.anchor_complete);
  EXPECT_TRUE(p.owner->secret_material().empty());
}

TEST(InitPairing, ReflectionAbortsAtStep5)
{
  InitPair p;
  Reflection attacker;
  auto r = p.run(&attacker);
  EXPECT_EQ(r.joiner_abort, 5u);
  EXPECT_FALSE(r.anchor_complete);
}

TEST(InitPairing, RoleLabelsSeparateTheTwoProofs)
{
  ByteArray<32> k{};
  k.fill(1);
  SecretKey ss(k);
  Bytes nonce(32, 7);
  EXPECT_NE(knowledge_proof(ss, nonce, proof_label(Protocol::initialization, Side::joiner)),
            knowledge_proof(ss, nonce, proof_label(Protocol::initialization, Side::anchor)));
}

TEST(InitPairing, ScriptedAdversariesByName)
{
  struct Case
  {
    const char* name;
    std::optional<unsigned> anchor;
    std::optional<unsigned> joiner;
  };
  for (auto c : { Case{ "substitute-factory-key", std::nullopt, 2u },
                  Case{ "substitute-owner-key", 4u, std::nullopt },
                  Case{ "relay-without-key", std::nullopt, 5u },
                  Case{ "reflect", std::nullopt, 5u } }) {
    InitPair p;
    auto adversary = make_scripted_adversary(c.name, Protocol::initialization);
    auto r = p.run(adversary.get());
    EXPECT_EQ(r.anchor_abort, c.anchor) << c.name;
    EXPECT_EQ(r.joiner_abort, c.joiner) << c.name;
    EXPECT_FALSE(r.anchor_complete && r.joiner_complete) << c.name;
  }
  InitPair honest;
  auto passthrough = make_scripted_adversary("passthrough", Protocol::initialization);
  auto r = honest.run(passthrough.get());
  EXPECT_TRUE(r.anchor_complete && r.joiner_complete);
  EXPECT_THROW(make_scripted_adversary("nonsense", Protocol::initialization), Error);
}

namespace {

struct MitmOutcome
{
  RunResult result;
  std::optional<SecretKey> owner_seed;
  std::optional<SecretKey> attacker_learned_seed;
  std::optional<PublicKeyBundle> camera_believes_owner;
};

MitmOutcome run_mitm(bool camera_checks, bool owner_checks)
{
  InitPair p(Options{ camera_checks }, Options{ owner_checks });
  BlindVisualLink blind_a, blind_j;
  auto fake_camera = Session::camera({ &test::pooled_keys(4), test::pooled_keys(6) }, blind_a, Options{ false });
  auto fake_owner = Session::owner({ test::pooled_keys(5), "attacker", small_params() }, blind_j, Options{ false });
  ManInTheMiddle mitm(std::move(fake_camera), std::move(fake_owner));
  MitmOutcome out;
  out.result = p.run(&mitm);
  if (p.owner->complete())
    out.owner_seed = p.owner->owner_outcome().secrets.seed;
  if (mitm.fake_anchor().complete())
    out.attacker_learned_seed = mitm.fake_anchor().camera_outcome().secrets.seed;
  if (p.camera->complete())
    out.camera_believes_owner = p.camera->camera_outcome().owner_public;
  return out;
}

} // namespace

TEST(VisualChannel, BothChecksDefeatFullMitm)
{
  auto o = run_mitm(true, true);
  EXPECT_EQ(o.result.joiner_abort, 2u);
  EXPECT_EQ(o.result.anchor_abort, 4u);
}

TEST(VisualChannel, WithoutOwnerCheckAttackerLearnsSeed)
{
  auto o = run_mitm(true, false);
  ASSERT_TRUE(o.result.joiner_complete);
  ASSERT_TRUE(o.owner_seed && o.attacker_learned_seed);
  EXPECT_EQ(*o.owner_seed, *o.attacker_learned_seed);
  EXPECT_EQ(o.result.anchor_abort, 4u);
}

TEST(VisualChannel, WithoutCameraCheckAttackerOwnsCamera)
{
  auto o = run_mitm(false, true);
  ASSERT_TRUE(o.result.anchor_complete);
  EXPECT_EQ(*o.camera_believes_owner, test::pooled_keys(5).public_bundle());
  EXPECT_EQ(o.result.joiner_abort, 2u);
}

TEST(VisualChannel, WithoutEitherCheckMitmIsComplete)
{
  auto o = run_mitm(false, false);
  EXPECT_TRUE(o.result.anchor_complete);
  EXPECT_TRUE(o.result.joiner_complete);
  EXPECT_EQ(*o.owner_seed, *o.attacker_learned_seed);
  EXPECT_EQ(*o.camera_believes_owner, test::pooled_keys(5).public_bundle());
}

TEST(InitPairing, TamperedCameraKeyMessageAbortsAtStep6)
{
  InitPair p;
  Tamper t(Tag::camera_key);
  auto r = p.run(&t);
  EXPECT_EQ(r.joiner_abort, 6u);
  EXPECT_TRUE(p.owner->secret_material().empty());
}

TEST(InitPairing, TamperedSecretsAbortAtStep7)
{
  InitPair p;
  Tamper t(Tag::init_secrets);
  auto r = p.run(&t);
  EXPECT_EQ(r.anchor_abort, 7u);
  EXPECT_TRUE(p.camera->secret_material().empty());
  EXPECT_FALSE(r.joiner_complete);
}

TEST(InitPairing, OutOfOrderMessageAborts)
{
  VisualChannel visual;
  auto owner = Session::owner({ test::pooled_keys(2), "", small_params() }, visual.link(Side::joiner));
  owner->start();
  EXPECT_THROW(owner->handle(make_frame(Tag::anchor_proof, Bytes(32))), Error);
  EXPECT_EQ(owner->abort_step(), 2u);

  auto camera = Session::camera({ &test::pooled_keys(0), test::pooled_keys(1) }, visual.link(Side::anchor));
  camera->start();
  EXPECT_THROW(camera->handle(Frame{ 0xee, {} }), Error);
  EXPECT_EQ(camera->abort_step(), 4u);
  EXPECT_TRUE(camera->secret_material().empty());
}

TEST(InitPairing, SecretsPresentBeforeAbortAndGoneAfter)
{
  VisualChannel visual;
  auto camera = Session::camera({ &test::pooled_keys(0), test::pooled_keys(1) }, visual.link(Side::anchor));
  auto owner = Session::owner({ test::pooled_keys(2), "", small_params() }, visual.link(Side::joiner));
  auto out = camera->start();
  owner->start();
  auto replies = owner->handle(out.at(0));
  EXPECT_FALSE(owner->secret_material().empty());
  camera->handle(replies.at(0));
  camera->handle(replies.at(1));
  EXPECT_FALSE(camera->secret_material().empty());
  EXPECT_THROW(camera->handle(make_frame(Tag::joiner_proof, Bytes(32))), Error);
  EXPECT_EQ(camera->abort_step(), 5u);
  EXPECT_TRUE(camera->secret_material().empty());
}

TEST(InitPairing, AcrossTwoProcessesOverASocket)
{
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  auto dir = std::filesystem::temp_directory_path() / ("cactus_pair_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  FileVisualLink camera_visual((dir / "camera.vch").string(), (dir / "owner.vch").string());
  FileVisualLink owner_visual((dir / "owner.vch").string(), (dir / "camera.vch").string());
  // The factory label exists before pairing starts.
  camera_visual.show(VisualPayload::of(test::pooled_keys(0).public_bundle()));

  auto camera = Session::camera({ &test::pooled_keys(0), test::pooled_keys(1) }, camera_visual);
  auto owner = Session::owner({ test::pooled_keys(2), "w", small_params() }, owner_visual);
  std::thread t([&] {
    channel::FdChannel ch(fds[0]);
    run_over(*camera, ch);
    ::close(fds[0]);
  });
  channel::FdChannel ch(fds[1]);
  run_over(*owner, ch);
  t.join();
  ::close(fds[1]);
  EXPECT_TRUE(camera->complete());
  EXPECT_TRUE(owner->complete());
  EXPECT_EQ(camera->transcript(), owner->transcript());
  std::filesystem::remove_all(dir);
}

TEST(InitPairing, SocketAdversaryOnOneEndAbortsAtPredictedStep)
{
  struct Case
  {
    const char* name;
    Side victim;
    unsigned step;
  };
  for (auto c : { Case{ "substitute-anchor-key", Side::joiner, 2 },
                  Case{ "substitute-joiner-key", Side::anchor, 4 },
                  Case{ "relay-without-key", Side::joiner, 5 },
                  Case{ "reflect", Side::joiner, 5 } }) {
    int fds[2];
    ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
    VisualChannel visual;
    auto camera = Session::camera({ &test::pooled_keys(0), test::pooled_keys(1) }, visual.link(Side::anchor));
    auto owner = Session::owner({ test::pooled_keys(2), "w", small_params() }, visual.link(Side::joiner));
    // The attacker lives in the owner's process and sees both directions.
    std::thread t([&] {
      channel::FdChannel ch(fds[0]);
      try {
        run_over(*camera, ch);
      } catch (const Error&) {
      }
      ::close(fds[0]);
    });
    auto adversary = make_scripted_adversary(c.name, Protocol::initialization);
    channel::FdChannel ch(fds[1]);
    try {
      run_over(*owner, ch, adversary.get());
    } catch (const Error&) {
    }
    ::shutdown(fds[1], SHUT_RDWR);
    t.join();
    ::close(fds[1]);
    Session& victim = c.victim == Side::anchor ? *camera : *owner;
    EXPECT_EQ(victim.abort_step(), c.step) << c.name;
    EXPECT_FALSE(camera->complete() && owner->complete()) << c.name;
  }
}

TEST(InitPairing, SocketPassthroughAdversaryStillCompletes)
{
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  VisualChannel visual;
  auto camera = Session::camera({ &test::pooled_keys(0), test::pooled_keys(1) }, visual.link(Side::anchor));
  auto owner = Session::owner({ test::pooled_keys(2), "w", small_params() }, visual.link(Side::joiner));
  auto adversary = make_scripted_adversary("passthrough", Protocol::initialization);
  std::thread t([&] {
    channel::FdChannel ch(fds[0]);
    run_over(*camera, ch, adversary.get());
  });
  channel::FdChannel ch(fds[1]);
  run_over(*owner, ch);
  t.join();
  ::close(fds[0]);
  ::close(fds[1]);
  EXPECT_TRUE(camera->complete());
  EXPECT_TRUE(owner->complete());
}

TEST(InitPairing, PeerHangupAbortsAtCurrentStep)
{
  int fds[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds), 0);
  VisualChannel visual;
  auto owner = Session::owner({ test::pooled_keys(2), "", small_params() }, visual.link(Side::joiner));
  ::close(fds[0]);
  channel::FdChannel ch(fds[1]);
  try {
    run_over(*owner, ch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PairingAborted);
    EXPECT_EQ(e.detail(), 2u);
  }
  ::close(fds[1]);
}

TEST(VisualPayload, ParsesRawAndHex)
{
  auto p = VisualPayload::of(test::pooled_keys(0).public_bundle());
  EXPECT_EQ(VisualPayload::parse(p.hash), p);
  auto text = p.to_text() + "\n";
  EXPECT_EQ(VisualPayload::parse(as_view(text)), p);
  EXPECT_THROW(VisualPayload::parse(as_view("abcd")), Error);
}

TEST(InitSecrets, SerializationRoundTrip)
{
  ByteArray<32> seed{};
  seed.fill(5);
  InitSecrets s{ "wifi", SecretKey(seed), small_params(), Bytes{ 1, 2, 3 } };
  auto back = InitSecrets::parse(s.serialize());
  EXPECT_EQ(back.wifi_credentials, "wifi");
  EXPECT_EQ(back.seed, s.seed);
  EXPECT_EQ(back.params.depth, 10u);
  EXPECT_EQ(back.escrow_blob, s.escrow_blob);
}

// Delegation.

TEST(DelegationPairing, Fig3WindowGrantsExactlyCThroughF)
{
  auto tree = owner_tree(3);
  auto cover = tree.minimal_cover({ 2, 6 });
  DelegationPair p(cover, tree.params());
  auto r = p.run();
  ASSERT_TRUE(r.anchor_complete && r.joiner_complete);
  const auto& grant = p.delegatee->delegatee_outcome().grant;
  for (uint64_t e = 0; e < 8; ++e) {
    if (e >= 2 && e < 6)
      EXPECT_EQ(grant.key_for_epoch(e), tree.key_for_epoch(e));
    else
      EXPECT_FALSE(grant.available(e)) << e;
  }
  EXPECT_EQ(p.delegator->delegator_outcome().delegatee_public, test::pooled_keys(3).public_bundle());
  EXPECT_EQ(p.delegator->transcript(), p.delegatee->transcript());
}

TEST(DelegationPairing, EmptyGrantCompletesWithNothingDecryptable)
{
  DelegationPair p({});
  auto r = p.run();
  ASSERT_TRUE(r.anchor_complete && r.joiner_complete);
  const auto& grant = p.delegatee->delegatee_outcome().grant;
  EXPECT_TRUE(grant.empty());
  for (uint64_t e = 0; e < 1024; e += 37)
    EXPECT_FALSE(grant.available(e));
}

TEST(DelegationPairing, TamperedGrantAbortsAtStep6WithNoPartialGrant)
{
  auto tree = owner_tree();
  DelegationPair p(tree.minimal_cover({ 100, 300 }));
  Tamper t(Tag::grant);
  auto r = p.run(&t);
  EXPECT_EQ(r.joiner_abort, 6u);
  EXPECT_FALSE(r.anchor_complete);
  EXPECT_TRUE(p.delegatee->secret_material().empty());
  EXPECT_THROW(p.delegatee->delegatee_outcome(), Error);
}

TEST(DelegationPairing, ScriptedAttacksAbortAtPredictedSteps)
{
  auto tree = owner_tree();
  struct Case
  {
    const char* name;
    std::optional<unsigned> anchor;
    std::optional<unsigned> joiner;
  };
  for (auto c : { Case{ "substitute-anchor-key", std::nullopt, 2u },
                  Case{ "substitute-joiner-key", 4u, std::nullopt },
                  Case{ "relay-without-key", std::nullopt, 5u },
                  Case{ "reflect", std::nullopt, 5u } }) {
    DelegationPair p(tree.minimal_cover({ 0, 10 }));
    auto adversary = make_scripted_adversary(c.name, Protocol::delegation);
    auto r = p.run(adversary.get());
    EXPECT_EQ(r.anchor_abort, c.anchor) << c.name;
    EXPECT_EQ(r.joiner_abort, c.joiner) << c.name;
    EXPECT_TRUE(p.delegatee->secret_material().empty() || !r.joiner_abort) << c.name;
  }
}

TEST(DelegationPairing, RandomGrantsScopeExactly)
{
  std::mt19937_64 rng(13);
  auto tree = owner_tree();
  for (int trial = 0; trial < 10; ++trial) {
    auto range = test::random_range(rng, 1024);
    DelegationPair p(tree.minimal_cover(range));
    ASSERT_TRUE(p.run().joiner_complete);
    const auto& grant = p.delegatee->delegatee_outcome().grant;
    for (uint64_t e = 0; e < 1024; ++e)
      ASSERT_EQ(grant.available(e), range.contains(e)) << e;
  }
}
