#include "cactus/pairing.hpp"

#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cactus::pairing {

namespace {

constexpr std::string_view ctx_camera_key = "cactus-pair-camera-key";
constexpr std::string_view ctx_init_secrets = "cactus-pair-init-secrets";
constexpr std::string_view ctx_grant = "cactus-delegate-grant";

Side side_of(Role role)
{
  return role == Role::camera || role == Role::delegator ? Side::anchor : Side::joiner;
}

Protocol protocol_of(Role role)
{
  return role == Role::camera || role == Role::owner ? Protocol::initialization : Protocol::delegation;
}

void append(Bytes& out, ByteView data)
{
  out.insert(out.end(), data.begin(), data.end());
}

std::string trim(std::string s)
{
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

} // namespace

VisualPayload VisualPayload::parse(ByteView data)
{
  VisualPayload p;
  if (data.size() == p.hash.size()) {
    std::copy(data.begin(), data.end(), p.hash.begin());
    return p;
  }
  std::string text = trim(std::string(data.begin(), data.end()));
  Bytes raw = from_hex(text);
  if (raw.size() != p.hash.size())
    throw Error(ErrorCode::Malformed, "visual payload must be 32 bytes");
  std::copy(raw.begin(), raw.end(), p.hash.begin());
  return p;
}

void FileVisualLink::show(const VisualPayload& payload)
{
  std::string tmp = show_path_ + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << payload.to_text() << "\n";
    if (!out)
      throw Error(ErrorCode::Io, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, show_path_);
}

std::optional<VisualPayload> FileVisualLink::scan()
{
  std::ifstream in(scan_path_, std::ios::binary);
  if (!in)
    return std::nullopt;
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return VisualPayload::parse(data);
  } catch (const Error&) {
    return std::nullopt;
  }
}

Bytes InitSecrets::serialize() const
{
  Writer w;
  w.raw("CIS1").bytes16(as_view(wifi_credentials)).raw(seed.view());
  w.u8(static_cast<uint8_t>(params.depth)).u32(static_cast<uint32_t>(params.epoch_seconds)).u64(params.t0_ms);
  w.bytes32(escrow_blob);
  return w.take();
}

InitSecrets InitSecrets::parse(ByteView data)
{
  Reader r(data);
  r.expect_magic("CIS1");
  InitSecrets s;
  Bytes wifi = r.bytes16();
  s.wifi_credentials.assign(wifi.begin(), wifi.end());
  s.seed = SecretKey(r.array<32>());
  s.params.depth = r.u8();
  s.params.epoch_seconds = r.u32();
  s.params.t0_ms = r.u64();
  s.params.validate();
  s.escrow_blob = r.bytes32();
  r.expect_done();
  return s;
}

std::string_view proof_label(Protocol protocol, Side from)
{
  if (protocol == Protocol::initialization)
    return from == Side::joiner ? "owner-to-camera" : "camera-to-owner";
  return from == Side::joiner ? "delegatee-to-delegator" : "delegator-to-delegatee";
}

SecretKey shared_secret(Protocol protocol,
                        Side own_side,
                        const crypto::X25519Key& own,
                        const ByteArray<32>& anchor_dh_public,
                        const ByteArray<32>& joiner_dh_public)
{
  SecretKey raw = own.agree(own_side == Side::anchor ? joiner_dh_public : anchor_dh_public);
  Bytes info;
  append(info, as_view(protocol == Protocol::initialization ? "init" : "delegate"));
  append(info, anchor_dh_public);
  append(info, joiner_dh_public);
  Bytes okm = crypto::hkdf_sha256(raw.view(), as_view("cactus-pairing-v1"), info, SecretKey::size);
  SecretKey ss(okm);
  secure_zero(okm.data(), okm.size());
  return ss;
}

ByteArray<32> knowledge_proof(const SecretKey& ss, ByteView nonce, std::string_view label)
{
  crypto::HmacSha256 mac(ss.view());
  mac.update(nonce).update(as_view(label));
  return mac.finish();
}

struct Session::Data
{
  const DeviceKeys* borrowed = nullptr;
  std::optional<DeviceKeys> own;
  std::optional<DeviceKeys> camera_keys;

  std::string wifi;
  keytree::TreeParams params;
  std::optional<SecretKey> seed;
  std::vector<keytree::NodeKey> grant;

  std::optional<PublicKeyBundle> camera_public;

  std::optional<PublicKeyBundle> peer;
  std::optional<SecretKey> ss;
  ByteArray<32> own_nonce{};
  ByteArray<32> peer_nonce{};
  size_t received_at = 0;

  std::optional<CameraOutcome> camera_out;
  std::optional<OwnerOutcome> owner_out;
  std::optional<DelegateeOutcome> delegatee_out;
  std::optional<DelegatorOutcome> delegator_out;

  ~Data()
  {
    secure_zero(own_nonce.data(), own_nonce.size());
    secure_zero(peer_nonce.data(), peer_nonce.size());
  }
};

Session::Session(Role role, VisualLink& visual, Options options)
  : role_(role)
  , visual_(&visual)
  , options_(options)
  , d_(std::make_unique<Data>())
{
}

Session::~Session() = default;

std::unique_ptr<Session> Session::camera(CameraSetup setup, VisualLink& visual, Options options)
{
  if (!setup.factory_keys)
    throw Error(ErrorCode::InvalidArgument, "camera session needs the factory keys");
  std::unique_ptr<Session> s(new Session(Role::camera, visual, options));
  s->d_->borrowed = setup.factory_keys;
  s->d_->camera_keys = std::move(setup.camera_keys);
  return s;
}

std::unique_ptr<Session> Session::owner(OwnerSetup setup, VisualLink& visual, Options options)
{
  setup.params.validate();
  std::unique_ptr<Session> s(new Session(Role::owner, visual, options));
  s->d_->own = std::move(setup.owner_keys);
  s->d_->wifi = std::move(setup.wifi_credentials);
  s->d_->params = setup.params;
  s->d_->seed = std::move(setup.seed);
  return s;
}

std::unique_ptr<Session> Session::delegator(DelegatorSetup setup, VisualLink& visual, Options options)
{
  if (!setup.owner_keys)
    throw Error(ErrorCode::InvalidArgument, "delegator session needs the owner keys");
  setup.params.validate();
  std::unique_ptr<Session> s(new Session(Role::delegator, visual, options));
  s->d_->borrowed = setup.owner_keys;
  s->d_->params = setup.params;
  s->d_->grant = std::move(setup.grant);
  s->d_->camera_public = std::move(setup.camera_public);
  return s;
}

std::unique_ptr<Session> Session::delegatee(DelegateeSetup setup, VisualLink& visual, Options options)
{
  std::unique_ptr<Session> s(new Session(Role::delegatee, visual, options));
  s->d_->own = std::move(setup.keys);
  return s;
}

Side Session::side() const
{
  return side_of(role_);
}

Protocol Session::protocol() const
{
  return protocol_of(role_);
}

unsigned Session::step() const
{
  switch (state_) {
    case State::idle: return 1;
    case State::await_anchor_key: return 2;
    case State::await_joiner_key: return 4;
    case State::await_joiner_nonce:
    case State::await_anchor_nonce:
    case State::await_joiner_proof:
    case State::await_anchor_proof: return 5;
    case State::await_step6: return 6;
    case State::await_step7: return 7;
    case State::await_ack: return protocol() == Protocol::initialization ? 7 : 6;
    case State::done:
    case State::aborted: break;
  }
  return abort_step_.value_or(protocol() == Protocol::initialization ? 7 : 6);
}

void Session::abort(unsigned step, const std::string& why)
{
  d_ = std::make_unique<Data>();
  state_ = State::aborted;
  abort_step_ = step;
  throw Error(ErrorCode::PairingAborted, "pairing aborted at step " + std::to_string(step) + ": " + why, step);
}

void Session::record(const Frame& frame)
{
  append(transcript_, frame.encode());
}

std::vector<Frame> Session::send(std::vector<Frame> frames)
{
  for (const auto& f : frames)
    record(f);
  return frames;
}

const DeviceKeys& Session::identity()
{
  if (d_->borrowed)
    return *d_->borrowed;
  if (!d_->own)
    d_->own = DeviceKeys::generate();
  return *d_->own;
}

ByteArray<32> Session::ack_tag(size_t transcript_length) const
{
  auto h = crypto::sha256(ByteView(transcript_).first(transcript_length));
  crypto::HmacSha256 mac(d_->ss->view());
  mac.update(as_view("ack")).update(h);
  return mac.finish();
}

std::vector<Frame> Session::start()
{
  if (state_ != State::idle)
    throw Error(ErrorCode::InvalidArgument, "session already started");
  if (side() == Side::joiner) {
    state_ = State::await_anchor_key;
    return {};
  }
  auto bundle = identity().public_bundle();
  visual_->show(VisualPayload::of(bundle));
  state_ = State::await_joiner_key;
  return send({ make_frame(Tag::anchor_key, bundle.serialize()) });
}

std::vector<Frame> Session::handle(const Frame& frame)
{
  if (state_ == State::done)
    return {};
  if (state_ == State::aborted)
    throw Error(ErrorCode::PairingAborted, "session already aborted", abort_step_);
  if (state_ == State::idle)
    abort(1, "message before start");
  d_->received_at = transcript_.size();
  record(frame);
  return dispatch(frame);
}

std::vector<Frame> Session::dispatch(const Frame& frame)
{
  auto expect = [&](Tag tag) {
    if (frame.tag != static_cast<uint8_t>(tag))
      abort(step(), "unexpected message tag " + std::to_string(frame.tag));
  };
  switch (state_) {
    case State::await_anchor_key: expect(Tag::anchor_key); return on_anchor_key(frame);
    case State::await_joiner_key: expect(Tag::joiner_key); return on_joiner_key(frame);
    case State::await_joiner_nonce: expect(Tag::joiner_nonce); return on_joiner_nonce(frame);
    case State::await_anchor_nonce: expect(Tag::anchor_nonce); return on_anchor_nonce(frame);
    case State::await_joiner_proof: expect(Tag::joiner_proof); return on_joiner_proof(frame);
    case State::await_anchor_proof: expect(Tag::anchor_proof); return on_anchor_proof(frame);
    case State::await_step6:
      expect(role_ == Role::owner ? Tag::camera_key : Tag::grant);
      return on_step6(frame);
    case State::await_step7: expect(Tag::init_secrets); return on_step7(frame);
    case State::await_ack: expect(Tag::ack); return on_ack(frame);
    default: break;
  }
  abort(step(), "message in a terminal state");
}

std::vector<Frame> Session::on_anchor_key(const Frame& frame)
{
  PublicKeyBundle peer;
  try {
    peer = PublicKeyBundle::parse(frame.body);
  } catch (const Error&) {
    abort(2, "malformed public key");
  }
  if (options_.check_visual) {
    auto seen = visual_->scan();
    if (!seen)
      abort(2, "nothing scanned on the visual channel");
    if (!constant_time_equal(seen->hash, peer.fingerprint()))
      abort(2, "public key does not match the scanned hash");
  }
  d_->peer = peer;

  auto bundle = identity().public_bundle();
  d_->ss = shared_secret(protocol(), Side::joiner, identity().dh(), peer.x25519, bundle.x25519);
  visual_->show(VisualPayload::of(bundle));
  d_->own_nonce = crypto::random_array<32>();
  state_ = State::await_anchor_nonce;
  return send({ make_frame(Tag::joiner_key, bundle.serialize()),
                make_frame(Tag::joiner_nonce, Bytes(d_->own_nonce.begin(), d_->own_nonce.end())) });
}

std::vector<Frame> Session::on_joiner_key(const Frame& frame)
{
  PublicKeyBundle peer;
  try {
    peer = PublicKeyBundle::parse(frame.body);
  } catch (const Error&) {
    abort(3, "malformed public key");
  }
  if (options_.check_visual) {
    auto seen = visual_->scan();
    if (!seen)
      abort(4, "nothing scanned on the visual channel");
    if (!constant_time_equal(seen->hash, peer.fingerprint()))
      abort(4, "public key does not match the scanned hash");
  }
  d_->peer = peer;
  d_->ss = shared_secret(protocol(), Side::anchor, identity().dh(), identity().public_bundle().x25519, peer.x25519);
  state_ = State::await_joiner_nonce;
  return {};
}

std::vector<Frame> Session::on_joiner_nonce(const Frame& frame)
{
  if (frame.body.size() != d_->peer_nonce.size())
    abort(5, "malformed challenge");
  std::copy(frame.body.begin(), frame.body.end(), d_->peer_nonce.begin());
  d_->own_nonce = crypto::random_array<32>();
  state_ = State::await_joiner_proof;
  return send({ make_frame(Tag::anchor_nonce, Bytes(d_->own_nonce.begin(), d_->own_nonce.end())) });
}

std::vector<Frame> Session::on_anchor_nonce(const Frame& frame)
{
  if (frame.body.size() != d_->peer_nonce.size())
    abort(5, "malformed challenge");
  std::copy(frame.body.begin(), frame.body.end(), d_->peer_nonce.begin());
  auto proof = knowledge_proof(*d_->ss, d_->peer_nonce, proof_label(protocol(), Side::joiner));
  state_ = State::await_anchor_proof;
  return send({ make_frame(Tag::joiner_proof, Bytes(proof.begin(), proof.end())) });
}

std::vector<Frame> Session::on_joiner_proof(const Frame& frame)
{
  auto expected = knowledge_proof(*d_->ss, d_->own_nonce, proof_label(protocol(), Side::joiner));
  if (!constant_time_equal(expected, frame.body))
    abort(5, "peer does not know the private key it advertised");
  auto proof = knowledge_proof(*d_->ss, d_->peer_nonce, proof_label(protocol(), Side::anchor));
  std::vector<Frame> out{ make_frame(Tag::anchor_proof, Bytes(proof.begin(), proof.end())) };

  if (role_ == Role::camera) {
    if (!d_->camera_keys)
      d_->camera_keys = DeviceKeys::generate();
    auto sealed = seal_signed(*d_->peer, *d_->borrowed, ctx_camera_key, d_->camera_keys->public_bundle().serialize());
    out.push_back(make_frame(Tag::camera_key, std::move(sealed)));
    state_ = State::await_step7;
  } else {
    auto tree = keytree::KeyTree::from_nodes(d_->params, d_->grant);
    Writer w;
    w.bytes32(d_->camera_public ? d_->camera_public->serialize() : Bytes{}).raw(tree.serialize());
    Bytes plain = w.take();
    auto sealed = seal_signed(*d_->peer, *d_->borrowed, ctx_grant, plain);
    secure_zero(plain.data(), plain.size());
    out.push_back(make_frame(Tag::grant, std::move(sealed)));
    state_ = State::await_ack;
  }
  return send(std::move(out));
}

std::vector<Frame> Session::on_anchor_proof(const Frame& frame)
{
  auto expected = knowledge_proof(*d_->ss, d_->own_nonce, proof_label(protocol(), Side::anchor));
  if (!constant_time_equal(expected, frame.body))
    abort(5, "peer does not know the private key it advertised");
  state_ = State::await_step6;
  return {};
}

std::vector<Frame> Session::on_step6(const Frame& frame)
{
  if (role_ == Role::owner) {
    PublicKeyBundle camera_public;
    try {
      Bytes plain = open_signed(*d_->own, *d_->peer, ctx_camera_key, frame.body);
      camera_public = PublicKeyBundle::parse(plain);
    } catch (const Error& e) {
      abort(6, e.what());
    }

    if (!d_->seed)
      d_->seed = SecretKey(crypto::random_array<32>());
    auto tree = keytree::KeyTree::from_seed(d_->params, *d_->seed);
    auto built = escrow::build_escrow(*d_->own, tree, camera_public);
    InitSecrets secrets{ d_->wifi, *d_->seed, d_->params, built.material.serialize() };
    Bytes plain = secrets.serialize();
    auto sealed = seal_signed(camera_public, *d_->own, ctx_init_secrets, plain);
    secure_zero(plain.data(), plain.size());
    d_->owner_out.emplace(OwnerOutcome{ *d_->own, *d_->peer, camera_public, std::move(secrets), built.passphrase });
    state_ = State::await_ack;
    return send({ make_frame(Tag::init_secrets, std::move(sealed)) });
  }

  std::optional<keytree::KeyTree> grant;
  std::optional<PublicKeyBundle> camera_public;
  try {
    Bytes plain = open_signed(*d_->own, *d_->peer, ctx_grant, frame.body);
    Reader r(plain);
    Bytes camera = r.bytes32();
    if (!camera.empty())
      camera_public = PublicKeyBundle::parse(camera);
    grant = keytree::KeyTree::parse(r.raw(r.remaining()));
    secure_zero(plain.data(), plain.size());
  } catch (const Error& e) {
    abort(6, e.what());
  }
  auto tag = ack_tag(transcript_.size());
  d_->delegatee_out.emplace(DelegateeOutcome{ *d_->own, *d_->peer, std::move(*grant), std::move(camera_public) });
  state_ = State::done;
  return send({ make_frame(Tag::ack, Bytes(tag.begin(), tag.end())) });
}

std::vector<Frame> Session::on_step7(const Frame& frame)
{
  std::optional<InitSecrets> secrets;
  try {
    Bytes plain = open_signed(*d_->camera_keys, *d_->peer, ctx_init_secrets, frame.body);
    secrets = InitSecrets::parse(plain);
    secure_zero(plain.data(), plain.size());
  } catch (const Error& e) {
    abort(7, e.what());
  }
  auto tag = ack_tag(transcript_.size());
  d_->camera_out.emplace(CameraOutcome{ *d_->camera_keys, *d_->peer, std::move(*secrets) });
  state_ = State::done;
  return send({ make_frame(Tag::ack, Bytes(tag.begin(), tag.end())) });
}

std::vector<Frame> Session::on_ack(const Frame& frame)
{
  if (!constant_time_equal(ack_tag(d_->received_at), frame.body))
    abort(step(), "acknowledgement does not match the transcript");
  if (role_ == Role::delegator)
    d_->delegator_out.emplace(DelegatorOutcome{ *d_->peer });
  state_ = State::done;
  return {};
}

Bytes Session::secret_material() const
{
  Bytes out;
  auto add_keys = [&](const std::optional<DeviceKeys>& k) {
    if (k) {
      Bytes priv = k->serialize_private();
      append(out, priv);
      secure_zero(priv.data(), priv.size());
    }
  };
  add_keys(d_->own);
  add_keys(d_->camera_keys);
  if (d_->ss)
    append(out, d_->ss->view());
  if (d_->seed)
    append(out, d_->seed->view());
  for (const auto& n : d_->grant)
    append(out, n.key.view());
  if (d_->camera_out) {
    append(out, d_->camera_out->secrets.seed.view());
  }
  if (d_->owner_out) {
    append(out, d_->owner_out->secrets.seed.view());
    append(out, d_->owner_out->passphrase.key());
  }
  if (d_->delegatee_out) {
    for (const auto& n : d_->delegatee_out->grant.retained())
      append(out, n.key.view());
  }
  return out;
}

namespace {

template<typename T>
const T& outcome_or_throw(const std::optional<T>& out, bool complete)
{
  if (!complete || !out)
    throw Error(ErrorCode::InvalidArgument, "pairing outcome not available");
  return *out;
}

} // namespace

const CameraOutcome& Session::camera_outcome() const
{
  return outcome_or_throw(d_->camera_out, complete());
}

const OwnerOutcome& Session::owner_outcome() const
{
  return outcome_or_throw(d_->owner_out, complete());
}

const DelegateeOutcome& Session::delegatee_outcome() const
{
  return outcome_or_throw(d_->delegatee_out, complete());
}

const DelegatorOutcome& Session::delegator_outcome() const
{
  return outcome_or_throw(d_->delegator_out, complete());
}

CameraOutcome Session::take_camera_outcome()
{
  outcome_or_throw(d_->camera_out, complete());
  auto out = std::move(*d_->camera_out);
  d_ = std::make_unique<Data>();
  return out;
}

OwnerOutcome Session::take_owner_outcome()
{
  outcome_or_throw(d_->owner_out, complete());
  auto out = std::move(*d_->owner_out);
  d_ = std::make_unique<Data>();
  return out;
}

DelegateeOutcome Session::take_delegatee_outcome()
{
  outcome_or_throw(d_->delegatee_out, complete());
  auto out = std::move(*d_->delegatee_out);
  d_ = std::make_unique<Data>();
  return out;
}

RunResult run(Session& anchor, Session& joiner, Adversary* adversary)
{
  std::deque<Adversary::Delivery> queue;
  auto route = [&](Side from, std::vector<Frame> frames) {
    for (auto& f : frames) {
      if (adversary) {
        for (auto& d : adversary->intercept(from, f))
          queue.push_back(std::move(d));
      } else {
        queue.push_back({ other(from), std::move(f) });
      }
    }
  };

  if (adversary)
    for (auto& d : adversary->begin())
      queue.push_back(std::move(d));
  route(Side::anchor, anchor.start());
  route(Side::joiner, joiner.start());

  RunResult result;
  // Bounded so a misbehaving adversary cannot loop forever.
  constexpr size_t max_deliveries = 10'000;
  while (!queue.empty() && result.delivered < max_deliveries) {
    auto d = std::move(queue.front());
    queue.pop_front();
    Session& target = d.to == Side::anchor ? anchor : joiner;
    if (target.complete() || target.aborted())
      continue;
    ++result.delivered;
    try {
      route(d.to, target.handle(d.frame));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PairingAborted)
        throw;
    }
  }
  result.anchor_complete = anchor.complete();
  result.joiner_complete = joiner.complete();
  result.anchor_abort = anchor.abort_step();
  result.joiner_abort = joiner.abort_step();
  return result;
}

void run_over(Session& session, channel::FdChannel& channel, Adversary* adversary)
{
  Side own = session.side();
  std::deque<Adversary::Delivery> local;
  auto dispatch = [&](std::vector<Adversary::Delivery> deliveries) {
    for (auto& d : deliveries) {
      if (d.to == own)
        local.push_back(std::move(d));
      else
        channel.send(d.frame);
    }
  };
  auto route = [&](Side from, std::vector<Frame> frames) {
    for (auto& f : frames) {
      if (adversary)
        dispatch(adversary->intercept(from, f));
      else if (from == own)
        channel.send(f);
      else
        local.push_back({ own, std::move(f) });
    }
  };
  // Drains frames addressed to this side; the session may answer with more.
  auto pump = [&] {
    while (!local.empty() && !session.complete()) {
      auto d = std::move(local.front());
      local.pop_front();
      route(own, session.handle(d.frame));
    }
  };

  if (adversary)
    dispatch(adversary->begin());
  route(own, session.start());
  pump();
  while (!session.complete()) {
    std::optional<Frame> frame;
    try {
      frame = channel.receive();
    } catch (const Error& e) {
      session.cancel(e.what());
    }
    if (!frame)
      session.cancel("peer closed the channel");
    route(other(own), { std::move(*frame) });
    pump();
  }
}

} // namespace cactus::pairing
