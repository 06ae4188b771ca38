#include "cactus/admin.hpp"

#include <chrono>

namespace cactus::admin {

namespace {

constexpr std::string_view signing_context = "cactus-admin-v1";
constexpr uint8_t state_version = 1;

Bytes signing_input(const AdminRequest& r)
{
  Writer w;
  w.raw(signing_context).raw(r.signed_part());
  return w.take();
}

Bytes wiped_private(const DeviceKeys& k)
{
  return k.serialize_private();
}

void write_secret(Writer& w, Bytes secret)
{
  w.bytes32(secret);
  secure_zero(secret.data(), secret.size());
}

DeviceKeys read_keys(Reader& r)
{
  Bytes raw = r.bytes32();
  auto keys = DeviceKeys::parse_private(raw);
  secure_zero(raw.data(), raw.size());
  return keys;
}

keytree::KeyTree read_tree(Reader& r)
{
  Bytes raw = r.bytes32();
  auto tree = keytree::KeyTree::parse(raw);
  secure_zero(raw.data(), raw.size());
  return tree;
}

} // namespace

uint64_t system_clock_ms()
{
  using namespace std::chrono;
  return static_cast<uint64_t>(duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

Bytes AdminRequest::signed_part() const
{
  Writer w;
  w.u8(static_cast<uint8_t>(kind)).u64(timestamp_ms);
  w.u8(range ? 1 : 0);
  if (range)
    w.u64(range->start).u64(range->end);
  w.bytes32(payload);
  return w.take();
}

Bytes AdminRequest::serialize() const
{
  Writer w;
  w.raw(signed_part()).bytes16(signature);
  return w.take();
}

AdminRequest AdminRequest::parse(ByteView data)
{
  Reader r(data);
  AdminRequest req;
  uint8_t kind = r.u8();
  if (kind < 1 || kind > 3)
    throw Error(ErrorCode::Malformed, "unknown admin request kind");
  req.kind = static_cast<RequestKind>(kind);
  req.timestamp_ms = r.u64();
  uint8_t has_range = r.u8();
  if (has_range > 1)
    throw Error(ErrorCode::Malformed, "bad range flag");
  if (has_range) {
    keytree::EpochRange range;
    range.start = r.u64();
    range.end = r.u64();
    req.range = range;
  }
  req.payload = r.bytes32();
  req.signature = r.bytes16();
  r.expect_done();
  return req;
}

AdminRequest AdminRequest::make(RequestKind kind,
                                std::optional<keytree::EpochRange> range,
                                uint64_t timestamp_ms,
                                Bytes payload,
                                const DeviceKeys& signer)
{
  AdminRequest req{ kind, range, timestamp_ms, std::move(payload), {} };
  req.signature = signer.rsa().sign_pss(signing_input(req));
  return req;
}

channel::Frame result_frame(std::optional<ErrorCode> error, std::string_view message)
{
  Writer w;
  w.u8(error ? static_cast<uint8_t>(static_cast<int>(*error) + 1) : 0).raw(message);
  return { static_cast<uint8_t>(Tag::result), w.take() };
}

void check_result(const channel::Frame& frame)
{
  if (frame.tag != static_cast<uint8_t>(Tag::result) || frame.body.empty())
    throw Error(ErrorCode::Malformed, "expected an admin result");
  uint8_t status = frame.body[0];
  if (status == 0)
    return;
  std::string message(frame.body.begin() + 1, frame.body.end());
  throw Error(static_cast<ErrorCode>(status - 1), message.empty() ? "camera refused the request" : message);
}

CameraDevice::CameraDevice(DeviceKeys factory)
  : factory_(std::move(factory))
{
}

void CameraDevice::install(pairing::CameraOutcome outcome)
{
  auto& s = outcome.secrets;
  state_.emplace(State{ std::move(outcome.camera_keys),
                        std::move(outcome.owner_public),
                        keytree::KeyTree::from_seed(s.params, s.seed),
                        escrow::EscrowMaterial::parse(s.escrow_blob),
                        s.wifi_credentials,
                        std::nullopt,
                        std::nullopt });
}

const CameraDevice::State& CameraDevice::state() const
{
  if (!state_)
    throw Error(ErrorCode::NotInitialized, "camera is not initialized");
  return *state_;
}

const DeviceKeys& CameraDevice::camera_keys() const
{
  return state().camera_keys;
}

const PublicKeyBundle& CameraDevice::owner_public() const
{
  return state().owner_public;
}

const keytree::KeyTree& CameraDevice::tree() const
{
  return state().tree;
}

const escrow::EscrowMaterial& CameraDevice::escrow() const
{
  return state().escrow;
}

const std::string& CameraDevice::wifi_credentials() const
{
  return state().wifi;
}

std::optional<uint64_t> CameraDevice::last_request_ms() const
{
  return state().last_request_ms;
}

void CameraDevice::advance_to(uint64_t epoch)
{
  state();
  state_->tree = state_->tree.camera_frontier(epoch);
}

void CameraDevice::record_frame(uint64_t t_ms)
{
  state();
  state_->last_frame_ms = t_ms;
}

void CameraDevice::apply(const AdminRequest& req, uint64_t now_ms)
{
  if (!state_) {
    if (req.kind == RequestKind::factory_reset)
      throw Error(ErrorCode::AlreadyReset, "camera is already uninitialized");
    throw Error(ErrorCode::NotInitialized, "camera is not initialized");
  }
  auto& s = *state_;
  if (!crypto::rsa_pss_verify(s.owner_public.rsa_spki, signing_input(req), req.signature))
    throw Error(ErrorCode::Rejected, "request is not signed by the owner");
  uint64_t lo = now_ms > replay_window_ms ? now_ms - replay_window_ms : 0;
  if (req.timestamp_ms < lo || req.timestamp_ms > now_ms + replay_window_ms)
    throw Error(ErrorCode::ReplayRejected, "request timestamp outside the freshness window");
  if (s.last_request_ms && req.timestamp_ms <= *s.last_request_ms)
    throw Error(ErrorCode::ReplayRejected, "request is not newer than the last accepted one");

  switch (req.kind) {
    case RequestKind::delete_range:
      if (!req.range)
        throw Error(ErrorCode::Rejected, "delete request without a range");
      s.tree.puncture(*req.range);
      if (!req.payload.empty())
        s.escrow.enc_key_material = req.payload;
      break;
    case RequestKind::update_key_material:
      if (req.payload.empty())
        throw Error(ErrorCode::Rejected, "update without key material");
      s.escrow.enc_key_material = req.payload;
      break;
    case RequestKind::factory_reset:
      s.tree.clear();
      state_.reset();
      return;
  }
  s.last_request_ms = req.timestamp_ms;
}

channel::Frame CameraDevice::handle(const channel::Frame& frame, uint64_t now_ms)
{
  try {
    switch (static_cast<Tag>(frame.tag)) {
      case Tag::escrow_request:
        return { static_cast<uint8_t>(Tag::escrow_material), escrow().serialize() };
      case Tag::request:
        apply(AdminRequest::parse(frame.body), now_ms);
        return result_frame(std::nullopt);
      default: break;
    }
    return result_frame(ErrorCode::Malformed, "unknown admin message");
  } catch (const Error& e) {
    return result_frame(e.code(), e.what());
  }
}

Bytes CameraDevice::serialize() const
{
  Writer w;
  w.raw("CCAM").u8(state_version);
  write_secret(w, wiped_private(factory_));
  w.u8(state_ ? 1 : 0);
  if (state_) {
    write_secret(w, wiped_private(state_->camera_keys));
    w.bytes32(state_->owner_public.serialize());
    write_secret(w, state_->tree.serialize());
    w.bytes32(state_->escrow.serialize());
    w.bytes16(as_view(state_->wifi));
    w.u8(state_->last_request_ms ? 1 : 0).u64(state_->last_request_ms.value_or(0));
    w.u8(state_->last_frame_ms ? 1 : 0).u64(state_->last_frame_ms.value_or(0));
  }
  return w.take();
}

CameraDevice CameraDevice::parse(ByteView data)
{
  Reader r(data);
  r.expect_magic("CCAM");
  if (r.u8() != state_version)
    throw Error(ErrorCode::Malformed, "unsupported camera state version");
  CameraDevice cam(read_keys(r));
  if (r.u8()) {
    auto keys = read_keys(r);
    auto owner = PublicKeyBundle::parse(r.bytes32());
    auto tree = read_tree(r);
    auto esc = escrow::EscrowMaterial::parse(r.bytes32());
    Bytes wifi = r.bytes16();
    bool has_last = r.u8() != 0;
    uint64_t last = r.u64();
    bool has_frame = r.u8() != 0;
    uint64_t frame = r.u64();
    cam.state_.emplace(State{ std::move(keys),
                              std::move(owner),
                              std::move(tree),
                              std::move(esc),
                              std::string(wifi.begin(), wifi.end()),
                              has_last ? std::optional<uint64_t>(last) : std::nullopt,
                              has_frame ? std::optional<uint64_t>(frame) : std::nullopt });
  }
  r.expect_done();
  return cam;
}

OwnerDevice OwnerDevice::from_pairing(const pairing::OwnerOutcome& outcome)
{
  return OwnerDevice(outcome.owner_keys,
                     outcome.camera_public,
                     keytree::KeyTree::from_seed(outcome.secrets.params, outcome.secrets.seed));
}

OwnerDevice OwnerDevice::recover(const escrow::EscrowMaterial& material, const escrow::Passphrase& passphrase)
{
  auto opened = escrow::open_escrow(material, passphrase);
  return OwnerDevice(std::move(opened.owner_keys), std::move(opened.camera_public), std::move(opened.tree));
}

const PublicKeyBundle& OwnerDevice::camera_public() const
{
  if (!camera_public_)
    throw Error(ErrorCode::NotInitialized, "owner is not paired with a camera");
  return *camera_public_;
}

AdminRequest OwnerDevice::delete_videos(const keytree::EpochRange& range, uint64_t now_ms)
{
  camera_public();
  tree_.puncture(range);
  return AdminRequest::make(RequestKind::delete_range,
                            range,
                            now_ms,
                            escrow::seal_key_material(keys_.public_bundle(), tree_),
                            keys_);
}

AdminRequest OwnerDevice::update_key_material(uint64_t now_ms) const
{
  camera_public();
  return AdminRequest::make(RequestKind::update_key_material,
                            std::nullopt,
                            now_ms,
                            escrow::seal_key_material(keys_.public_bundle(), tree_),
                            keys_);
}

AdminRequest OwnerDevice::factory_reset(uint64_t now_ms)
{
  auto req = AdminRequest::make(RequestKind::factory_reset, std::nullopt, now_ms, {}, keys_);
  tree_.clear();
  camera_public_.reset();
  return req;
}

Bytes OwnerDevice::serialize() const
{
  Writer w;
  w.raw("COWN").u8(state_version);
  write_secret(w, wiped_private(keys_));
  w.u8(camera_public_ ? 1 : 0);
  if (camera_public_)
    w.bytes32(camera_public_->serialize());
  write_secret(w, tree_.serialize());
  return w.take();
}

OwnerDevice OwnerDevice::parse(ByteView data)
{
  Reader r(data);
  r.expect_magic("COWN");
  if (r.u8() != state_version)
    throw Error(ErrorCode::Malformed, "unsupported owner state version");
  auto keys = read_keys(r);
  std::optional<PublicKeyBundle> camera;
  if (r.u8())
    camera = PublicKeyBundle::parse(r.bytes32());
  auto tree = read_tree(r);
  r.expect_done();
  return OwnerDevice(std::move(keys), std::move(camera), std::move(tree));
}

Bytes Grant::serialize() const
{
  Writer w;
  w.raw("CGRT").u8(state_version).bytes32(camera_public.serialize());
  write_secret(w, tree.serialize());
  return w.take();
}

Grant Grant::parse(ByteView data)
{
  Reader r(data);
  r.expect_magic("CGRT");
  if (r.u8() != state_version)
    throw Error(ErrorCode::Malformed, "unsupported grant version");
  auto camera = PublicKeyBundle::parse(r.bytes32());
  auto tree = read_tree(r);
  r.expect_done();
  return { std::move(camera), std::move(tree) };
}

escrow::EscrowMaterial fetch_escrow(channel::FdChannel& channel)
{
  channel.send({ static_cast<uint8_t>(Tag::escrow_request), {} });
  auto reply = channel.receive();
  if (!reply)
    throw Error(ErrorCode::Io, "camera closed the channel");
  if (reply->tag != static_cast<uint8_t>(Tag::escrow_material)) {
    check_result(*reply);
    throw Error(ErrorCode::Malformed, "unexpected reply to escrow request");
  }
  return escrow::EscrowMaterial::parse(reply->body);
}

OwnerDevice recover_over(channel::FdChannel& channel, const escrow::Passphrase& passphrase)
{
  return OwnerDevice::recover(fetch_escrow(channel), passphrase);
}

} // namespace cactus::admin
