#include "cactus/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

#include "cactus/camera.hpp"
#include "cactus/crypto.hpp"
#include "cactus/framecrypto.hpp"

namespace cactus::bench {

using Clock = std::chrono::steady_clock;

double LinkModel::delay_ms(size_t bytes) const
{
  double transfer = mbit_per_s > 0 ? static_cast<double>(bytes) * 8.0 / (mbit_per_s * 1000.0) : 0;
  return rtt_ms + transfer;
}

namespace {

void pause(double ms)
{
  if (ms > 0)
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

size_t listing_bytes(const std::vector<storage::Blob>& blobs)
{
  size_t n = 0;
  for (const auto& b : blobs)
    n += 20 + b.data.size();
  return n;
}

class Samples
{
public:
  void add(Clock::duration d) { values_.push_back(std::chrono::duration<double, std::milli>(d).count()); }

  double mean() const
  {
    double s = 0;
    for (double v : values_)
      s += v;
    return values_.empty() ? 0 : s / static_cast<double>(values_.size());
  }
  double sigma() const
  {
    if (values_.empty())
      return 0;
    double m = mean();
    double s = 0;
    for (double v : values_)
      s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values_.size()));
  }

private:
  std::vector<double> values_;
};

template <typename F>
auto timed(Samples& into, F&& f)
{
  auto start = Clock::now();
  if constexpr (std::is_void_v<decltype(f())>) {
    f();
    into.add(Clock::now() - start);
  } else {
    auto result = f();
    into.add(Clock::now() - start);
    return result;
  }
}

} // namespace

ShapedStore::ShapedStore(std::shared_ptr<storage::BlobStore> inner, LinkModel link)
  : inner_(std::move(inner))
  , link_(link)
{
}

void ShapedStore::put(const storage::BlobKey& key, ByteView data)
{
  pause(link_.delay_ms(data.size()));
  inner_->put(key, data);
}

std::vector<storage::Blob> ShapedStore::get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to)
{
  auto out = inner_->get_range(camera_id, from, to);
  pause(link_.delay_ms(listing_bytes(out)));
  return out;
}

std::vector<storage::Blob> ShapedStore::get_since(const ByteArray<32>& camera_id, uint64_t from, uint64_t to, uint64_t since)
{
  auto out = inner_->get_since(camera_id, from, to, since);
  pause(link_.delay_ms(listing_bytes(out)));
  return out;
}

const Row& Report::row(std::string_view device, std::string_view operation) const
{
  for (const auto& r : rows)
    if (r.device == device && r.operation == operation)
      return r;
  throw Error(ErrorCode::InvalidArgument, "no such row: " + std::string(operation));
}

std::string Report::render() const
{
  std::string out;
  char line[160];
  char link[64] = "none";
  if (config.link.active())
    std::snprintf(link, sizeof(link), "%gms rtt, %g Mbit/s", config.link.rtt_ms, config.link.mbit_per_s);
  std::snprintf(line, sizeof(line), "frames=%zu frame_bytes=%zu content=%s depth=%u epoch=%us fps=%g link=%s\n",
                config.frames, config.frame_bytes, config.zero_frames ? "zero" : "random", config.params.depth,
                config.params.epoch_seconds, config.frame_rate, link);
  out += line;
  std::snprintf(line, sizeof(line), "%-11s %-24s %12s %12s\n", "Device", "Operation", "Delay (ms)", "sigma (ms)");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-11s %-24s %12.4f %12.4f\n", r.device.c_str(), r.operation.c_str(), r.mean_ms, r.sigma_ms);
    out += line;
  }
  std::snprintf(line, sizeof(line), "camera key extraction: %.5f ms within an epoch, %.5f ms at %zu epoch boundaries\n",
                key_within_epoch_ms, key_at_boundary_ms, epoch_boundaries);
  out += line;
  return out;
}

Report bench_run(const BenchConfig& config)
{
  if (config.frames == 0 || config.frame_rate <= 0)
    throw Error(ErrorCode::InvalidArgument, "bench needs frames and a frame rate");
  config.params.validate();

  std::unique_ptr<storage::Server> server;
  std::string url = config.storage_url;
  if (url.empty()) {
    server = std::make_unique<storage::Server>(std::make_shared<storage::MemoryStore>());
    url = "http://127.0.0.1:" + std::to_string(server->bind("127.0.0.1", 0));
    server->start();
  }
  std::shared_ptr<storage::BlobStore> store = std::make_shared<storage::HttpStore>(url);
  if (config.link.active())
    store = std::make_shared<ShapedStore>(store, config.link);

  auto seed = SecretKey(crypto::random_array<32>());
  auto camera_tree = keytree::KeyTree::from_seed(config.params, seed);
  auto viewer_tree = keytree::KeyTree::from_seed(config.params, seed);
  framecrypto::CameraIdentity camera(std::make_shared<framecrypto::Ed25519Signer>());
  auto camera_public = camera.public_key();
  const auto& verifier = framecrypto::default_verifier();
  framecrypto::EpochKeyCache camera_keys(camera_tree);
  framecrypto::EpochKeyCache viewer_keys(viewer_tree);

  Samples key_extract, encrypt, hash, sign, upload;
  Samples download, viewer_key, decrypt, hash_verify, sig_verify;
  Samples key_within, key_boundary;
  size_t boundaries = 0;
  std::optional<uint64_t> last_epoch;
  // Each run signs with a fresh key, so its camera id never collides with
  // an earlier run on a shared server.
  uint64_t t0 = config.params.t0_ms;

  for (size_t i = 0; i < config.frames; ++i) {
    uint64_t t = t0 + static_cast<uint64_t>(std::llround(static_cast<double>(i) * 1000.0 / config.frame_rate));
    Bytes payload = config.zero_frames ? Bytes(config.frame_bytes, 0) : camera::synthetic_frame("bench", t, config.frame_bytes);
    uint64_t epoch = keytree::epoch_of(t, config.params);

    // Camera.
    auto k0 = Clock::now();
    const SecretKey& k = camera_keys.key_for_time(t);
    auto k_elapsed = Clock::now() - k0;
    key_extract.add(k_elapsed);
    bool boundary = last_epoch.has_value() && *last_epoch != epoch;
    (boundary || !last_epoch ? key_boundary : key_within).add(k_elapsed);
    boundaries += boundary;
    last_epoch = epoch;

    framecrypto::FrameRecord rec;
    rec.t_ms = t;
    rec.iv = crypto::random_array<framecrypto::iv_size>();
    rec.ciphertext = timed(encrypt, [&] { return framecrypto::seal_payload(k, rec.iv, payload); });
    rec.mac = timed(hash, [&] { return framecrypto::frame_mac(k, rec.ciphertext, rec.iv, t); });
    framecrypto::BlockManifest block{ camera.camera_id(), epoch, { rec }, {} };
    block.signature = timed(sign, [&] { return camera.signer().sign(framecrypto::block_signing_input(block.frames)); });
    storage::BlobKey key{ camera.camera_id(), epoch, t };
    timed(upload, [&] { store->put(key, block.serialize()); });

    // Viewer.
    auto got = timed(download, [&] {
      auto blobs = store->get_since(camera.camera_id(), epoch, epoch + 1, t);
      if (blobs.size() != 1 || blobs[0].key != key)
        throw Error(ErrorCode::IntegrityFailure, "bench download returned the wrong blob");
      return framecrypto::BlockManifest::parse(blobs[0].data);
    });
    const auto& frame = got.frames.at(0);
    auto v0 = Clock::now();
    const SecretKey& vk = viewer_keys.key_for_time(frame.t_ms);
    viewer_key.add(Clock::now() - v0);
    bool sig_ok = timed(sig_verify, [&] {
      return verifier.verify(camera_public, framecrypto::block_signing_input(got.frames), got.signature);
    });
    bool mac_ok = timed(hash_verify, [&] {
      auto mac = framecrypto::frame_mac(vk, frame.ciphertext, frame.iv, frame.t_ms);
      return constant_time_equal(mac, frame.mac);
    });
    auto plain = timed(decrypt, [&] { return framecrypto::open_payload(vk, frame.iv, frame.ciphertext); });
    if (!sig_ok || !mac_ok || !plain || *plain != payload)
      throw Error(ErrorCode::IntegrityFailure, "bench frame did not round-trip", i);
  }

  if (server)
    server->stop();

  Report report;
  report.config = config;
  auto add = [&](const char* device, const char* op, const Samples& s) { report.rows.push_back({ device, op, s.mean(), s.sigma() }); };
  add(camera_device, "Key Extraction", key_extract);
  add(camera_device, "Frame Encryption", encrypt);
  add(camera_device, "Hash", hash);
  add(camera_device, "Signature", sign);
  add(camera_device, "Upload", upload);
  add(viewer_device, "Download", download);
  add(viewer_device, "Key Extraction", viewer_key);
  add(viewer_device, "Frame Decryption", decrypt);
  add(viewer_device, "Hash Verification", hash_verify);
  add(viewer_device, "Signature Verification", sig_verify);
  report.key_within_epoch_ms = key_within.mean();
  report.key_at_boundary_ms = key_boundary.mean();
  report.epoch_boundaries = boundaries;
  return report;
}

} // namespace cactus::bench
