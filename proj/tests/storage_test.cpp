#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include <httplib.h>

#include "cactus/framecrypto.hpp"
#include "cactus/storage.hpp"
#include "cactus/viewer.hpp"
#include "test_support.hpp"

using namespace cactus;
using namespace cactus::storage;
namespace fs = std::filesystem;

namespace {

ByteArray<32> cam_id(uint8_t fill)
{
  ByteArray<32> id{};
  id.fill(fill);
  return id;
}

Bytes blob_bytes(uint64_t n, size_t size = 100)
{
  Bytes b(size);
  for (size_t i = 0; i < size; ++i)
    b[i] = static_cast<uint8_t>(n * 31 + i);
  return b;
}

struct TempDir
{
  fs::path path;
  TempDir()
  {
    path = fs::temp_directory_path() / ("cactus-store-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter()
  {
    static int c = 0;
    return c;
  }
};

void exercise_store(BlobStore& store)
{
  auto a = cam_id(1);
  auto b = cam_id(2);
  EXPECT_TRUE(store.get_range(a, 0, 100).empty());

  store.put({ a, 5, 900 }, blob_bytes(1));
  store.put({ a, 5, 100 }, blob_bytes(2));
  store.put({ a, 2, 50 }, blob_bytes(3));
  store.put({ a, 7, 1 }, blob_bytes(4));
  store.put({ b, 5, 100 }, blob_bytes(5));

  auto got = store.get_range(a, 2, 7);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0].key, (BlobKey{ a, 2, 50 }));
  EXPECT_EQ(got[1].key, (BlobKey{ a, 5, 100 }));
  EXPECT_EQ(got[2].key, (BlobKey{ a, 5, 900 }));
  EXPECT_EQ(got[0].data, blob_bytes(3));
  EXPECT_EQ(got[1].data, blob_bytes(2));
  EXPECT_EQ(got[2].data, blob_bytes(1));

  EXPECT_TRUE(store.get_range(a, 7, 7).empty());
  EXPECT_TRUE(store.get_range(a, 9, 3).empty());
  EXPECT_EQ(store.get_range(b, 0, 1000).size(), 1u);

  try {
    store.put({ a, 5, 100 }, blob_bytes(99));
    FAIL() << "overwrite accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Conflict);
  }
  EXPECT_EQ(store.get_range(a, 5, 6)[0].data, blob_bytes(2));

  auto since = store.get_since(a, 0, 100, 60);
  ASSERT_EQ(since.size(), 2u);
  EXPECT_EQ(since[0].key, (BlobKey{ a, 5, 100 }));
  EXPECT_EQ(since[1].key, (BlobKey{ a, 5, 900 }));
  EXPECT_EQ(store.get_since(a, 0, 100, 0).size(), 4u);
  EXPECT_EQ(store.get_since(a, 0, 100, 901).size(), 0u);
  EXPECT_EQ(store.get_since(a, 5, 6, 100).size(), 2u);
}

struct RunningServer
{
  Server server;
  int port = 0;

  explicit RunningServer(std::shared_ptr<BlobStore> store)
    : server(std::move(store))
  {
    port = server.bind("127.0.0.1", 0);
    server.start();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

/// Remembers what the wrapped store served last.
class Tap final : public BlobStore
{
public:
  explicit Tap(std::shared_ptr<BlobStore> inner)
    : inner_(std::move(inner))
  {
  }
  void put(const BlobKey& key, ByteView data) override { inner_->put(key, data); }
  std::vector<Blob> get_range(const ByteArray<32>& id, uint64_t from, uint64_t to) override
  {
    last = inner_->get_range(id, from, to);
    return last;
  }
  std::vector<Blob> last;

private:
  std::shared_ptr<BlobStore> inner_;
};

struct Recorded
{
  test::Paired devices;
  framecrypto::CameraIdentity identity;
  std::map<BlobKey, Bytes> originals;
  std::vector<framecrypto::PlainFrame> frames;
};

keytree::TreeParams small_params()
{
  keytree::TreeParams p;
  p.depth = 10;
  p.epoch_seconds = 1;
  p.t0_ms = 1'000'000;
  return p;
}

/// `blocks` blocks of two frames each, 400 ms apart, into `store`.
Recorded record(BlobStore& store, size_t blocks)
{
  auto devices = test::pair_devices(small_params());
  auto identity = framecrypto::CameraIdentity::from_device_keys(devices.camera.camera_keys());
  Recorded r{ std::move(devices), identity, {}, {} };
  uint64_t t = small_params().t0_ms;
  for (size_t b = 0; b < blocks; ++b) {
    std::vector<framecrypto::PlainFrame> frames;
    for (int f = 0; f < 2; ++f, t += 400)
      frames.push_back({ t, blob_bytes(t, 48) });
    auto manifest = framecrypto::encrypt_block(frames, r.devices.camera.tree(), identity);
    BlobKey key{ manifest.camera_id, manifest.first_epoch, frames.front().t_ms };
    auto wire = manifest.serialize();
    store.put(key, wire);
    r.originals[key] = wire;
    r.frames.insert(r.frames.end(), frames.begin(), frames.end());
  }
  return r;
}

admin::Grant owner_grant(const Recorded& r)
{
  return { r.devices.owner.camera_public(), r.devices.owner.tree() };
}

} // namespace

TEST(MemoryStore, AppendOnlyOrderedRange) { MemoryStore s; exercise_store(s); }

TEST(FileStore, AppendOnlyOrderedRange)
{
  TempDir dir;
  FileStore s(dir.path);
  exercise_store(s);
}

TEST(FileStore, LayoutIsDirectoryPerCameraWithNamedBlobs)
{
  TempDir dir;
  FileStore s(dir.path);
  s.put({ cam_id(0xab), 12, 34 }, blob_bytes(0));
  auto file = dir.path / to_hex(cam_id(0xab)) / "12-34.blk";
  ASSERT_TRUE(fs::exists(file));
  EXPECT_EQ(fs::file_size(file), 100u);
  size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path / to_hex(cam_id(0xab))))
    ++entries;
  EXPECT_EQ(entries, 1u) << "temp files left behind";
  EXPECT_EQ(blob_file_name(0, 18446744073709551615ull), "0-18446744073709551615.blk");
}

TEST(FileStore, ReopenedStoreServesPriorBlobsAndIgnoresStrays)
{
  TempDir dir;
  FileStore(dir.path).put({ cam_id(3), 1, 2 }, blob_bytes(7));
  std::ofstream(dir.path / to_hex(cam_id(3)) / "notes.txt") << "x";
  std::ofstream(dir.path / to_hex(cam_id(3)) / "1-2x.blk") << "x";
  auto got = FileStore(dir.path).get_range(cam_id(3), 0, 10);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].data, blob_bytes(7));
}

TEST(FileStore, RacingPutsOnOneKeyHaveOneWinner)
{
  TempDir dir;
  FileStore s(dir.path);
  std::atomic<int> wins{ 0 };
  std::atomic<int> conflicts{ 0 };
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      for (uint64_t k = 0; k < 20; ++k) {
        try {
          s.put({ cam_id(1), k, 0 }, blob_bytes(i, 4096));
          ++wins;
        } catch (const Error& e) {
          if (e.code() == ErrorCode::Conflict)
            ++conflicts;
        }
      }
    });
  }
  for (auto& t : threads)
    t.join();
  EXPECT_EQ(wins, 20);
  EXPECT_EQ(conflicts, 140);
  for (const auto& blob : s.get_range(cam_id(1), 0, 20)) {
    bool matches_some_writer = false;
    for (int i = 0; i < 8; ++i)
      matches_some_writer |= blob.data == blob_bytes(i, 4096);
    EXPECT_TRUE(matches_some_writer) << "torn blob at " << blob.key.first_epoch;
  }
}

TEST(Listing, WireFormat)
{
  std::vector<Blob> blobs{ { { cam_id(1), 1, 2 }, { 0xaa } }, { { cam_id(1), 3, 4 }, {} } };
  auto wire = encode_listing(blobs);
  EXPECT_EQ(to_hex(wire),
            "0000000000000001" "0000000000000002" "00000001" "aa"
            "0000000000000003" "0000000000000004" "00000000");
  auto back = decode_listing(cam_id(1), wire);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].key, blobs[0].key);
  EXPECT_EQ(back[1].data, Bytes{});
  EXPECT_THROW(decode_listing(cam_id(1), ByteView(wire).first(10)), Error);
}

TEST(Http, ServerAndClientAgreeWithMemoryStore)
{
  auto backing = std::make_shared<MemoryStore>();
  RunningServer srv(backing);
  HttpStore client(srv.url());
  exercise_store(client);
  EXPECT_EQ(backing->get_range(cam_id(1), 0, 100).size(), 4u);
}

TEST(Http, EndpointShapes)
{
  RunningServer srv(std::make_shared<MemoryStore>());
  httplib::Client raw(srv.url());
  auto id = to_hex(cam_id(9));
  auto put = raw.Put("/v1/" + id + "/4/77", "hello", "application/octet-stream");
  ASSERT_TRUE(put);
  EXPECT_EQ(put->status, 201);
  EXPECT_EQ(raw.Put("/v1/" + id + "/4/77", "again", "application/octet-stream")->status, 409);
  EXPECT_EQ(raw.Put("/v1/abcd/4/77", "x", "application/octet-stream")->status, 400);

  auto get = raw.Get("/v1/" + id + "?from=0&to=5");
  ASSERT_TRUE(get);
  EXPECT_EQ(get->status, 200);
  EXPECT_EQ(to_hex(as_view(get->body)), "0000000000000004" "000000000000004d" "00000005" + to_hex(as_view("hello")));
  EXPECT_EQ(raw.Get("/v1/" + id + "?from=5&to=9")->body, "");
  EXPECT_EQ(raw.Get("/v1/" + id + "?from=x&to=9")->status, 400);
  EXPECT_EQ(raw.Get("/v1/" + id + "?from=0&to=9&since=78")->body, "");
  EXPECT_EQ(raw.Get("/v1/" + id + "?from=0&to=9&since=77")->body, get->body);
}

TEST(Http, UnreachableServerIsIo)
{
  int port;
  {
    RunningServer srv(std::make_shared<MemoryStore>());
    port = srv.port;
  }
  HttpStore client("http://127.0.0.1:" + std::to_string(port));
  try {
    client.put({ cam_id(1), 0, 0 }, blob_bytes(0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Adversarial, HonestConfigIsTransparent)
{
  auto inner = std::make_shared<MemoryStore>();
  AdversarialStore adv(inner, {});
  exercise_store(adv);
  EXPECT_EQ(adv.tampered() + adv.dropped() + adv.replayed(), 0u);
}

TEST(Adversarial, ViewerDetectsEveryTamperedBlock)
{
  auto inner = std::make_shared<MemoryStore>();
  auto rec = record(*inner, 300);
  auto adv = std::make_shared<AdversarialStore>(inner, AdversaryConfig{ 0.1, 0, false, 1234 });
  auto tap = std::make_shared<Tap>(adv);
  viewer::Playback play(owner_grant(rec), tap);
  auto reports = play.fetch(0, 1024);
  ASSERT_EQ(reports.size(), 300u);
  ASSERT_GT(adv->tampered(), 15u);
  ASSERT_LT(adv->tampered(), 50u);

  std::map<uint64_t, Bytes> plain;
  for (const auto& f : rec.frames)
    plain[f.t_ms] = f.payload;
  size_t detected = 0;
  for (size_t i = 0; i < reports.size(); ++i) {
    const auto& served = tap->last[i];
    bool tampered = served.data != rec.originals.at(served.key);
    bool flagged = reports[i].error.has_value() || !reports[i].failed_frames.empty();
    EXPECT_EQ(flagged, tampered) << "block " << i;
    detected += flagged && tampered;
    for (const auto& f : reports[i].frames)
      ASSERT_EQ(f.payload, plain.at(f.t_ms)) << "altered plaintext delivered";
  }
  EXPECT_EQ(detected, adv->tampered());
}

TEST(Adversarial, DroppedBlocksAreSimplyMissing)
{
  auto inner = std::make_shared<MemoryStore>();
  auto rec = record(*inner, 100);
  auto adv = std::make_shared<AdversarialStore>(inner, AdversaryConfig{ 0, 0.2, false, 9 });
  viewer::Playback play(owner_grant(rec), adv);
  auto reports = play.fetch(0, 1024);
  EXPECT_GT(adv->dropped(), 5u);
  EXPECT_EQ(reports.size() + adv->dropped(), 100u);
  for (const auto& r : reports)
    EXPECT_FALSE(r.error);
}

TEST(Adversarial, ReplayedBlockUnderNewRangeIsRejected)
{
  auto inner = std::make_shared<MemoryStore>();
  auto rec = record(*inner, 40);
  auto adv = std::make_shared<AdversarialStore>(inner, AdversaryConfig{ 0, 0, true, 5 });
  viewer::Playback play(owner_grant(rec), adv);

  auto first = play.fetch(0, 8);
  for (const auto& r : first)
    EXPECT_FALSE(r.error);
  size_t frames_before = 0;
  for (const auto& r : first)
    frames_before += r.frames.size();

  auto later = play.fetch(8, 32);
  ASSERT_GE(adv->replayed(), 1u);
  size_t rejected = 0;
  std::set<uint64_t> seen;
  for (const auto& r : later) {
    if (r.error) {
      EXPECT_EQ(*r.error, ErrorCode::ReplayRejected) << r.reason;
      ++rejected;
    }
    for (const auto& f : r.frames)
      EXPECT_TRUE(seen.insert(f.t_ms).second);
  }
  EXPECT_EQ(rejected, adv->replayed());
  EXPECT_EQ(frames_before + seen.size(), 80u);
}

TEST(Adversarial, ReplayWithRewrittenManifestEpochFailsIntegrity)
{
  auto inner = std::make_shared<MemoryStore>();
  auto rec = record(*inner, 10);
  auto [key, wire] = *rec.originals.begin();
  auto block = framecrypto::BlockManifest::parse(wire);
  block.first_epoch += 5;
  auto forged = std::make_shared<MemoryStore>();
  forged->put({ key.camera_id, block.first_epoch, key.sequence }, block.serialize());
  viewer::Playback play(owner_grant(rec), forged);
  auto reports = play.fetch(0, 1024);
  ASSERT_EQ(reports.size(), 1u);
  ASSERT_TRUE(reports[0].error);
  EXPECT_EQ(*reports[0].error, ErrorCode::IntegrityFailure);
  EXPECT_TRUE(reports[0].frames.empty());
}
