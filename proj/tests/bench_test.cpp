#include <gtest/gtest.h>

#include <chrono>

#include "cactus/bench.hpp"
#include "cactus/error.hpp"

using namespace cactus;
using namespace cactus::bench;

namespace {

BenchConfig small(size_t frames)
{
  BenchConfig c;
  c.frames = frames;
  c.frame_bytes = 4096;
  c.params = { 32, 1, 0 };
  return c;
}

} // namespace

TEST(Bench, TenRowsInTableOrder)
{
  auto report = bench_run(small(40));
  const std::vector<std::pair<std::string, std::string>> expected = {
    { "Camera", "Key Extraction" },        { "Camera", "Frame Encryption" },      { "Camera", "Hash" },
    { "Camera", "Signature" },             { "Camera", "Upload" },                { "Smartphone", "Download" },
    { "Smartphone", "Key Extraction" },    { "Smartphone", "Frame Decryption" },  { "Smartphone", "Hash Verification" },
    { "Smartphone", "Signature Verification" },
  };
  ASSERT_EQ(report.rows.size(), expected.size());
  for (size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(report.rows[i].device, expected[i].first);
    EXPECT_EQ(report.rows[i].operation, expected[i].second);
    EXPECT_GE(report.rows[i].mean_ms, 0);
    EXPECT_GE(report.rows[i].sigma_ms, 0);
  }
  auto text = report.render();
  for (const auto& [device, op] : expected)
    EXPECT_NE(text.find(op), std::string::npos) << op;
  EXPECT_THROW(report.row("Camera", "Nope"), Error);
}

TEST(Bench, BoundaryCountFollowsFrameClock)
{
  // 40 frames at 10 fps with 1 s epochs: t = 0..3900 ms crosses 3 boundaries.
  auto report = bench_run(small(40));
  EXPECT_EQ(report.epoch_boundaries, 3u);
  EXPECT_LT(report.key_within_epoch_ms, report.key_at_boundary_ms);
}

TEST(Bench, ZeroAndRandomContentBothReportEncryption)
{
  auto c = small(20);
  auto random = bench_run(c);
  c.zero_frames = true;
  auto zero = bench_run(c);
  EXPECT_GT(random.row("Camera", "Frame Encryption").mean_ms, 0);
  EXPECT_GT(zero.row("Camera", "Frame Encryption").mean_ms, 0);
  EXPECT_NE(zero.render().find("content=zero"), std::string::npos);
}

TEST(Bench, LinkModelDelay)
{
  LinkModel link{ 2.0, 8.0 };
  // 1000 bytes at 8 Mbit/s is 1 ms.
  EXPECT_DOUBLE_EQ(link.delay_ms(1000), 3.0);
  EXPECT_TRUE(link.active());
  EXPECT_FALSE(LinkModel{}.active());
}

TEST(Bench, ShapedStoreSleepsOnBothDirections)
{
  auto inner = std::make_shared<storage::MemoryStore>();
  ShapedStore shaped(inner, { 20.0, 0 });
  ByteArray<32> id{};
  auto t0 = std::chrono::steady_clock::now();
  shaped.put({ id, 1, 1 }, Bytes(10, 1));
  auto got = shaped.get_since(id, 0, 5, 1);
  auto elapsed = std::chrono::steady_clock::now() - t0;
  ASSERT_EQ(got.size(), 1u);
  EXPECT_GE(elapsed, std::chrono::milliseconds(40));
}

TEST(Bench, RejectsEmptyRun)
{
  auto c = small(0);
  EXPECT_THROW(bench_run(c), Error);
  c = small(1);
  c.frame_rate = 0;
  EXPECT_THROW(bench_run(c), Error);
}
