#include "cactus/keytree.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "test_support.hpp"

using namespace cactus;
using namespace cactus::keytree;

namespace {

// Depth-3 tree of the deletion example: epochs A..H are leaves 0..7.
constexpr unsigned fig_depth = 3;
enum Epoch : uint64_t { A, B, C, D, E, F, G, H };

TreeParams params_of(unsigned depth, uint32_t delta = 10, uint64_t t0 = 1'000'000)
{
  return { depth, delta, t0 };
}

SecretKey fixed_seed()
{
  ByteArray<32> seed{};
  for (size_t i = 0; i < seed.size(); ++i)
    seed[i] = static_cast<uint8_t>(0xa0 + i);
  return SecretKey(seed);
}

std::set<NodeId> ids_of(const std::vector<NodeKey>& nodes)
{
  std::set<NodeId> out;
  for (const auto& n : nodes)
    out.insert(n.id);
  return out;
}

} // namespace

TEST(DeriveChild, IsDeterministic)
{
  NodeKey root{ { 0, 0 }, fixed_seed() };
  EXPECT_EQ(derive_child(root, Side::left, 4), derive_child(root, Side::left, 4));
  EXPECT_EQ(derive_child(root, Side::right, 4), derive_child(root, Side::right, 4));
}

TEST(DeriveChild, LeftAndRightDiffer)
{
  std::mt19937_64 rng(7);
  for (int i = 0; i < 64; ++i) {
    NodeKey parent{ { 2, 1 }, test::random_secret(rng) };
    auto left = derive_child(parent, Side::left, 8);
    auto right = derive_child(parent, Side::right, 8);
    EXPECT_NE(left.key, right.key);
    EXPECT_EQ(left.id, (NodeId{ 3, 2 }));
    EXPECT_EQ(right.id, (NodeId{ 3, 3 }));
  }
}

TEST(DeriveChild, ZeroParentMatchesFrozenVector)
{
  // Computed once with Python's hmac/hashlib (RFC 5869 by hand), salt
  // "cactus-keytree-v1", info = level u8 || index u64be.
  const auto left_hex = "591653a179d1725a4a041e40381c807da7795f3074e7561105973dc2d0b0117f";
  const auto right_hex = "2b91db290d7bddca6498c7a2f3fc4af5e0dcd7731a0d0b31337f6334d3bdbd63";

  NodeKey zero{ { 0, 0 }, SecretKey(ByteArray<32>{}) };
  EXPECT_EQ(to_hex(derive_child(zero, Side::left, 1).key.view()), left_hex);
  EXPECT_EQ(to_hex(derive_child(zero, Side::right, 1).key.view()), right_hex);

  auto leaves = test::oracle_all_leaves(ByteArray<32>{}, 1);
  EXPECT_EQ(to_hex(leaves[0]), left_hex);
  EXPECT_EQ(to_hex(leaves[1]), right_hex);
}

TEST(DeriveChild, LeafHasNoChildren)
{
  NodeKey leaf{ { 3, 5 }, fixed_seed() };
  try {
    derive_child(leaf, Side::left, 3);
    FAIL() << "expected LevelOverflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LevelOverflow);
  }
}

TEST(EpochOf, OriginAndBoundaries)
{
  auto p = params_of(8, 10, 50'000);
  EXPECT_EQ(epoch_of(50'000, p), 0u);
  EXPECT_EQ(epoch_of(50'000 + 9'999, p), 0u);
  EXPECT_EQ(epoch_of(50'000 + 10'000, p), 1u);
  EXPECT_EQ(epoch_of(50'000 + 95'000, p), 9u);
  EXPECT_EQ(epoch_start_ms(9, p), 50'000u + 90'000u);
}

TEST(EpochOf, RejectsOutOfLifespan)
{
  auto p = params_of(2, 1, 1'000);
  try {
    epoch_of(999, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BeforeOrigin);
  }
  EXPECT_EQ(epoch_of(1'000 + 3'999, p), 3u);
  try {
    epoch_of(1'000 + 4'000, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TreeLifespanExceeded);
  }
}

TEST(TreeParams, Validation)
{
  EXPECT_THROW(KeyTree(params_of(0)), Error);
  EXPECT_THROW(KeyTree(params_of(41)), Error);
  EXPECT_THROW(KeyTree(params_of(8, 0)), Error);
  EXPECT_NO_THROW(KeyTree(params_of(40)));
}

TEST(KeyForEpoch, FullTreeCoversEveryEpoch)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  auto oracle = test::oracle_all_leaves(fixed_seed().array(), fig_depth);
  for (uint64_t e = 0; e < 8; ++e)
    EXPECT_EQ(tree.key_for_epoch(e).array(), oracle[e]);
}

TEST(KeyForEpoch, DeletedEpochUnavailableNeighbourSurvives)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  auto before_b = tree.key_for_epoch(B);
  tree.puncture({ A, A + 1 });
  try {
    tree.key_for_epoch(A);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KeyUnavailable);
    EXPECT_EQ(e.detail(), std::optional<uint64_t>(A));
  }
  EXPECT_EQ(tree.key_for_epoch(B), before_b);
}

TEST(Puncture, DeletingFirstEpochKeepsSiblingSubtrees)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  tree.puncture({ A, A + 1 });
  std::set<NodeId> expected{ { 3, B }, { 2, 1 } /* CD */, { 1, 1 } /* EFGH */ };
  auto got = tree.retained_ids();
  EXPECT_EQ(std::set<NodeId>(got.begin(), got.end()), expected);
}

TEST(Puncture, EmptyRangeIsNoOp)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  tree.puncture({ C, E });
  auto before = tree.serialize();
  tree.puncture({ 4, 4 });
  tree.puncture({ 6, 2 });
  EXPECT_EQ(tree.serialize(), before);
}

TEST(Puncture, AlreadyPuncturedIsNoOp)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  tree.puncture({ C, E });
  auto before = tree.serialize();
  tree.puncture({ C, D });
  EXPECT_EQ(tree.serialize(), before);
}

TEST(Puncture, RandomSequenceMatchesMaskOracle)
{
  constexpr unsigned depth = 8;
  std::mt19937_64 rng(1234);
  auto seed = test::random_secret(rng);
  auto oracle = test::oracle_all_leaves(seed.array(), depth);
  std::vector<bool> alive(256, true);
  auto tree = KeyTree::from_seed(params_of(depth), seed);

  std::uniform_int_distribution<uint64_t> len(1, 12);
  for (int i = 0; i < 50; ++i) {
    uint64_t start = rng() % 256;
    EpochRange r{ start, std::min<uint64_t>(256, start + len(rng)) };
    tree.puncture(r);
    for (uint64_t e = r.start; e < r.end; ++e)
      alive[e] = false;
  }

  for (uint64_t e = 0; e < 256; ++e) {
    ASSERT_EQ(tree.available(e), alive[e]) << "epoch " << e;
    if (alive[e])
      EXPECT_EQ(tree.key_for_epoch(e).array(), oracle[e]);
    else
      EXPECT_THROW(tree.key_for_epoch(e), Error);
  }

  auto ids = tree.retained_ids();
  for (size_t i = 0; i < ids.size(); ++i)
    for (size_t j = 0; j < ids.size(); ++j)
      if (i != j)
        ASSERT_FALSE(ids[i].is_ancestor_or_self_of(ids[j]));
}

TEST(Puncture, ExhaustiveCompletenessAtDepthTen)
{
  constexpr unsigned depth = 10;
  std::mt19937_64 rng(99);
  auto seed = test::random_secret(rng);
  auto oracle = test::oracle_all_leaves(seed.array(), depth);
  for (int round = 0; round < 4; ++round) {
    auto tree = KeyTree::from_seed(params_of(depth), seed);
    auto r = test::random_range(rng, 1024);
    tree.puncture(r);
    for (uint64_t e = 0; e < 1024; ++e) {
      if (r.contains(e))
        ASSERT_FALSE(tree.available(e));
      else
        ASSERT_EQ(tree.key_for_epoch(e).array(), oracle[e]);
    }
  }
}

TEST(Puncture, RetainedGrowthPerRegionIsLogarithmic)
{
  constexpr unsigned depth = 16;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto tree = KeyTree::from_seed(params_of(depth), fixed_seed());
    tree.puncture(test::random_range(rng, tree.params().leaf_count()));
    EXPECT_LE(tree.retained_count(), 2u * depth);
  }
}

TEST(MinimalCover, FullSpanIsRoot)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  auto cover = tree.minimal_cover({ 0, 8 });
  ASSERT_EQ(cover.size(), 1u);
  EXPECT_EQ(cover[0].id, (NodeId{ 0, 0 }));
  EXPECT_EQ(cover[0].key, fixed_seed());
}

TEST(MinimalCover, DelegatedWindowCtoF)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  auto cover = tree.minimal_cover({ C, F + 1 });
  EXPECT_EQ(ids_of(cover), (std::set<NodeId>{ { 2, 1 } /* CD */, { 2, 2 } /* EF */ }));
}

TEST(MinimalCover, EmptyRangeIsEmpty)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  EXPECT_TRUE(tree.minimal_cover({ 3, 3 }).empty());
}

TEST(MinimalCover, UnavailableEpochReportsFirstMissing)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  tree.puncture({ D, E + 1 });
  try {
    tree.minimal_cover({ B, G });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KeyUnavailable);
    EXPECT_EQ(e.detail(), std::optional<uint64_t>(D));
  }
}

TEST(MinimalCover, RandomRangesMatchBruteForce)
{
  constexpr unsigned depth = 8;
  std::mt19937_64 rng(42);
  auto seed = test::random_secret(rng);
  auto oracle = test::oracle_all_leaves(seed.array(), depth);
  auto tree = KeyTree::from_seed(params_of(depth), seed);

  for (int i = 0; i < 500; ++i) {
    auto r = test::random_range(rng, 256);
    auto cover = tree.minimal_cover(r);
    ASSERT_LE(cover.size(), 2u * depth);

    // Exact leaf coverage, each leaf once.
    std::vector<int> hits(256, 0);
    for (const auto& n : cover)
      for (uint64_t e = n.id.span_begin(depth); e < n.id.span_end(depth); ++e)
        ++hits[e];
    for (uint64_t e = 0; e < 256; ++e)
      ASSERT_EQ(hits[e], r.contains(e) ? 1 : 0);

    // Minimality: no two cover nodes are siblings (they would merge).
    auto ids = ids_of(cover);
    for (const auto& id : ids)
      if (id.level > 0)
        ASSERT_FALSE(ids.count({ id.level, id.index ^ 1 })) << "siblings both in cover";

    // Grant keys re-derive the oracle leaves.
    auto grant = KeyTree::from_nodes(tree.params(), cover);
    for (uint64_t e = r.start; e < r.end; ++e)
      ASSERT_EQ(grant.key_for_epoch(e).array(), oracle[e]);
  }
}

TEST(MinimalCover, SparseTreeUsesOnlyDerivableNodes)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  tree.puncture({ A, A + 1 });
  // {B..D} cannot use AB or ABCD (both gone), so B and CD.
  EXPECT_EQ(ids_of(tree.minimal_cover({ B, E })), (std::set<NodeId>{ { 3, B }, { 2, 1 } }));
}

TEST(CameraFrontier, StartOfLifeIsRoot)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  EXPECT_EQ(tree.camera_frontier(0).retained_ids(), (std::vector<NodeId>{ { 0, 0 } }));
}

TEST(CameraFrontier, EpochDKeepsDandEFGH)
{
  auto tree = KeyTree::from_seed(params_of(fig_depth), fixed_seed());
  auto frontier = tree.camera_frontier(D);
  auto ids = frontier.retained_ids();
  EXPECT_EQ(std::set<NodeId>(ids.begin(), ids.end()), (std::set<NodeId>{ { 3, D }, { 1, 1 } }));
  EXPECT_LE(frontier.retained_count(), fig_depth);
  for (uint64_t e = 0; e < D; ++e)
    EXPECT_FALSE(frontier.available(e));
  for (uint64_t e = D; e < 8; ++e)
    EXPECT_EQ(frontier.key_for_epoch(e), tree.key_for_epoch(e));
}

TEST(CameraFrontier, SizeBoundedByDepth)
{
  constexpr unsigned depth = 16;
  auto tree = KeyTree::from_seed(params_of(depth), fixed_seed());
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    uint64_t current = rng() % tree.params().leaf_count();
    auto frontier = tree.camera_frontier(current);
    ASSERT_LE(frontier.retained_count(), depth) << "epoch " << current;
    ASSERT_TRUE(frontier.available(current));
    if (current > 0)
      ASSERT_FALSE(frontier.available(current - 1));
  }
}

TEST(TreeStats, SmallestTree)
{
  auto s = tree_stats(params_of(1, 1));
  EXPECT_EQ(s.lifespan_seconds, 2u);
  EXPECT_EQ(s.worst_case_storage_bytes, 32u);
}

TEST(TreeStats, DefaultParameters)
{
  auto s = tree_stats(params_of(32, 10));
  EXPECT_EQ(std::lround(s.lifespan_seconds / seconds_per_year), 1362);
  EXPECT_EQ(s.worst_case_storage_bytes, uint64_t{ 64 } << 30);
  auto s24 = tree_stats(params_of(24, 60));
  EXPECT_EQ(std::lround(s24.lifespan_seconds / seconds_per_year), 32);
  EXPECT_EQ(s24.worst_case_storage_bytes, uint64_t{ 256 } << 20);
}

TEST(Serialization, RoundTripsRandomSparseTrees)
{
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    unsigned depth = 1 + static_cast<unsigned>(rng() % 20);
    auto tree = KeyTree::from_seed(params_of(depth, 1 + rng() % 100, rng() % 1'000'000), test::random_secret(rng));
    for (int p = 0; p < 5; ++p)
      tree.puncture(test::random_range(rng, tree.params().leaf_count()));
    auto bytes = tree.serialize();
    auto back = KeyTree::parse(bytes);
    EXPECT_EQ(back.params(), tree.params());
    EXPECT_EQ(back.retained(), tree.retained());
    EXPECT_EQ(back.serialize(), bytes);
  }
}

TEST(Serialization, LayoutIsBigEndianLengthPrefixed)
{
  auto tree = KeyTree::from_seed({ 3, 0x01020304, 0x1122334455667788ULL }, fixed_seed());
  auto bytes = tree.serialize();
  ASSERT_EQ(bytes.size(), 1u + 4 + 8 + 4 + (1 + 8 + 32));
  EXPECT_EQ(to_hex(ByteView(bytes).subspan(0, 21)), "030102030411223344556677880000000100000000");
}

TEST(Serialization, RejectsOverlapsAndTruncation)
{
  auto tree = KeyTree::from_seed(params_of(3), fixed_seed());
  auto bytes = tree.serialize();
  bytes.pop_back();
  EXPECT_THROW(KeyTree::parse(bytes), Error);

  Writer w;
  w.u8(3).u32(10).u64(0).u32(2);
  w.u8(1).u64(0).raw(fixed_seed().view());
  w.u8(2).u64(1).raw(fixed_seed().view());
  EXPECT_THROW(KeyTree::parse(w.data()), Error);
}

TEST(FromNodes, RejectsOverlap)
{
  EXPECT_THROW(KeyTree::from_nodes(params_of(3), { NodeKey{ { 1, 0 }, fixed_seed() }, NodeKey{ { 3, 1 }, fixed_seed() } }),
               Error);
}
