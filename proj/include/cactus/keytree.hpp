#pragma once

// Epoch-indexed binary key tree. Leaves hold per-epoch frame keys, children
// are derived from parents with HKDF, and a sparse frontier of retained nodes
// expresses rotation, delegation grants and cryptographic deletion.

#include <compare>
#include <map>
#include <optional>
#include <vector>

#include "cactus/bytes.hpp"

namespace cactus::keytree {

inline constexpr unsigned max_depth = 40;

struct TreeParams
{
  unsigned depth = 32;
  uint32_t epoch_seconds = 10;
  uint64_t t0_ms = 0;

  void validate() const;
  uint64_t leaf_count() const { return uint64_t{ 1 } << depth; }

  friend bool operator==(const TreeParams&, const TreeParams&) = default;
};

struct NodeId
{
  unsigned level = 0;
  uint64_t index = 0;

  /// First epoch covered by this node in a tree of the given depth.
  uint64_t span_begin(unsigned depth) const { return index << (depth - level); }
  /// One past the last epoch covered.
  uint64_t span_end(unsigned depth) const { return (index + 1) << (depth - level); }
  bool is_ancestor_or_self_of(const NodeId& other) const
  {
    return level <= other.level && (other.index >> (other.level - level)) == index;
  }

  friend bool operator==(const NodeId&, const NodeId&) = default;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct NodeKey
{
  NodeId id;
  SecretKey key;

  friend bool operator==(const NodeKey&, const NodeKey&) = default;
};

enum class Side : uint8_t
{
  left = 0,
  right = 1,
};

/// Half-open epoch interval [start, end).
struct EpochRange
{
  uint64_t start = 0;
  uint64_t end = 0;

  bool empty() const { return end <= start; }
  uint64_t size() const { return empty() ? 0 : end - start; }
  bool contains(uint64_t epoch) const { return epoch >= start && epoch < end; }

  friend bool operator==(const EpochRange&, const EpochRange&) = default;
};

struct TreeStats
{
  uint64_t lifespan_seconds = 0;
  uint64_t worst_case_storage_bytes = 0;
};

/// 365-day year; the unit the lifespan table is expressed in.
inline constexpr double seconds_per_year = 31'536'000.0;

/// Child key: left = HKDF(parent), right = HKDF(parent with the low bit of its
/// last byte flipped). HKDF-SHA-256, salt "cactus-keytree-v1",
/// info = child level (u8) || child index (u64 big-endian).
/// Throws LevelOverflow when the parent is already a leaf.
NodeKey derive_child(const NodeKey& parent, Side side, unsigned depth);

/// Walks from `ancestor` down to `target`. Precondition: ancestor covers target.
NodeKey derive_descendant(const NodeKey& ancestor, const NodeId& target, unsigned depth);

/// Epoch containing timestamp `t_ms`; intervals are half-open.
uint64_t epoch_of(uint64_t t_ms, const TreeParams& params);

/// Timestamp at which `epoch` starts.
uint64_t epoch_start_ms(uint64_t epoch, const TreeParams& params);

/// Greedy aligned decomposition of a range into the canonical dyadic nodes.
std::vector<NodeId> canonical_cover(const EpochRange& range, unsigned depth);

TreeStats tree_stats(const TreeParams& params);

class KeyTree
{
public:
  KeyTree() = default;
  explicit KeyTree(TreeParams params);

  /// Tree whose root holds the seed key.
  static KeyTree from_seed(TreeParams params, const SecretKey& seed);

  /// Tree built from granted nodes. Rejects nodes that overlap.
  static KeyTree from_nodes(TreeParams params, std::vector<NodeKey> nodes);

  const TreeParams& params() const { return params_; }
  size_t retained_count() const { return retained_.size(); }
  std::vector<NodeKey> retained() const;
  std::vector<NodeId> retained_ids() const;
  bool empty() const { return retained_.empty(); }

  bool available(uint64_t epoch) const;
  SecretKey key_for_epoch(uint64_t epoch) const;
  SecretKey key_for_time(uint64_t t_ms) const { return key_for_epoch(epoch_of(t_ms, params_)); }

  /// Minimal antichain of derivable nodes whose leaves are exactly `range`.
  /// Throws KeyUnavailable(detail = first missing epoch).
  std::vector<NodeKey> minimal_cover(const EpochRange& range) const;

  /// Removes every epoch of `range` from what this tree can derive. Removed
  /// key bytes are wiped.
  void puncture(const EpochRange& range);

  /// Camera-side state after rotating to `current_epoch`: everything before
  /// it is punctured.
  KeyTree camera_frontier(uint64_t current_epoch) const;

  /// Wipes every retained key.
  void clear();

  Bytes serialize() const;
  static KeyTree parse(ByteView data);

private:
  void insert(NodeKey node);
  std::optional<NodeKey> retained_ancestor(uint64_t epoch) const;
  void check_epoch(uint64_t epoch) const;

  TreeParams params_;
  std::map<NodeId, SecretKey> retained_;
};

} // namespace cactus::keytree
