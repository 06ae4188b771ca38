#include "cactus/keytree.hpp"

#include <algorithm>
#include <limits>

#include "cactus/crypto.hpp"

namespace cactus::keytree {

namespace {

constexpr std::string_view derivation_salt = "cactus-keytree-v1";

} // namespace

void TreeParams::validate() const
{
  if (depth < 1 || depth > max_depth)
    throw Error(ErrorCode::InvalidArgument, "tree depth must be in [1, 40]");
  if (epoch_seconds < 1)
    throw Error(ErrorCode::InvalidArgument, "epoch width must be at least one second");
}

NodeKey derive_child(const NodeKey& parent, Side side, unsigned depth)
{
  if (parent.id.level >= depth)
    throw Error(ErrorCode::LevelOverflow, "cannot derive below a leaf");

  SecretKey ikm = parent.key;
  if (side == Side::right)
    ikm.mutable_array()[SecretKey::size - 1] ^= 0x01;

  NodeId child{ parent.id.level + 1, 2 * parent.id.index + static_cast<uint64_t>(side) };
  Writer info;
  info.u8(static_cast<uint8_t>(child.level)).u64(child.index);

  Bytes okm = crypto::hkdf_sha256(ikm.view(), as_view(derivation_salt), info.data(), SecretKey::size);
  NodeKey out{ child, SecretKey(okm) };
  secure_zero(okm);
  return out;
}

NodeKey derive_descendant(const NodeKey& ancestor, const NodeId& target, unsigned depth)
{
  if (!ancestor.id.is_ancestor_or_self_of(target) || target.level > depth)
    throw Error(ErrorCode::InvalidArgument, "target is not below the given node");
  NodeKey current = ancestor;
  while (current.id.level < target.level) {
    unsigned shift = target.level - current.id.level - 1;
    auto side = static_cast<Side>((target.index >> shift) & 1);
    current = derive_child(current, side, depth);
  }
  return current;
}

uint64_t epoch_of(uint64_t t_ms, const TreeParams& params)
{
  if (t_ms < params.t0_ms)
    throw Error(ErrorCode::BeforeOrigin, "timestamp precedes the tree origin");
  uint64_t epoch = (t_ms - params.t0_ms) / (uint64_t{ params.epoch_seconds } * 1000);
  if (epoch >= params.leaf_count())
    throw Error(ErrorCode::TreeLifespanExceeded, "timestamp beyond the tree lifespan", epoch);
  return epoch;
}

uint64_t epoch_start_ms(uint64_t epoch, const TreeParams& params)
{
  return params.t0_ms + epoch * uint64_t{ params.epoch_seconds } * 1000;
}

std::vector<NodeId> canonical_cover(const EpochRange& range, unsigned depth)
{
  std::vector<NodeId> out;
  uint64_t pos = range.start;
  while (pos < range.end) {
    unsigned k = 0;
    while (k < depth) {
      uint64_t size = uint64_t{ 1 } << (k + 1);
      if (pos % size != 0 || pos + size > range.end)
        break;
      ++k;
    }
    out.push_back({ depth - k, pos >> k });
    pos += uint64_t{ 1 } << k;
  }
  return out;
}

TreeStats tree_stats(const TreeParams& params)
{
  params.validate();
  using Wide = unsigned __int128;
  Wide lifespan = Wide{ params.leaf_count() } * params.epoch_seconds;
  if (lifespan > std::numeric_limits<uint64_t>::max())
    throw Error(ErrorCode::InvalidArgument, "lifespan overflows 64 bits");
  return { static_cast<uint64_t>(lifespan), (uint64_t{ 1 } << (params.depth - 1)) * SecretKey::size };
}

KeyTree::KeyTree(TreeParams params)
  : params_(params)
{
  params_.validate();
}

KeyTree KeyTree::from_seed(TreeParams params, const SecretKey& seed)
{
  KeyTree out(params);
  out.retained_.emplace(NodeId{ 0, 0 }, seed);
  return out;
}

KeyTree KeyTree::from_nodes(TreeParams params, std::vector<NodeKey> nodes)
{
  KeyTree out(params);
  for (auto& n : nodes)
    out.insert(std::move(n));
  return out;
}

void KeyTree::insert(NodeKey node)
{
  if (node.id.level > params_.depth || node.id.index >= (uint64_t{ 1 } << node.id.level))
    throw Error(ErrorCode::InvalidArgument, "node outside the tree");
  for (const auto& [id, key] : retained_) {
    if (id.is_ancestor_or_self_of(node.id) || node.id.is_ancestor_or_self_of(id))
      throw Error(ErrorCode::InvalidArgument, "retained nodes must not overlap");
  }
  retained_.emplace(node.id, std::move(node.key));
}

std::vector<NodeKey> KeyTree::retained() const
{
  std::vector<NodeKey> out;
  out.reserve(retained_.size());
  for (const auto& [id, key] : retained_)
    out.push_back({ id, key });
  return out;
}

std::vector<NodeId> KeyTree::retained_ids() const
{
  std::vector<NodeId> out;
  out.reserve(retained_.size());
  for (const auto& [id, key] : retained_)
    out.push_back(id);
  return out;
}

void KeyTree::check_epoch(uint64_t epoch) const
{
  if (epoch >= params_.leaf_count())
    throw Error(ErrorCode::TreeLifespanExceeded, "epoch beyond the tree lifespan", epoch);
}

std::optional<NodeKey> KeyTree::retained_ancestor(uint64_t epoch) const
{
  for (unsigned level = 0; level <= params_.depth; ++level) {
    NodeId id{ level, epoch >> (params_.depth - level) };
    auto it = retained_.find(id);
    if (it != retained_.end())
      return NodeKey{ it->first, it->second };
  }
  return std::nullopt;
}

bool KeyTree::available(uint64_t epoch) const
{
  return epoch < params_.leaf_count() && retained_ancestor(epoch).has_value();
}

SecretKey KeyTree::key_for_epoch(uint64_t epoch) const
{
  check_epoch(epoch);
  auto ancestor = retained_ancestor(epoch);
  if (!ancestor)
    throw Error(ErrorCode::KeyUnavailable, "no retained key covers epoch " + std::to_string(epoch), epoch);
  return derive_descendant(*ancestor, { params_.depth, epoch }, params_.depth).key;
}

std::vector<NodeKey> KeyTree::minimal_cover(const EpochRange& range) const
{
  std::vector<NodeKey> out;
  const unsigned depth = params_.depth;
  uint64_t pos = range.start;
  while (pos < range.end) {
    if (pos >= params_.leaf_count())
      throw Error(ErrorCode::KeyUnavailable, "range extends beyond the tree", pos);
    auto ancestor = retained_ancestor(pos);
    if (!ancestor)
      throw Error(ErrorCode::KeyUnavailable, "epoch " + std::to_string(pos) + " is not available", pos);

    // Largest aligned block at pos that stays inside the range and below the
    // retained ancestor; anything bigger would need an underivable node.
    unsigned k = 0;
    const unsigned limit = depth - ancestor->id.level;
    while (k < limit) {
      uint64_t size = uint64_t{ 1 } << (k + 1);
      if (pos % size != 0 || pos + size > range.end)
        break;
      ++k;
    }
    out.push_back(derive_descendant(*ancestor, { depth - k, pos >> k }, depth));
    pos += uint64_t{ 1 } << k;
  }
  return out;
}

void KeyTree::puncture(const EpochRange& range)
{
  const unsigned depth = params_.depth;
  EpochRange clamped{ range.start, std::min(range.end, params_.leaf_count()) };
  if (clamped.empty())
    return;

  std::vector<NodeKey> affected;
  for (auto it = retained_.begin(); it != retained_.end();) {
    uint64_t begin = it->first.span_begin(depth);
    uint64_t end = it->first.span_end(depth);
    if (begin < clamped.end && clamped.start < end) {
      affected.push_back({ it->first, std::move(it->second) });
      it = retained_.erase(it);
    } else {
      ++it;
    }
  }

  for (auto& node : affected) {
    uint64_t begin = node.id.span_begin(depth);
    uint64_t end = node.id.span_end(depth);
    for (EpochRange piece : { EpochRange{ begin, std::max(begin, clamped.start) },
                              EpochRange{ std::min(end, clamped.end), end } }) {
      for (const auto& id : canonical_cover(piece, depth)) {
        auto child = derive_descendant(node, id, depth);
        retained_.emplace(child.id, std::move(child.key));
      }
    }
    node.key.wipe();
  }
}

KeyTree KeyTree::camera_frontier(uint64_t current_epoch) const
{
  check_epoch(current_epoch);
  KeyTree out = *this;
  out.puncture({ 0, current_epoch });
  return out;
}

void KeyTree::clear()
{
  for (auto& [id, key] : retained_)
    key.wipe();
  retained_.clear();
}

Bytes KeyTree::serialize() const
{
  Writer w;
  w.u8(static_cast<uint8_t>(params_.depth)).u32(params_.epoch_seconds).u64(params_.t0_ms);
  w.u32(static_cast<uint32_t>(retained_.size()));
  for (const auto& [id, key] : retained_)
    w.u8(static_cast<uint8_t>(id.level)).u64(id.index).raw(key.view());
  return w.take();
}

KeyTree KeyTree::parse(ByteView data)
{
  Reader r(data);
  TreeParams params;
  params.depth = r.u8();
  params.epoch_seconds = r.u32();
  params.t0_ms = r.u64();
  try {
    params.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Malformed, e.what());
  }
  KeyTree out(params);
  uint32_t count = r.u32();
  if (count > r.remaining() / 41)
    throw Error(ErrorCode::Malformed, "node count exceeds input");
  std::vector<NodeKey> nodes;
  nodes.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NodeKey n;
    n.id.level = r.u8();
    n.id.index = r.u64();
    n.key = SecretKey(r.raw(SecretKey::size));
    nodes.push_back(std::move(n));
  }
  r.expect_done();

  // Sorted by span so the overlap check is linear.
  std::sort(nodes.begin(), nodes.end(), [&](const NodeKey& a, const NodeKey& b) {
    return a.id.level > params.depth || b.id.level > params.depth
             ? a.id < b.id
             : a.id.span_begin(params.depth) < b.id.span_begin(params.depth);
  });
  uint64_t covered_until = 0;
  for (auto& n : nodes) {
    if (n.id.level > params.depth || n.id.index >= (uint64_t{ 1 } << n.id.level))
      throw Error(ErrorCode::Malformed, "node outside the tree");
    if (n.id.span_begin(params.depth) < covered_until)
      throw Error(ErrorCode::Malformed, "overlapping nodes");
    covered_until = n.id.span_end(params.depth);
    out.retained_.emplace(n.id, std::move(n.key));
  }
  return out;
}

} // namespace cactus::keytree
