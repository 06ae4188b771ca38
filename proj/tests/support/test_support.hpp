#pragma once

#include <random>
#include <vector>

#include "cactus/admin.hpp"
#include "cactus/identity.hpp"
#include "cactus/keytree.hpp"

namespace cactus::test {

/// RFC 5869 HKDF written directly over HMAC-SHA-256. Test-only oracle; the
/// library goes through OpenSSL's KDF provider instead.
Bytes oracle_hkdf(ByteView ikm, ByteView salt, ByteView info, size_t length);

/// Every leaf key of a full tree, derived top-down with oracle_hkdf and an
/// explicit breadth-first expansion (no use of the library's tree walk).
std::vector<ByteArray<32>> oracle_all_leaves(const ByteArray<32>& seed, unsigned depth);

/// Device key sets are expensive (RSA-3072), so tests share a small pool
/// cached on disk under the build tree.
const DeviceKeys& pooled_keys(size_t slot);

SecretKey random_secret(std::mt19937_64& rng);

/// Random non-empty range inside [0, leaves).
keytree::EpochRange random_range(std::mt19937_64& rng, uint64_t leaves);

struct Paired
{
  admin::CameraDevice camera;
  admin::OwnerDevice owner;
  escrow::Passphrase passphrase;
};

/// Runs an honest initialization pairing in-process. Factory, camera and
/// owner keys come from pool slots 0, 1 and 2 unless given.
Paired pair_devices(const keytree::TreeParams& params,
                    std::optional<SecretKey> seed = std::nullopt,
                    size_t factory_slot = 0,
                    size_t camera_slot = 1,
                    size_t owner_slot = 2);

} // namespace cactus::test
