#pragma once

// Shared plumbing for the command-line tools.

#include <optional>
#include <string>

#include "cactus/bytes.hpp"
#include "cactus/keytree.hpp"

namespace cactus::cli {

/// RFC 3339 (`2026-10-16T08:30:00Z`, fractional seconds and numeric offsets
/// allowed) or `@<unix ms>`. Throws InvalidArgument.
uint64_t parse_time(const std::string& text);
std::string format_time(uint64_t ms);

/// Epochs overlapping the half-open interval [from_ms, to_ms).
keytree::EpochRange epochs_between(uint64_t from_ms, uint64_t to_ms, const keytree::TreeParams& params);

Bytes read_file(const std::string& path);
/// Temp file, fsync, rename; mode 0600.
void write_private(const std::string& path, ByteView data);

/// `explicit_path` when given, else $CACTUS_STATE. Throws when neither is set.
std::string state_path(const std::string& explicit_path);

/// Prints "error: ..." and returns the exit status for it.
int report(const std::exception& e);

} // namespace cactus::cli
