#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace forge {

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// Streamed SHA-256 of a file's contents. Throws DataError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

// FNV-1a, used to derive per-item seeds from stable string ids.
std::uint64_t fnv1a64(std::string_view bytes);

// Deterministic non-negative request seed for (item, attempt). Retries get a
// fresh seed so they miss the response cache instead of replaying the reply
// that just failed to parse; replays of the same attempt still hit it.
std::int64_t derive_seed(std::string_view tag, int attempt, std::uint64_t salt);

}  // namespace forge
