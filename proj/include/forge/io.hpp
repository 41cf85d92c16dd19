#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace forge {

// Reads a whole file as bytes. Throws DataError if unreadable.
std::string read_file(const std::filesystem::path& path);

// Writes bytes to a temp file in the target directory, then renames over the
// destination. Creates parent directories. Throws DataError on any failure;
// never leaves a partial file at `path`.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);

// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ". Honors SOURCE_DATE_EPOCH for
// reproducible outputs.
std::string now_iso8601();

// Monotonic clock in milliseconds, for latency measurement.
std::int64_t steady_ms();

// Shortest decimal form that round-trips the exact double; used for CSV cells
// so equal numbers always print identically.
std::string format_double(double value);

}  // namespace forge
