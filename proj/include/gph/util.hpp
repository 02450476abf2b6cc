#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace gph {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Digest over an ordered list of fields. Fields are length-prefixed, so
/// ("ab", "c") and ("a", "bc") hash differently.
std::string field_digest(std::initializer_list<std::string_view> fields);
std::string field_digest(const std::vector<std::string>& fields);

/// First 64 bits of SHA-256(data), big-endian.
std::uint64_t hash64(std::string_view data);

// Text helpers. All operate on UTF-8 bytes; only ASCII whitespace is
// considered whitespace.
bool is_space(char c);
std::string_view trim(std::string_view s);
std::string_view rtrim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::vector<std::string_view> split_lines(std::string_view s);
std::size_t count_words(std::string_view s);
/// Replaces every `{name}` with its value. Unknown placeholders are left as is.
std::string substitute(std::string_view tmpl,
                       std::initializer_list<std::pair<std::string_view, std::string_view>> vars);

// Files.
std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
/// Like write_file_atomic but never replaces an existing file. Returns false
/// when `path` already existed (the new contents are discarded).
bool write_file_exclusive(const std::filesystem::path& path, std::string_view contents);

/// ISO-8601 UTC timestamp with second precision.
std::string utc_timestamp();

/// Clock returning ISO-8601 strings; injectable so tests can freeze time.
using Clock = std::function<std::string()>;
Clock system_clock();

/// Rounds to one decimal, the display precision of every table.
double round_percent(double value);
/// round_percent rendered as text.
std::string format_percent(double value);

}  // namespace gph
