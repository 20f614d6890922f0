#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace speckle {

/// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path &path, std::string_view contents);

std::string read_file(const std::filesystem::path &path);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

/// `key=value` lines; '#' starts a comment line. Duplicate keys: last wins.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(std::string_view text);

/// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

} // namespace speckle
