#pragma once

// Small file helpers shared by the dataset, model and export writers.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace koopnet {

/// Decimal form that parses back to exactly `v`: the shortest such form with
/// up to 17 significant digits, or always 17 digits when `fixed17` is set.
std::string format_double(double v, bool fixed17 = false);
double parse_double(std::string_view text);

std::string read_text(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string hash_file(const std::filesystem::path& path);

}  // namespace koopnet
