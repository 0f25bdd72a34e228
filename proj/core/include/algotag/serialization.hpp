#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace algotag {

using Json = nlohmann::json;

// Doubles are stored as base64 of their little-endian IEEE-754 bytes so that
// artifacts round-trip bit-exactly and stay compact.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

Json read_json_file(const std::filesystem::path& path);

// FNV-1a 64-bit, rendered as 16 hex digits. Used to fingerprint vocabularies.
std::string fingerprint(std::span<const std::string> tokens);

// Shortest round-trip decimal rendering of a double ("1", "0.5", "2.25").
std::string format_number(double value);

}  // namespace algotag
