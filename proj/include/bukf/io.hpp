#pragma once

#include <cstdint>
#include <string>

namespace bukf {

inline constexpr const char* kToolVersion = "0.1.0";

std::string hex_hash(std::uint64_t h);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// Stable content hash of a file on disk (FNV-1a of the bytes).
std::uint64_t hash_file(const std::string& path);

}  // namespace bukf
