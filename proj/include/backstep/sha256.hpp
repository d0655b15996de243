#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace backstep {

// FIPS 180-4 SHA-256, hex-encoded.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::vector<std::uint8_t>& data);
std::string sha256_file(const std::string& path);

}  // namespace backstep
