#pragma once

#include <cstdint>
#include <string>

namespace repsim {

// SHA-256 digest of a byte string, lowercase hex.
std::string sha256_hex(const std::string& data);

} // namespace repsim
