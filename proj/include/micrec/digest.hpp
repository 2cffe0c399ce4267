#pragma once

#include <string>
#include <string_view>

namespace micrec {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
/// SHA-256 of a file's bytes; throws ConfigError when it cannot be read.
std::string sha256_file(const std::string& path);

}  // namespace micrec
