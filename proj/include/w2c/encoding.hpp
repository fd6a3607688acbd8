#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace w2c {

std::string sha256_hex(std::string_view bytes);
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Whole file as bytes; throws InvalidValue when it cannot be read.
std::string read_file_bytes(const std::filesystem::path& path);

} // namespace w2c
