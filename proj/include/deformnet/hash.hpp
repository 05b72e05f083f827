#pragma once

#include <string>
#include <string_view>

namespace deformnet {

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's full contents. Throws ValidationError if unreadable.
std::string sha256_file(const std::string& path);

}  // namespace deformnet
