#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mdr {

// Writes to <path>.tmp and renames over path, so readers never observe a
// half-written file. Creates parent directories as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_text_file(const std::string& path);

}  // namespace mdr
