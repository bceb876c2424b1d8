#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sandlab::io {

/// Fixed-format float for reproducible CSV output ("%.12g").
std::string fmt(double v);

/// One CSV line from already-formatted cells.
std::string csv_row(const std::vector<std::string>& cells);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

std::uint64_t digest_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace sandlab::io
