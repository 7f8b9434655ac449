#pragma once

#include <filesystem>
#include <string>

namespace utd {

/// Decimal text with 17 significant digits; parses back to the same double.
std::string format_real(double value);

/// Writes to a temporary sibling and renames it over `path`, so readers see
/// either the old file or the complete new one.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace utd
