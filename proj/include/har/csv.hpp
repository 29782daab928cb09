#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Minimal comma-separated text helpers shared by every file format in the
// pipeline. Fields never contain quotes or embedded commas.
namespace har::csv {

std::vector<std::string_view> split(std::string_view line, char sep = ',');

// Splits on '\n', strips a trailing '\r' per line, drops a final empty line.
std::vector<std::string_view> lines(std::string_view text);

// Shortest representation that parses back to the same double.
std::string format(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::string read_file(const std::filesystem::path& path);
// Creates parent directories as needed.
void write_file(const std::filesystem::path& path, std::string_view contents);

std::string_view trim(std::string_view text);

}  // namespace har::csv
