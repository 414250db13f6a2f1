#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace epigraph {

// Shortest "%.17g" rendering; strtod on the result reproduces the value.
std::string format_double(double value);

std::vector<std::string> split_ws(std::string_view line);

// Throws Error(kParse) naming `what` when the token is not a full number.
double parse_double(const std::string& token, const std::string& what);
long long parse_int(const std::string& token, const std::string& what);

std::string read_text_file(const std::filesystem::path& path);
// Creates parent directories as needed; throws Error(kIo) on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

using Rng = std::mt19937_64;

// Derives an independent seed for a named random substream.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name);

}  // namespace epigraph
