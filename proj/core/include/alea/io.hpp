#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alea::io {

/// Ordered key=value pairs as used by dataset headers, checkpoint headers and
/// experiment config files.
using KeyValues = std::map<std::string, std::string>;

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
double parse_double(std::string_view text);
unsigned long long parse_uint(std::string_view text);

void write_f64_le(std::ostream& out, std::span<const double> values);
std::vector<double> read_f64_le(std::istream& in, std::size_t count);

/// Parses `key=value` lines. Blank lines and lines starting with '#' are skipped.
KeyValues parse_key_values(std::istream& in);
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(std::ostream& out, const KeyValues& values);

void write_f64_file(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace alea::io
