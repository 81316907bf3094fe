#pragma once

// Small text and file helpers shared by the loaders and report writers.

#include <charconv>
#include <filesystem>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace gesturerep::textio {

std::vector<std::string> split_csv(std::string_view line);
bool is_blank(std::string_view line);
std::string_view trim(std::string_view s);

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

// Shortest representation that round-trips exactly.
std::string format_number(double v);

// Flat `key = value` lines; '#' starts a comment. Duplicate keys and lines
// without '=' raise ParseError naming source:line.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text, const std::string& source);
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace gesturerep::textio
