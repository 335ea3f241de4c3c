#pragma once

// Internal helpers shared by the library sources. Not installed.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "promptdst/error.hpp"

namespace promptdst::detail {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool is_blank(std::string_view s);

std::string read_file(const std::filesystem::path& path);
// Writes to "<path>.tmp" then renames over path.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

nlohmann::json parse_json_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

// JSON serialization where every floating-point number is written with 17
// significant digits (trailing zeros kept).
std::string dump_precise(const nlohmann::json& j);

// Calls fn(json) for each non-blank line; parse errors carry the line number.
template <typename Fn>
void for_each_json_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    ++line_no;
    if (!is_blank(line)) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + " at byte " +
                                          std::to_string(e.byte) + ": " + e.what());
      }
      fn(j);
    }
    pos = nl + 1;
  }
}

}  // namespace promptdst::detail
