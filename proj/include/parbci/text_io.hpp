#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace parbci {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

// Strict full-string parse; throws std::invalid_argument on trailing junk.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string> split(std::string_view line, char sep);

// Reads all lines; strips a trailing '\r'. Throws std::runtime_error if unreadable.
std::vector<std::string> read_lines(const std::string& path);

// Writes `content` atomically enough for our purposes (truncate + write).
void write_text_file(const std::string& path, const std::string& content);

// Runs a file parser, reporting field-level parse errors as std::runtime_error
// prefixed with the path.
template <class F>
auto with_file_context(const std::string& path, F&& parse) -> decltype(parse()) {
  try {
    return parse();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

} // namespace parbci
