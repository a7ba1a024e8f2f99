#pragma once

// TSV reading/writing, number formatting and small UTF-8 helpers shared by
// every file format in the project.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rtpower {

struct TsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // `# key=value` tokens found on comment lines before the header.
  std::map<std::string, std::string> metadata;

  bool has_column(std::string_view name) const;
  // Throws DataError naming the source when the column is missing.
  std::size_t column(std::string_view name) const;
};

// Lines starting with '#' are comments; `key=value` tokens on them are
// collected into metadata. The first non-comment line is the header.
TsvTable read_tsv(std::istream& in, const std::string& source);
TsvTable read_tsv_file(const std::string& path);

void write_tsv_row(std::ostream& out, std::span<const std::string> fields);
void write_tsv_row(std::ostream& out, std::initializer_list<std::string> fields);

std::vector<std::string> split(std::string_view text, char sep);
std::vector<std::string> split_whitespace(std::string_view text);
std::string join(std::span<const std::string> parts, std::string_view sep);

// Shortest representation that round-trips exactly.
std::string format_double(double value);

double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view text);
// Lowercases ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic letters.
std::string utf8_lowercase(std::string_view text);
// Strips ASCII punctuation from both ends.
std::string strip_punctuation(std::string_view text);

// 64-bit FNV-1a, used for config hashes and cache keys.
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace rtpower
