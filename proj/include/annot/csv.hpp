#ifndef ANNOT_CSV_HPP
#define ANNOT_CSV_HPP

#include <string>
#include <string_view>
#include <vector>

namespace annot {

// Minimal RFC 4180-style CSV: fields containing comma, quote or newline are
// quoted, embedded quotes doubled. Enough for the gold-annotation exchange
// files, which carry raw corpus text.

std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

// Parses a whole CSV document (quoted fields may span lines). Rows of
// differing width are returned as-is; callers validate shape.
std::vector<std::vector<std::string>> csv_parse(std::string_view text);

// Reads and parses a CSV file; throws IoError if unreadable.
std::vector<std::vector<std::string>> csv_read_file(const std::string& path);

}  // namespace annot

#endif  // ANNOT_CSV_HPP
