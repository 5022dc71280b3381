#pragma once

// Minimal CSV helpers for the toolkit's own plain-text artifacts. Fields never
// contain commas, quotes or newlines, so no quoting is applied.

#include <string>
#include <string_view>
#include <vector>

namespace cellcount::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;

  // Column index by name; throws ParseError when absent.
  std::size_t column(std::string_view name) const;
};

// Parses text with a header line. Blank lines are skipped; a row whose field
// count differs from the header raises ParseError with its 1-based line number.
Table parse(std::string_view text);
std::string format(const Table& table);

Row split_line(std::string_view line);

// Shortest text that reads back to the same double.
std::string format_exact(double v);
// Fixed-point with `digits` decimals.
std::string format_fixed(double v, int digits);
// Strict conversion; throws ParseError(row) on junk.
double parse_double(std::string_view field, std::size_t row);
long long parse_int(std::string_view field, std::size_t row);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace cellcount::csv
