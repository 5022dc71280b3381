#include "cellcount/csv.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cellcount/errors.hpp"

namespace cellcount::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ParseError("csv: missing column '" + std::string(name) + "'", 1);
}

Row split_line(std::string_view line) {
  Row out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

Table parse(std::string_view text) {
  Table t;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    ++line_no;
    if (!line.empty()) {
      auto row = split_line(line);
      if (!have_header) {
        t.header = std::move(row);
        have_header = true;
      } else {
        if (row.size() != t.header.size()) {
          throw ParseError("csv: line " + std::to_string(line_no) + " has " +
                               std::to_string(row.size()) + " fields, expected " +
                               std::to_string(t.header.size()),
                           line_no);
        }
        t.rows.push_back(std::move(row));
      }
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  if (!have_header) throw ParseError("csv: missing header line", 1);
  return t;
}

std::string format(const Table& table) {
  std::ostringstream os;
  auto put = [&os](const Row& r) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  };
  put(table.header);
  for (const auto& r : table.rows) put(r);
  return os.str();
}

std::string format_exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double parse_double(std::string_view field, std::size_t row) {
  const auto f = trim(field);
  const std::string s(f);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ParseError("csv: row " + std::to_string(row) + ": '" + s + "' is not a number", row);
  }
  return v;
}

long long parse_int(std::string_view field, std::size_t row) {
  const auto f = trim(field);
  long long v = 0;
  const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
    throw ParseError("csv: row " + std::to_string(row) + ": '" + std::string(f) +
                         "' is not an integer",
                     row);
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace cellcount::csv
