#pragma once

#include <charconv>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace survchart::csv {

// Plain comma-separated values: one header line, no quoting or embedded
// commas. That covers every file format used here (numeric columns plus
// short unit labels).

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // comment lines ("# ...") before the header, without the marker
  std::vector<std::string> comments;
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline Table read(std::istream& in) {
  Table t;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (!have_header) t.comments.push_back(line.substr(1));
      continue;
    }
    if (!have_header) {
      t.header = split_line(line);
      have_header = true;
      continue;
    }
    auto fields = split_line(line);
    if (fields.size() != t.header.size())
      throw std::invalid_argument("csv row " + std::to_string(lineno) + ": expected " +
                                  std::to_string(t.header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw std::invalid_argument("csv: missing header line");
  return t;
}

// shortest representation that parses back to the same double
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& column, std::size_t row) {
  double v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw std::invalid_argument("row " + std::to_string(row) + ": non-numeric value '" + s +
                                "' in column '" + column + "'");
  return v;
}

} // namespace survchart::csv
