#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace mfrpinp::io {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Writes comma-joined fields and a newline.
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Header-addressed reader for the plain comma-separated files the tools
/// produce. No quoting; empty fields allowed.
class CsvReader {
 public:
  /// Reads the header line. Throws ParseError on an empty stream.
  explicit CsvReader(std::istream& in);

  const std::vector<std::string>& header() const { return header_; }
  /// Column index by name; ParseError naming the column if absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;

  /// Advances to the next non-blank row. False at end of input.
  bool next();
  /// 1-based line number of the current row.
  std::size_t line() const { return line_; }

  std::string_view field(std::size_t col) const { return fields_[col]; }
  bool empty(std::size_t col) const { return fields_[col].empty(); }
  /// Parses a double; ParseError with the line number on malformed text.
  double number(std::size_t col) const;
  long long integer(std::size_t col) const;

 private:
  std::istream& in_;
  std::vector<std::string> header_;
  std::string row_;
  std::vector<std::string_view> fields_;
  std::size_t line_ = 0;
};

}  // namespace mfrpinp::io
