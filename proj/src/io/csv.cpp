#include "mfrpinp/io/csv.hpp"

#include <algorithm>
#include <charconv>

#include "mfrpinp/error.hpp"

namespace mfrpinp::io {
namespace {

std::vector<std::string_view> split(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.push_back(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << fields[i];
  }
  out << '\n';
}

CsvReader::CsvReader(std::istream& in) : in_(in) {
  std::string head;
  if (!std::getline(in_, head)) throw ParseError("empty file, expected a header row", 1);
  line_ = 1;
  strip_cr(head);
  for (auto f : split(head)) header_.emplace_back(f);
}

bool CsvReader::has_column(std::string_view name) const {
  return std::find(header_.begin(), header_.end(), name) != header_.end();
}

std::size_t CsvReader::column(std::string_view name) const {
  auto it = std::find(header_.begin(), header_.end(), name);
  if (it == header_.end()) throw ParseError("missing column '" + std::string(name) + "'", 1);
  return static_cast<std::size_t>(it - header_.begin());
}

bool CsvReader::next() {
  while (std::getline(in_, row_)) {
    ++line_;
    strip_cr(row_);
    if (row_.find_first_not_of(" \t") == std::string::npos) continue;
    fields_ = split(row_);
    if (fields_.size() != header_.size()) {
      throw ParseError("expected " + std::to_string(header_.size()) + " fields, found " +
                           std::to_string(fields_.size()),
                       line_);
    }
    return true;
  }
  return false;
}

double CsvReader::number(std::size_t col) const {
  std::string_view f = fields_.at(col);
  double v = 0.0;
  auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size()) {
    throw ParseError("malformed number '" + std::string(f) + "' in column '" + header_[col] + "'",
                     line_);
  }
  return v;
}

long long CsvReader::integer(std::size_t col) const {
  std::string_view f = fields_.at(col);
  long long v = 0;
  auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size()) {
    throw ParseError("malformed integer '" + std::string(f) + "' in column '" + header_[col] + "'",
                     line_);
  }
  return v;
}

}  // namespace mfrpinp::io
