#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "aeronoise/civil_time.hpp"
#include "aeronoise/error.hpp"

namespace aeronoise {

inline std::string read_all(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return read_all(in);
}

/// Shortest round-trip decimal form; "-0" is folded to "0".
inline std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline void append_number(std::string& out, double v) {
  if (v == 0.0) {
    out += '0';
    return;
  }
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, p);
}

/// Comma-separated reader with a mandatory header row. No quoting: every
/// schema in this project holds opaque identifiers and plain numbers.
/// Blank lines are skipped; a trailing '\r' is tolerated.
class CsvReader {
 public:
  CsvReader(std::string_view text, std::span<const std::string_view> header)
      : text_(text), width_(header.size()) {
    if (!advance_line()) return;
    split();
    bool ok = fields_.size() == header.size();
    for (std::size_t i = 0; ok && i < header.size(); ++i) ok = fields_[i] == header[i];
    if (!ok) {
      std::string expect;
      for (auto h : header) expect += (expect.empty() ? "" : ",") + std::string(h);
      throw Error(ErrorKind::MalformedRow, "header must be '" + expect + "'", line_);
    }
    has_header_ = true;
  }

  /// Advances to the next data row.
  bool next() {
    if (!has_header_ || !advance_line()) return false;
    split();
    if (fields_.size() != width_)
      throw Error(ErrorKind::MalformedRow,
                  "expected " + std::to_string(width_) + " fields, found " +
                      std::to_string(fields_.size()),
                  line_);
    return true;
  }

  std::string_view operator[](std::size_t i) const { return fields_[i]; }
  std::size_t line() const { return line_; }

  double number(std::size_t i, std::string_view name) const {
    const auto f = fields_[i];
    double v = 0.0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || p != f.data() + f.size() || !std::isfinite(v))
      throw Error(ErrorKind::MalformedRow, std::string(name) + " not numeric", line_);
    return v;
  }

  std::int64_t integer(std::size_t i, std::string_view name) const {
    const auto f = fields_[i];
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || p != f.data() + f.size())
      throw Error(ErrorKind::MalformedRow, std::string(name) + " not an integer", line_);
    return v;
  }

  CivilTime time(std::size_t i, std::string_view name) const {
    auto t = parse_civil_time(fields_[i]);
    if (!t) throw Error(ErrorKind::MalformedRow, std::string(name) + " not a timestamp", line_);
    return *t;
  }

  CivilTime hour(std::size_t i, std::string_view name) const {
    const auto t = time(i, name);
    if (!t.on_hour())
      throw Error(ErrorKind::MalformedRow, std::string(name) + " not on the hour", line_);
    return t;
  }

  std::string_view id(std::size_t i, std::string_view name) const {
    if (fields_[i].empty())
      throw Error(ErrorKind::MalformedRow, std::string(name) + " empty", line_);
    return fields_[i];
  }

 private:
  bool advance_line() {
    while (pos_ < text_.size()) {
      const auto nl = text_.find('\n', pos_);
      const auto end = nl == std::string_view::npos ? text_.size() : nl;
      current_ = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_;
      if (!current_.empty() && current_.back() == '\r') current_.remove_suffix(1);
      if (!current_.empty()) return true;
    }
    return false;
  }

  void split() {
    fields_.clear();
    std::size_t start = 0;
    for (;;) {
      const auto comma = current_.find(',', start);
      if (comma == std::string_view::npos) {
        fields_.push_back(current_.substr(start));
        return;
      }
      fields_.push_back(current_.substr(start, comma - start));
      start = comma + 1;
    }
  }

  std::string_view text_;
  std::size_t width_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
  bool has_header_ = false;
  std::string_view current_;
  std::vector<std::string_view> fields_;
};

}  // namespace aeronoise
