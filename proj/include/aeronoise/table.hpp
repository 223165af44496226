#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "aeronoise/csv.hpp"
#include "aeronoise/error.hpp"

namespace aeronoise {

/// Plot-ready output table; one in-memory form, written as CSV or JSON.
struct Table {
  using Cell = std::variant<std::monostate, std::string, double, std::int64_t>;

  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  // CSV spelling of a null cell; JSON always writes null.
  std::string null_token;

  static Cell opt(const std::optional<double>& v) {
    return v ? Cell{*v} : Cell{std::monostate{}};
  }

  std::string to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out += ',';
      out += columns[i];
    }
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        std::visit(
            [&](const auto& v) {
              using T = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<T, std::monostate>) out += null_token;
              else if constexpr (std::is_same_v<T, std::string>) out += v;
              else if constexpr (std::is_same_v<T, double>) append_number(out, v);
              else out += std::to_string(v);
            },
            row[i]);
      }
      out += '\n';
    }
    return out;
  }

  nlohmann::ordered_json to_json() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
      nlohmann::ordered_json obj = nlohmann::ordered_json::object();
      for (std::size_t i = 0; i < row.size(); ++i) {
        std::visit(
            [&](const auto& v) {
              using T = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<T, std::monostate>) obj[columns[i]] = nullptr;
              else obj[columns[i]] = v;
            },
            row[i]);
      }
      arr.push_back(std::move(obj));
    }
    return arr;
  }
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

enum class TableFormat { Csv, Json };

/// Writes `<stem>.csv` or `<stem>.json`; returns the path written.
inline std::string write_table(const std::string& stem, const Table& t, TableFormat fmt) {
  if (fmt == TableFormat::Csv) {
    write_text(stem + ".csv", t.to_csv());
    return stem + ".csv";
  }
  write_text(stem + ".json", t.to_json().dump(1) + "\n");
  return stem + ".json";
}

}  // namespace aeronoise
