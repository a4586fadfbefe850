#pragma once

// Locale-independent number formatting, RFC-4180 CSV and figure datasets.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace eses {

// Shortest round-trip form capped at 12 significant digits.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  return std::string(buf, r.ptr);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

using Cell = std::variant<std::string, double, long long>;

inline std::string render_cell(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return csv_escape(*s);
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  return std::to_string(std::get<long long>(c));
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw std::logic_error("table row width does not match its header");
    rows.push_back(std::move(row));
  }

  std::string to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + csv_escape(columns[i]);
    out += "\r\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + render_cell(row[i]);
      out += "\r\n";
    }
    return out;
  }
};

struct FigureDataset {
  std::string id;  // file stem, e.g. "fig3.3"
  Table table;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::system_error(std::make_error_code(std::errc::io_error), "cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::system_error(std::make_error_code(std::errc::io_error), "short write to " + path.string());
}

inline std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Writes <id>.csv and <id>.meta.json; returns both paths.
inline std::vector<std::filesystem::path> emit_figure(const FigureDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto csv = dir / (ds.id + ".csv");
  const auto meta = dir / (ds.id + ".meta.json");
  write_file(csv, ds.table.to_csv());
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  m["figure_id"] = ds.id;
  m["columns"] = ds.table.columns;
  m["rows"] = ds.table.rows.size();
  for (const auto& [k, v] : ds.meta.items()) m[k] = v;
  write_file(meta, dump_json(m));
  return {csv, meta};
}

}  // namespace eses
