#include "nmor/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "nmor/error.hpp"

#ifndef NMOR_VERSION
#define NMOR_VERSION "0.0.0"
#endif

namespace nmor {

std::string_view to_string(OutputFormat format) {
  return format == OutputFormat::csv ? "csv" : "jsonl";
}

OutputFormat output_format_from_string(std::string_view name) {
  if (name == "csv") return OutputFormat::csv;
  if (name == "jsonl") return OutputFormat::jsonl;
  throw ValidationError("unknown output format '" + std::string(name) + "' (csv|jsonl)", "format");
}

std::string_view extension(OutputFormat format) {
  return format == OutputFormat::csv ? ".csv" : ".jsonl";
}

void Table::add(std::vector<Cell> row) {
  if (row.size() != columns.size()) throw std::logic_error("table row has the wrong width");
  rows.push_back(std::move(row));
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

Json json_field(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  return std::get<std::string>(c);
}

}  // namespace

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    out += (i ? "," : "") + table.columns[i];
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += csv_field(row[i]);
    }
    out += '\n';
  }
  return out;
}

std::string to_jsonl(const Table& table) {
  std::string out;
  for (const auto& row : table.rows) {
    Json obj = Json::object();
    for (std::size_t i = 0; i < row.size(); ++i) obj[table.columns[i]] = json_field(row[i]);
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::string write_table(const std::filesystem::path& dir, std::string_view stem,
                        OutputFormat format, const Table& table) {
  std::string name = std::string(stem) + std::string(extension(format));
  write_text(dir / name, format == OutputFormat::csv ? to_csv(table) : to_jsonl(table));
  return name;
}

void write_text(const std::filesystem::path& file, std::string_view text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + file.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing " + file.string());
}

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + file.string(), "config");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view library_version() { return NMOR_VERSION; }

}  // namespace nmor
