#pragma once

// Tabular output (CSV or JSON lines) and small JSON helpers shared by the
// scenario runner and the CLI.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace nmor {

using Json = nlohmann::ordered_json;

enum class OutputFormat { csv, jsonl };

std::string_view to_string(OutputFormat format);
OutputFormat output_format_from_string(std::string_view name);
// ".csv" or ".jsonl"
std::string_view extension(OutputFormat format);

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
};

// Shortest text that reads back to the same double; fixed for every platform
// with IEEE doubles, so reruns give byte-identical files.
std::string format_number(double v);

std::string to_csv(const Table& table);
std::string to_jsonl(const Table& table);

// Writes dir/stem.{csv,jsonl} and returns the file name (relative to dir).
std::string write_table(const std::filesystem::path& dir, std::string_view stem,
                        OutputFormat format, const Table& table);

void write_text(const std::filesystem::path& file, std::string_view text);
std::string read_text(const std::filesystem::path& file);

// Version string recorded in manifests.
std::string_view library_version();

}  // namespace nmor
