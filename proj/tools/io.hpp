#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace spa::io {

/// 17 significant digits, enough to round-trip a double.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

/// Canonical text of a JSON document (2-space indent, trailing newline).
std::string dump_json(const nlohmann::json& doc);

}  // namespace spa::io
