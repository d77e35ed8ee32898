// Copyright 2026 adherelm contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adherelm/csv.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adherelm/errors.hpp"

namespace adherelm {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delimiter)) fields.push_back(field);
  if (!line.empty() && line.back() == delimiter) fields.emplace_back();
  return fields;
}

std::string trimmed(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

CsvTable::CsvTable(std::string path, std::vector<std::string> columns,
                   std::vector<std::vector<std::string>> rows)
    : path_(std::move(path)), columns_(std::move(columns)), rows_(std::move(rows)) {}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end())
    throw ValidationError(path_ + ": missing required column '" + name + "'");
  return static_cast<std::size_t>(it - columns_.begin());
}

const std::string& CsvTable::raw(std::size_t row, std::size_t col) const {
  return rows_[row][col];
}

void CsvTable::fail(std::size_t row, const std::string& col, const std::string& what) const {
  throw ValidationError(path_ + ":" + std::to_string(line_of(row)) + ": column '" + col +
                        "': " + what);
}

std::string CsvTable::get_string(std::size_t row, const std::string& col) const {
  const std::string value = trimmed(rows_[row][column(col)]);
  if (value.empty()) fail(row, col, "empty field");
  return value;
}

long CsvTable::get_long(std::size_t row, const std::string& col) const {
  const std::string value = get_string(row, col);
  long out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    fail(row, col, "expected integer, got '" + value + "'");
  return out;
}

double CsvTable::get_double(std::size_t row, const std::string& col) const {
  const std::string value = get_string(row, col);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    fail(row, col, "expected number, got '" + value + "'");
  return out;
}

CsvTable read_csv(const std::string& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw ValidationError(path + ": empty file, expected a header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> columns = split_line(line, delimiter);
  for (std::string& c : columns) c = trimmed(c);

  std::vector<std::vector<std::string>> rows;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_line(line, delimiter);
    if (fields.size() != columns.size())
      throw ValidationError(path + ":" + std::to_string(line_number) + ": expected " +
                            std::to_string(columns.size()) + " fields, got " +
                            std::to_string(fields.size()));
    rows.push_back(std::move(fields));
  }
  return CsvTable(path, std::move(columns), std::move(rows));
}

std::string format_double(double value) {
  char buf[40];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw ComputationError("format_double failed");
  return std::string(buf, ptr);
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!content.empty() && content.back() != '\n') out << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace adherelm
