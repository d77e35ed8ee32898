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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adherelm {

/// Comma-delimited table with a header row. Field errors carry file, line
/// and column so a bad row in a 36k-patient extract can be found.
class CsvTable {
 public:
  CsvTable(std::string path, std::vector<std::string> columns,
           std::vector<std::vector<std::string>> rows);

  std::size_t n_rows() const { return rows_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }
  const std::string& path() const { return path_; }

  /// Column index; throws ValidationError if the header lacks the column.
  std::size_t column(const std::string& name) const;

  const std::string& raw(std::size_t row, std::size_t col) const;
  std::string get_string(std::size_t row, const std::string& col) const;
  long get_long(std::size_t row, const std::string& col) const;
  double get_double(std::size_t row, const std::string& col) const;

  /// 1-based line number of a data row in the source file.
  std::size_t line_of(std::size_t row) const { return row + 2; }

  [[noreturn]] void fail(std::size_t row, const std::string& col,
                         const std::string& what) const;

 private:
  std::string path_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// Reads a delimited file; every data row must have as many fields as the
/// header. Throws IoError if the file cannot be opened and ValidationError
/// on structural problems.
CsvTable read_csv(const std::string& path, char delimiter = ',');

/// Shortest round-trip formatting (via std::to_chars) so artifacts are
/// byte-stable across reruns.
std::string format_double(double value);

/// Writes lines joined by '\n' with a trailing newline; creates parent
/// directories. Throws IoError on failure.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace adherelm
