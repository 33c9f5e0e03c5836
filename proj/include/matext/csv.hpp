#pragma once

#include <string>
#include <vector>

namespace matext {

/// In-memory delimited table: header row plus string cells. Comma-separated,
/// RFC-style quoting (fields containing comma/quote/newline are quoted,
/// embedded quotes doubled), UTF-8 passed through untouched.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index for a header name, or -1 when absent.
  int col(const std::string& name) const;

  /// Column index for a header name; throws SchemaMismatch when absent.
  int require_col(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

std::string csv_to_string(const CsvTable& table);
void write_csv(const std::string& path, const CsvTable& table);

/// Writes a whole file; throws IOFailure on failure.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace matext
