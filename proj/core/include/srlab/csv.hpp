#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace srlab {

/// Minimal comma-separated table: one header row, then string cells.
/// Cells never contain commas or quotes in this project's schemas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write(std::ostream& out) const;
  std::string to_string() const;
  /// Throws std::invalid_argument with a line number on ragged input.
  static CsvTable parse(std::istream& in);
  static CsvTable parse(const std::string& text);

  /// Column index by name; throws std::invalid_argument if absent.
  std::size_t column(const std::string& name) const;
};

}  // namespace srlab
