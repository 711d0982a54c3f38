#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

namespace mttt {

/// RFC-4180 CSV emission with '.' decimal separator and a header row.
/// Doubles are printed in shortest round-trip form, independent of locale.
class CsvWriter {
 public:
  using Cell = std::variant<std::string, double, long long>;

  explicit CsvWriter(std::vector<std::string> header);

  void add_row(const std::vector<Cell>& row);
  std::size_t rows() const { return rows_; }

  const std::string& str() const { return text_; }
  void save(const std::filesystem::path& path) const;

  static std::string format_double(double v);
  static std::string quote(const std::string& field);

 private:
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string text_;
};

/// Minimal reader for files produced by CsvWriter (quoted fields supported).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace mttt
