#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace otsforge::csv {

using Row = std::vector<std::string>;

/// Every field quoted, embedded quotes doubled, '\n' line ends.
std::string format_row(const Row& row);
void write_row(std::ostream& out, const Row& row);

/// RFC 4180 reader (quoted or bare fields, CRLF tolerated).
class Table {
 public:
  static Table parse(std::string_view text);
  static Table read_file(const std::string& path);

  [[nodiscard]] const Row& header() const { return header_; }
  [[nodiscard]] const std::vector<Row>& rows() const { return rows_; }
  [[nodiscard]] std::size_t column(std::string_view name) const;
  /// Throws SchemaMismatch unless every name is present.
  void require(const std::vector<std::string>& names) const;
  [[nodiscard]] const std::string& at(std::size_t row, std::string_view name) const;

 private:
  Row header_;
  std::vector<Row> rows_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace otsforge::csv
