#include "otsforge/csv.hpp"

#include <fstream>
#include <sstream>

#include "otsforge/error.hpp"

namespace otsforge::csv {

std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += '"';
    for (char c : row[i]) {
      if (c == '"') out += '"';
      out += c;
    }
    out += '"';
  }
  out += '\n';
  return out;
}

void write_row(std::ostream& out, const Row& row) { out << format_row(row); }

Table Table::parse(std::string_view text) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
      } else {
        field += c;
      }
      ++i;
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      end_row();
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      field += c;
      field_started = true;
    }
    ++i;
  }
  if (quoted) throw Error(ErrorKind::schema_mismatch, "csv: unterminated quote");
  if (field_started || !row.empty()) end_row();

  Table t;
  if (rows.empty()) throw Error(ErrorKind::schema_mismatch, "csv: missing header");
  t.header_ = std::move(rows.front());
  for (std::size_t k = 0; k < t.header_.size(); ++k) t.index_[t.header_[k]] = k;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() == 1 && rows[r][0].empty()) continue;
    if (rows[r].size() != t.header_.size())
      throw Error(ErrorKind::schema_mismatch,
                  "csv: row " + std::to_string(r) + " has " +
                      std::to_string(rows[r].size()) + " fields, header has " +
                      std::to_string(t.header_.size()));
    t.rows_.push_back(std::move(rows[r]));
  }
  return t;
}

Table Table::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::size_t Table::column(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw Error(ErrorKind::schema_mismatch, "csv: missing column '" + std::string(name) + "'");
  return it->second;
}

void Table::require(const std::vector<std::string>& names) const {
  for (const auto& n : names) (void)column(n);
}

const std::string& Table::at(std::size_t row, std::string_view name) const {
  return rows_.at(row)[column(name)];
}

}  // namespace otsforge::csv
