#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "iie/model.hpp"

namespace iie::cli {

// Dataset CSV with header exactly y,a,m1,m2,x1[,x2,...]. Throws SchemaError
// naming the offending column.
Sample read_dataset(std::istream& in);
Sample read_dataset_file(const std::string& path);

// Doubles are written in shortest round-trip form.
void write_dataset(std::ostream& out, const Sample& s);

// Column-ordered CSV table; cells are preformatted strings.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row();
  CsvTable& add(const std::string& v);
  CsvTable& add(double v);
  CsvTable& add(long long v);
  CsvTable& add(int v) { return add(static_cast<long long>(v)); }
  CsvTable& add(std::size_t v) { return add(static_cast<long long>(v)); }
  CsvTable& add(bool v) { return add(std::string(v ? "true" : "false")); }

  std::size_t rows() const { return rows_.size(); }
  void write(std::ostream& out) const;
  void write_file(const std::string& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string sha256_hex(const std::string& data);

}  // namespace iie::cli
