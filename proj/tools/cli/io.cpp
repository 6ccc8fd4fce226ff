#include "cli/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "cli/config.hpp"
#include "iie/errors.hpp"

namespace iie::cli {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string where(const std::string& column, std::size_t line) {
  return "column '" + column + "' line " + std::to_string(line);
}

double parse_real(const std::string& s, const std::string& column, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw SchemaError(where(column, line) + ": '" + s + "' is not a finite real number");
  }
  return v;
}

int parse_binary(const std::string& s, const std::string& column, std::size_t line) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw SchemaError(where(column, line) + ": '" + s + "' is not 0 or 1");
}

}  // namespace

Sample read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty dataset: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);
  const std::vector<std::string> fixed{"y", "a", "m1", "m2"};
  for (std::size_t j = 0; j < fixed.size(); ++j) {
    if (j >= header.size()) throw SchemaError("missing column '" + fixed[j] + "'");
    if (header[j] != fixed[j]) {
      throw SchemaError("column " + std::to_string(j + 1) + " must be '" + fixed[j] + "', found '" +
                        header[j] + "'");
    }
  }
  if (header.size() < 5) throw SchemaError("missing column 'x1'");
  for (std::size_t j = 4; j < header.size(); ++j) {
    const std::string want = "x" + std::to_string(j - 3);
    if (header[j] != want) {
      throw SchemaError("column " + std::to_string(j + 1) + " must be '" + want + "', found '" +
                        header[j] + "'");
    }
  }
  const std::size_t dim = header.size() - 4;
  Sample s(dim);
  std::vector<double> x(dim);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != header.size()) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    }
    const double y = parse_real(f[0], "y", lineno);
    const int a = parse_binary(f[1], "a", lineno);
    const int m1 = parse_binary(f[2], "m1", lineno);
    const int m2 = parse_binary(f[3], "m2", lineno);
    for (std::size_t j = 0; j < dim; ++j) x[j] = parse_real(f[4 + j], header[4 + j], lineno);
    s.add(y, a, m1, m2, x);
  }
  if (s.size() == 0) throw SchemaError("dataset has no rows");
  return s;
}

Sample read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

void write_dataset(std::ostream& out, const Sample& s) {
  out << "y,a,m1,m2";
  for (std::size_t j = 0; j < s.dim(); ++j) out << ",x" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << format_double(s.y(i)) << ',' << s.a(i) << ',' << s.m1(i) << ',' << s.m2(i);
    for (std::size_t j = 0; j < s.dim(); ++j) out << ',' << format_double(s.x(i, j));
    out << '\n';
  }
}

CsvTable& CsvTable::row() {
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(const std::string& v) {
  rows_.back().push_back(v);
  return *this;
}

CsvTable& CsvTable::add(double v) { return add(std::isnan(v) ? std::string("NA") : format_double(v)); }

CsvTable& CsvTable::add(long long v) { return add(std::to_string(v)); }

void CsvTable::write(std::ostream& out) const {
  for (std::size_t j = 0; j < header_.size(); ++j) out << (j ? "," : "") << header_[j];
  out << '\n';
  for (const auto& r : rows_) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
    out << '\n';
  }
}

void CsvTable::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write(out);
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

}  // namespace iie::cli
