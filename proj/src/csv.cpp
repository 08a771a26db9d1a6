#include "repsim/csv.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace repsim {

CsvWriter::CsvWriter(std::vector<std::string> columns) : n_columns_(columns.size()) {
  if (columns.empty()) throw std::invalid_argument("CSV needs at least one column");
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i > 0) out_.push_back(',');
    out_ += columns[i];
  }
  out_.push_back('\n');
}

void CsvWriter::separator() {
  if (cells_in_row_ >= n_columns_) throw std::logic_error("CSV row has too many cells");
  if (cells_in_row_ > 0) out_.push_back(',');
  ++cells_in_row_;
}

CsvWriter& CsvWriter::cell(double v) {
  separator();
  out_ += format_double(v);
  return *this;
}

CsvWriter& CsvWriter::cell(std::uint64_t v) {
  separator();
  out_ += std::to_string(v);
  return *this;
}

CsvWriter& CsvWriter::cell(int v) {
  separator();
  out_ += std::to_string(v);
  return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
  separator();
  if (v.find_first_of(",\"\n") != std::string::npos)
    throw std::invalid_argument("CSV cell needs no quoting in this tool; got: " + v);
  out_ += v;
  return *this;
}

void CsvWriter::end_row() {
  if (cells_in_row_ != n_columns_) throw std::logic_error("CSV row has too few cells");
  out_.push_back('\n');
  cells_in_row_ = 0;
  ++rows_;
}

std::string CsvWriter::str() const {
  if (cells_in_row_ != 0) throw std::logic_error("CSV row left unfinished");
  return out_;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

} // namespace repsim
