#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace repsim {

// Comma-separated output with a mandatory header row, '.'-decimal numbers
// and LF line endings. Doubles are printed in shortest round-trip form so
// repeated runs are byte-identical.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns);

  CsvWriter& cell(double v);
  CsvWriter& cell(std::uint64_t v);
  CsvWriter& cell(int v);
  CsvWriter& cell(const std::string& v);
  void end_row();

  std::string str() const;
  std::size_t rows() const { return rows_; }

 private:
  void separator();
  std::size_t n_columns_;
  std::size_t cells_in_row_ = 0;
  std::size_t rows_ = 0;
  std::string out_;
};

std::string format_double(double v);

// Writes through a temp file in the same directory plus rename, so readers
// never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

} // namespace repsim
