#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace regretlab {

// Minimal CSV writer: comma separated, '.' decimal point, no quoting. Cells
// are numbers or identifier-like strings, so quoting is never needed.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(long value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(const std::string& value);
  void end_row();

  std::size_t columns() const { return header_.size(); }

 private:
  void separator();

  std::ofstream out_;
  std::vector<std::string> header_;
  std::size_t column_ = 0;
};

// Shortest round-trippable decimal for doubles; "inf"/"nan" for non-finite.
std::string format_number(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace regretlab
