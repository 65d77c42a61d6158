#include "regretlab/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "regretlab/error.hpp"

namespace regretlab {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
    : out_(path), header_(std::move(header)) {
  if (!out_) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (i) out_ << ',';
    out_ << header_[i];
  }
  out_ << '\n';
}

void CsvWriter::separator() {
  if (column_ >= header_.size()) fail(ErrorCode::kIo, "CSV row longer than header");
  if (column_ > 0) out_ << ',';
  ++column_;
}

CsvWriter& CsvWriter::cell(double value) {
  separator();
  out_ << format_number(value);
  return *this;
}

CsvWriter& CsvWriter::cell(long long value) {
  separator();
  out_ << value;
  return *this;
}

CsvWriter& CsvWriter::cell(const std::string& value) {
  separator();
  out_ << value;
  return *this;
}

void CsvWriter::end_row() {
  if (column_ != header_.size()) fail(ErrorCode::kIo, "CSV row shorter than header");
  out_ << '\n';
  column_ = 0;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  CsvTable table;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (std::getline(in, line)) table.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty()) table.rows.push_back(split(line));
  }
  return table;
}

}  // namespace regretlab
