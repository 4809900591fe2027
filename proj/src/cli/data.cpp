#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "vmp/cli.hpp"

namespace vmp::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

CsvData load_data_csv(const std::filesystem::path& path, std::string_view missing_token) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read data file " + path.string());
  CsvData out;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    ++rows;
    if (rows == 1) {
      cols = fields.size();
    } else if (fields.size() != cols) {
      throw RaggedRowError(path.string() + ": row " + std::to_string(rows) + " has " +
                           std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(cols));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto field = fields[c];
      if (field == missing_token) {
        out.tensor.values.push_back(std::numeric_limits<double>::quiet_NaN());
        out.mask.observed.push_back(0);
        continue;
      }
      double value = 0.0;
      const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc() || end != field.data() + field.size() || field.empty() ||
          !std::isfinite(value)) {
        throw NonNumericError(path.string() + ": row " + std::to_string(rows) + ", column " +
                              std::to_string(c + 1) + ": \"" + std::string(field) +
                              "\" is not a number");
      }
      out.tensor.values.push_back(value);
      out.mask.observed.push_back(1);
    }
  }
  if (in.bad()) throw IoError("error while reading " + path.string());
  if (rows == 0) throw IoError(path.string() + " holds no data");
  out.tensor.shape = {rows, cols};
  out.mask.shape = {rows, cols};
  return out;
}

}  // namespace vmp::cli
