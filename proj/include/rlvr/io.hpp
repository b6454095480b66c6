#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rlvr {

/// Shortest-round-trip is not used on purpose: every double is written with
/// 17 significant digits so files are byte-stable across runs.
std::string format_double(double x);

std::string format_vector(std::span<const double> v);
std::string format_vector(std::span<const std::size_t> v);

/// Writes `contents` to `path`, creating parent directories. Throws IoError.
void write_text_file(const std::filesystem::path& path, const std::string& contents);

/// Reads the whole file. Throws IoError.
std::string read_text_file(const std::filesystem::path& path);

/// Minimal CSV row builder; fields are never quoted (all fields are numbers or
/// identifiers).
class CsvRow {
 public:
  CsvRow& add(const std::string& field);
  CsvRow& add(double x);
  CsvRow& add(std::size_t x);
  CsvRow& add_empty();
  std::string str() const { return line_ + "\n"; }

 private:
  std::string line_;
  bool first_ = true;
};

}  // namespace rlvr
