#include "acfnet/io_util.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace acfnet {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_file_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw FormatError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& contents) {
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(contents.data()),
                                           contents.size()));
}

}  // namespace acfnet
