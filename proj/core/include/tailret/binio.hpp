#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "tailret/errors.hpp"

namespace tailret {

// Versioned little-endian container used by every persisted artifact:
//
//   bytes 0..3   magic "TLRT"
//   bytes 4..7   four-character artifact kind, e.g. "SIDX"
//   bytes 8..11  uint32 format version
//   payload      scalars written raw; strings and arrays as uint64 count + data
//
// Readers reject a kind or version mismatch with FormatError.
class BinaryWriter {
 public:
  BinaryWriter(const std::filesystem::path& path, std::string_view kind, std::uint32_t version);

  template <typename T>
    requires std::is_arithmetic_v<T>
  void write(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  void write_string(std::string_view s);

  template <typename T>
    requires std::is_arithmetic_v<T>
  void write_array(std::span<const T> values) {
    write<std::uint64_t>(values.size());
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes()));
  }

  // Flushes and checks the stream; throws Error on I/O failure.
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  BinaryReader(const std::filesystem::path& path, std::string_view kind, std::uint32_t version);

  template <typename T>
    requires std::is_arithmetic_v<T>
  T read() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    check();
    return value;
  }

  std::string read_string();

  template <typename T>
    requires std::is_arithmetic_v<T>
  std::vector<T> read_array() {
    const auto n = read<std::uint64_t>();
    if (n > (std::uint64_t{1} << 40) / sizeof(T)) throw FormatError(path_.string() + ": array too large");
    std::vector<T> values(n);
    in_.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(T)));
    check();
    return values;
  }

  // Throws FormatError if unread bytes remain.
  void expect_end();

 private:
  void check();

  std::filesystem::path path_;
  std::ifstream in_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace tailret
