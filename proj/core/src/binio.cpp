#include "tailret/binio.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <memory>
#include <sstream>

namespace tailret {
namespace {

constexpr std::array<char, 4> kMagic{'T', 'L', 'R', 'T'};

std::array<char, 4> kind_tag(std::string_view kind) {
  if (kind.size() != 4) throw Error("artifact kind must be four characters: " + std::string(kind));
  return {kind[0], kind[1], kind[2], kind[3]};
}

std::string hex(const unsigned char* digest, unsigned int len) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kDigits[digest[i] >> 4]);
    out.push_back(kDigits[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace

BinaryWriter::BinaryWriter(const std::filesystem::path& path, std::string_view kind,
                           std::uint32_t version)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot open for writing: " + path.string());
  const auto tag = kind_tag(kind);
  out_.write(kMagic.data(), kMagic.size());
  out_.write(tag.data(), tag.size());
  write<std::uint32_t>(version);
}

void BinaryWriter::write_string(std::string_view s) {
  write<std::uint64_t>(s.size());
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw Error("write failed: " + path_.string());
  out_.close();
}

BinaryReader::BinaryReader(const std::filesystem::path& path, std::string_view kind,
                           std::uint32_t version)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error("cannot open for reading: " + path.string());
  std::array<char, 4> magic{};
  std::array<char, 4> tag{};
  in_.read(magic.data(), magic.size());
  in_.read(tag.data(), tag.size());
  check();
  if (magic != kMagic) throw FormatError(path.string() + ": not a tailret artifact");
  if (tag != kind_tag(kind)) {
    throw FormatError(path.string() + ": artifact kind '" + std::string(tag.data(), 4) +
                      "', expected '" + std::string(kind) + "'");
  }
  const auto found = read<std::uint32_t>();
  if (found != version) {
    throw FormatError(path.string() + ": format version " + std::to_string(found) +
                      ", expected " + std::to_string(version));
  }
}

std::string BinaryReader::read_string() {
  const auto n = read<std::uint64_t>();
  if (n > (std::uint64_t{1} << 32)) throw FormatError(path_.string() + ": string too large");
  std::string s(n, '\0');
  in_.read(s.data(), static_cast<std::streamsize>(n));
  check();
  return s;
}

void BinaryReader::expect_end() {
  if (in_.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path_.string() + ": trailing bytes");
  }
}

void BinaryReader::check() {
  if (!in_) throw FormatError(path_.string() + ": truncated artifact");
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  return hex(digest.data(), len);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for hashing: " + path.string());
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = in.gcount();
    if (got > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  return hex(digest.data(), len);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace tailret
