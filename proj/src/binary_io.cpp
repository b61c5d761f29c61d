#include "qac/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "qac/errors.hpp"

namespace qac {

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for large payloads.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset), chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) put_u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) put_u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::put_string(std::string_view s) {
  put_u64(s.size());
  bytes_.append(s);
}

std::string_view ByteReader::get_raw(std::size_t n) {
  if (n > remaining()) throw FormatError("unexpected end of data");
  auto out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::get_u8() { return static_cast<std::uint8_t>(get_raw(1)[0]); }

std::uint32_t ByteReader::get_u32() {
  const auto raw = get_raw(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
  return v;
}

std::uint64_t ByteReader::get_u64() {
  const auto raw = get_raw(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
  return v;
}

double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

std::string ByteReader::get_string() {
  const auto n = get_u64();
  return std::string(get_raw(n));
}

void write_container(const std::string& path, std::string_view magic, std::uint32_t version,
                     std::string_view payload) {
  ByteWriter w;
  w.put_raw(magic);
  w.put_u32(version);
  w.put_raw(payload);
  const auto crc = crc32(w.bytes());
  w.put_u32(crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw FormatError("write failed for " + path);
}

std::string read_container(const std::string& path, std::string_view magic, std::uint32_t version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (std::string_view(bytes).substr(0, magic.size()) != magic.substr(0, bytes.size()))
    throw FormatError(path + ": bad magic bytes");
  if (bytes.size() < magic.size() + 8) throw ChecksumError(path + ": file truncated, checksum missing");
  const std::string_view body(bytes.data(), bytes.size() - 4);
  ByteReader trailer(std::string_view(bytes).substr(bytes.size() - 4));
  if (crc32(body) != trailer.get_u32()) throw ChecksumError(path + ": checksum mismatch");

  ByteReader r(body);
  r.get_raw(magic.size());
  const auto found = r.get_u32();
  if (found != version)
    throw VersionMismatchError(path + ": format version " + std::to_string(found) + ", expected " +
                               std::to_string(version));
  return std::string(r.get_raw(r.remaining()));
}

}  // namespace qac
