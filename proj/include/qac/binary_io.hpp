#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qac {

std::uint32_t crc32(std::string_view bytes);

/// Little-endian byte sink used by the trie and checkpoint formats.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_i64(std::int64_t v) { put_u64(static_cast<std::uint64_t>(v)); }
  void put_f64(double v);
  void put_string(std::string_view s);
  void put_raw(std::string_view s) { bytes_.append(s); }

  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

/// Bounds-checked reader; overruns throw FormatError.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint8_t get_u8();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  std::int64_t get_i64() { return static_cast<std::int64_t>(get_u64()); }
  double get_f64();
  std::string get_string();
  std::string_view get_raw(std::size_t n);

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

// Container layout: magic | u32 version | payload | u32 crc32(everything before).
void write_container(const std::string& path, std::string_view magic, std::uint32_t version,
                     std::string_view payload);

/// Verifies checksum, magic and version; returns the payload.
std::string read_container(const std::string& path, std::string_view magic, std::uint32_t version);

}  // namespace qac
