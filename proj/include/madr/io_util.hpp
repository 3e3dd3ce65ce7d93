// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small helpers shared by the file formats and config readers.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace madr {

using nlohmann::json;

// Throws ConfigError naming the first key of `object` not in `allowed`.
void check_keys(const json& object, std::initializer_list<std::string_view> allowed,
                std::string_view context);

json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Resolves a config path: as given if it exists, otherwise relative to the
// directory named by MADR_CONFIG_DIR. Returns the input unchanged if neither
// exists.
std::filesystem::path resolve_config_path(const std::string& path);

// 64-bit FNV-1a.
std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Little-endian binary writer/reader. All multi-byte values on disk are
// little-endian regardless of host order.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}
  void bytes(const void* data, std::size_t size);
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  // u32 length followed by the raw bytes.
  void str(std::string_view s);

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string context)
      : in_(in), context_(std::move(context)) {}
  void bytes(void* data, std::size_t size);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str(std::size_t max_size = 1 << 24);

 private:
  std::istream& in_;
  std::string context_;
};

}  // namespace madr
