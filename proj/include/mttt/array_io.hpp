#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mttt/complex_volume.hpp"

namespace mttt {

/// MTTT-ARRAY v1 on-disk layout:
///
///   8 bytes   magic "MTTTARR1"
///   4 bytes   little-endian u32 header length H
///   H bytes   UTF-8 JSON header {"dtype":"c64","shape":[...],
///             "axis_labels":[...],"endianness":"little"}
///   payload   row-major interleaved (re, im) little-endian float32 pairs
inline constexpr char kArrayMagic[8] = {'M', 'T', 'T', 'T', 'A', 'R', 'R', '1'};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  IoError(const std::string& message, std::filesystem::path path)
      : Error(message + ": " + path.string()), path_(std::move(path)) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Malformed MTTT-ARRAY content.
class ArrayFormatError : public Error {
 public:
  enum class Kind { BadMagic, Truncated, UnknownDtype, BadHeader };
  ArrayFormatError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ArrayHeader {
  std::string dtype = "c64";
  Shape shape;
  std::vector<std::string> axis_labels;
  std::string endianness = "little";
};

/// Serializes to an in-memory MTTT-ARRAY byte string. Validates shape/length
/// agreement and finiteness before producing any bytes.
std::vector<std::uint8_t> encode_array(const Shape& shape, std::span<const cplx> data,
                                       const std::vector<std::string>& axis_labels = {});
std::vector<std::uint8_t> encode_array(const ComplexVolume& v,
                                       const std::vector<std::string>& axis_labels = {});

ComplexVolume decode_array(std::span<const std::uint8_t> bytes, ArrayHeader* header = nullptr);

void write_array(const ComplexVolume& v, const std::filesystem::path& path,
                 const std::vector<std::string>& axis_labels = {});
void write_array(const Shape& shape, std::span<const cplx> data,
                 const std::filesystem::path& path,
                 const std::vector<std::string>& axis_labels = {});

ComplexVolume read_array(const std::filesystem::path& path, ArrayHeader* header = nullptr);

/// Rounds every component to float32, i.e. what a write/read cycle yields.
ComplexVolume quantize_f32(const ComplexVolume& v);

}  // namespace mttt
