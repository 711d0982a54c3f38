#include "mttt/array_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace mttt {

namespace {

static_assert(std::endian::native == std::endian::little,
              "MTTT-ARRAY encoding assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  put_u32(out, bits);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_array(const Shape& shape, std::span<const cplx> data,
                                       const std::vector<std::string>& axis_labels) {
  validate_shape(shape);
  if (data.size() != shape_size(shape))
    throw ShapeError("write_array: " + std::to_string(data.size()) +
                     " samples do not fill shape " + shape_string(shape));
  if (!axis_labels.empty() && axis_labels.size() != shape.size())
    throw ShapeError("write_array: axis label count does not match rank");
  for (const auto& z : data)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw NumericError("write_array: non-finite sample");

  nlohmann::ordered_json header;
  header["dtype"] = "c64";
  header["shape"] = shape;
  if (axis_labels.empty()) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < shape.size(); ++i) labels.push_back("d" + std::to_string(i));
    header["axis_labels"] = labels;
  } else {
    header["axis_labels"] = axis_labels;
  }
  header["endianness"] = "little";
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(12 + text.size() + 8 * data.size());
  out.insert(out.end(), std::begin(kArrayMagic), std::end(kArrayMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& z : data) {
    put_f32(out, static_cast<float>(z.real()));
    put_f32(out, static_cast<float>(z.imag()));
  }
  return out;
}

std::vector<std::uint8_t> encode_array(const ComplexVolume& v,
                                       const std::vector<std::string>& axis_labels) {
  return encode_array(v.shape(), v.data(), axis_labels);
}

ComplexVolume decode_array(std::span<const std::uint8_t> bytes, ArrayHeader* header_out) {
  using Kind = ArrayFormatError::Kind;
  if (bytes.size() < 8) throw ArrayFormatError(Kind::Truncated, "array: missing magic");
  if (std::memcmp(bytes.data(), kArrayMagic, 8) != 0)
    throw ArrayFormatError(Kind::BadMagic, "array: bad magic");
  if (bytes.size() < 12) throw ArrayFormatError(Kind::Truncated, "array: missing header length");
  const std::uint32_t hlen = get_u32(bytes.data() + 8);
  if (bytes.size() < 12ull + hlen) throw ArrayFormatError(Kind::Truncated, "array: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw ArrayFormatError(Kind::BadHeader, std::string("array: header is not JSON: ") + e.what());
  }
  ArrayHeader h;
  try {
    h.dtype = header.at("dtype").get<std::string>();
    h.shape = header.at("shape").get<Shape>();
    if (header.contains("axis_labels"))
      h.axis_labels = header.at("axis_labels").get<std::vector<std::string>>();
    if (header.contains("endianness")) h.endianness = header.at("endianness").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ArrayFormatError(Kind::BadHeader, std::string("array: malformed header: ") + e.what());
  }
  if (h.dtype != "c64") throw ArrayFormatError(Kind::UnknownDtype, "array: unknown dtype " + h.dtype);
  if (h.endianness != "little")
    throw ArrayFormatError(Kind::BadHeader, "array: unsupported endianness " + h.endianness);
  try {
    validate_shape(h.shape);
  } catch (const ShapeError& e) {
    throw ArrayFormatError(Kind::BadHeader, std::string("array: ") + e.what());
  }

  const std::size_t n = shape_size(h.shape);
  const std::size_t payload = bytes.size() - 12 - hlen;
  if (payload < 8 * n)
    throw ArrayFormatError(Kind::Truncated, "array: payload has " + std::to_string(payload) +
                                                " bytes, shape requires " + std::to_string(8 * n));
  if (payload > 8 * n) throw ArrayFormatError(Kind::BadHeader, "array: trailing payload bytes");

  std::vector<cplx> data(n);
  const std::uint8_t* p = bytes.data() + 12 + hlen;
  for (std::size_t i = 0; i < n; ++i, p += 8) {
    const float re = std::bit_cast<float>(get_u32(p));
    const float im = std::bit_cast<float>(get_u32(p + 4));
    data[i] = cplx(re, im);
  }
  if (header_out) *header_out = h;
  return ComplexVolume(h.shape, std::move(data));
}

void write_array(const Shape& shape, std::span<const cplx> data, const std::filesystem::path& path,
                 const std::vector<std::string>& axis_labels) {
  const auto bytes = encode_array(shape, data, axis_labels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing", path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed", path);
}

void write_array(const ComplexVolume& v, const std::filesystem::path& path,
                 const std::vector<std::string>& axis_labels) {
  write_array(v.shape(), v.data(), path, axis_labels);
}

ComplexVolume read_array(const std::filesystem::path& path, ArrayHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading", path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed", path);
  return decode_array(bytes, header);
}

ComplexVolume quantize_f32(const ComplexVolume& v) {
  ComplexVolume out = v;
  for (auto& z : out.data())
    z = cplx(static_cast<float>(z.real()), static_cast<float>(z.imag()));
  return out;
}

}  // namespace mttt
