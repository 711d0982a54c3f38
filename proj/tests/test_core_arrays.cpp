#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <random>

#include "mttt/array_io.hpp"
#include "mttt/csv.hpp"
#include "json.hpp"
#include "mttt/metrics.hpp"
#include "oracles.hpp"

using namespace mttt;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mttt_core_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(ComplexVolume, RejectsBadShapes) {
  EXPECT_THROW(ComplexVolume(Shape{}), ShapeError);
  EXPECT_THROW(ComplexVolume(Shape{2, 0}), ShapeError);
  EXPECT_THROW(ComplexVolume(Shape{1, 1, 1, 1, 1}), ShapeError);
  EXPECT_THROW(ComplexVolume(Shape{3}, std::vector<cplx>(2)), ShapeError);
}

TEST(ArrayIo, ZeroVolumeLayout) {
  const auto p = temp_path("zeros.mtta");
  write_array(ComplexVolume({2, 2}), p);
  const auto bytes = slurp(p);
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "MTTTARR1");
  const std::uint32_t hlen = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | (std::uint32_t(bytes[11]) << 24);
  EXPECT_EQ(bytes.size(), 12u + hlen + 32u);
  const auto header = nlohmann::json::parse(std::string(bytes.begin() + 12, bytes.begin() + 12 + hlen));
  EXPECT_EQ(header["dtype"], "c64");
  EXPECT_EQ(header["endianness"], "little");
  EXPECT_EQ(header["shape"], nlohmann::json::array({2, 2}));
  for (std::size_t i = 12 + hlen; i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(ArrayIo, PayloadIsInterleavedLittleEndianFloat) {
  ComplexVolume v({2});
  v[0] = {1.5, -2.0};
  v[1] = {0.25, 3.0};
  const auto bytes = encode_array(v);
  const std::size_t off = bytes.size() - 16;
  float f[4];
  std::memcpy(f, bytes.data() + off, 16);
  EXPECT_EQ(f[0], 1.5f);
  EXPECT_EQ(f[1], -2.0f);
  EXPECT_EQ(f[2], 0.25f);
  EXPECT_EQ(f[3], 3.0f);
}

TEST(ArrayIo, RandomRoundTripIsBitExact) {
  std::mt19937_64 rng(7);
  const auto p = temp_path("rand.mtta");
  const auto v = quantize_f32(oracle::random_volume({8, 8}, rng));
  write_array(v, p, {"x", "y"});
  ArrayHeader h;
  const auto w = read_array(p, &h);
  EXPECT_EQ(w, v);
  EXPECT_EQ(h.axis_labels, (std::vector<std::string>{"x", "y"}));
}

TEST(ArrayIo, RoundTripPropertyOverRandomShapes) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> rank(1, 4), ext(1, 32);
  for (int trial = 0; trial < 60; ++trial) {
    Shape s(std::size_t(rank(rng)));
    for (auto& e : s) e = std::size_t(ext(rng));
    while (shape_size(s) > 40000) s.back() = std::max<std::size_t>(1, s.back() / 2);
    const auto v = quantize_f32(oracle::random_volume(s, rng));
    const auto bytes = encode_array(v);
    EXPECT_EQ(decode_array(bytes), v);
    EXPECT_EQ(encode_array(decode_array(bytes)), bytes);
  }
}

TEST(ArrayIo, LengthMismatchRejectedBeforeWriting) {
  const auto p = temp_path("never.mtta");
  fs::remove(p);
  std::vector<cplx> data(2);
  EXPECT_THROW(write_array(Shape{3}, data, p), ShapeError);
  EXPECT_FALSE(fs::exists(p));
}

TEST(ArrayIo, NonFiniteRejected) {
  ComplexVolume v({2});
  v[1] = {std::nan(""), 0};
  EXPECT_THROW(encode_array(v), NumericError);
}

TEST(ArrayIo, DistinctErrorKinds) {
  std::mt19937_64 rng(3);
  auto bytes = encode_array(oracle::random_volume({4, 4}, rng));

  auto bad = bytes;
  std::memcpy(bad.data(), "XXXXXXXX", 8);
  try {
    decode_array(bad);
    FAIL();
  } catch (const ArrayFormatError& e) {
    EXPECT_EQ(e.kind(), ArrayFormatError::Kind::BadMagic);
  }

  auto trunc = bytes;
  trunc.resize(trunc.size() - 5);
  try {
    decode_array(trunc);
    FAIL();
  } catch (const ArrayFormatError& e) {
    EXPECT_EQ(e.kind(), ArrayFormatError::Kind::Truncated);
  }

  std::string s(bytes.begin(), bytes.end());
  const auto pos = s.find("c64");
  ASSERT_NE(pos, std::string::npos);
  s.replace(pos, 3, "f64");
  try {
    decode_array(std::vector<std::uint8_t>(s.begin(), s.end()));
    FAIL();
  } catch (const ArrayFormatError& e) {
    EXPECT_EQ(e.kind(), ArrayFormatError::Kind::UnknownDtype);
  }
}

TEST(ArrayIo, UnwritablePathIsIoError) {
  EXPECT_THROW(write_array(ComplexVolume({2}), "/nonexistent/dir/x.mtta"), IoError);
  EXPECT_THROW(read_array("/nonexistent/dir/x.mtta"), IoError);
}

TEST(Psnr, IdenticalGivesCap) {
  std::mt19937_64 rng(1);
  const auto v = oracle::random_volume({8, 8}, rng);
  EXPECT_EQ(psnr(v, v), kPsnrCap);
}

TEST(Psnr, GlobalPhaseGivesCap) {
  std::mt19937_64 rng(2);
  const auto v = oracle::random_volume({8, 8}, rng);
  EXPECT_EQ(psnr(v, v * std::polar(1.0, 1.234)), kPsnrCap);
}

TEST(Psnr, UniformMagnitudeOffset) {
  std::mt19937_64 rng(3);
  auto ref = oracle::random_volume({8, 8}, rng);
  double mx = 0;
  for (auto z : ref.values()) mx = std::max(mx, std::abs(z));
  auto est = ref;
  for (auto& z : est.values()) z = std::polar(std::abs(z) + 0.1 * mx, std::arg(z));
  EXPECT_NEAR(psnr(ref, est), 20.0, 1e-9);
}

TEST(Psnr, MatchesTwoPassComputation) {
  std::mt19937_64 rng(4);
  const auto a = oracle::random_volume({16, 16, 16}, rng);
  const auto b = oracle::random_volume({16, 16, 16}, rng);
  double mx = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mx = std::max(mx, std::abs(a[i]));
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i]) - std::abs(b[i]);
    se += d * d;
  }
  const double expected = 20 * std::log10(mx / std::sqrt(se / double(a.size())));
  EXPECT_NEAR(psnr(a, b), expected, 1e-10);
}

TEST(Psnr, NormalizationUsesReference) {
  std::mt19937_64 rng(5);
  const auto a = oracle::random_volume({8, 8}, rng);
  const auto b = a * 3.0;
  EXPECT_NE(psnr(a, b), psnr(b, a));
}

TEST(Psnr, Errors) {
  EXPECT_THROW(psnr(ComplexVolume({4}), ComplexVolume({5})), ShapeError);
  EXPECT_THROW(psnr(ComplexVolume({4}), ComplexVolume({4})), NumericError);
}

TEST(Csv, QuotingAndNumbers) {
  CsvWriter w({"name", "value", "count"});
  w.add_row({std::string("a,b"), 0.1, 3LL});
  w.add_row({std::string("say \"hi\""), -2.5e-7, -1LL});
  const auto t = parse_csv(w.str());
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "a,b");
  EXPECT_EQ(std::stod(t.rows[0][1]), 0.1);
  EXPECT_EQ(t.rows[1][0], "say \"hi\"");
  EXPECT_EQ(std::stod(t.rows[1][1]), -2.5e-7);
  EXPECT_EQ(t.column("count"), 2u);
  EXPECT_THROW(w.add_row({1.0}), Error);
}

TEST(Csv, DoublesRoundTrip) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1e3);
  for (int i = 0; i < 200; ++i) {
    const double v = n(rng);
    EXPECT_EQ(std::stod(CsvWriter::format_double(v)), v);
  }
}
