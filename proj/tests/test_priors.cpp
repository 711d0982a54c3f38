#include <gtest/gtest.h>

#include <random>

#include "mttt/array_io.hpp"
#include "mttt/motion.hpp"
#include "mttt/reconstructor.hpp"
#include "oracles.hpp"

using namespace mttt;

namespace {

// Columns of a random n × d matrix orthonormalized by modified Gram-Schmidt.
SubspaceBasis orthonormal_basis(std::size_t n, std::size_t d, std::uint64_t seed) {
  auto b = gaussian_basis(n, d, seed);
  for (std::size_t j = 0; j < d; ++j) {
    double* cj = b.u.data() + j * n;
    for (std::size_t i = 0; i < j; ++i) {
      const double* ci = b.u.data() + i * n;
      double dot = 0;
      for (std::size_t r = 0; r < n; ++r) dot += ci[r] * cj[r];
      for (std::size_t r = 0; r < n; ++r) cj[r] -= dot * ci[r];
    }
    double nn = 0;
    for (std::size_t r = 0; r < n; ++r) nn += cj[r] * cj[r];
    for (std::size_t r = 0; r < n; ++r) cj[r] /= std::sqrt(nn);
  }
  return b;
}

ComplexVolume from_real(const Shape& s, const std::vector<double>& re) {
  ComplexVolume v(s);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = re[i];
  return v;
}

void check_vjp(const Reconstructor& r, const ComplexVolume& x, std::mt19937_64& rng, double tol) {
  const auto g = oracle::random_volume(x.shape(), rng);
  const auto dx = oracle::random_volume(x.shape(), rng);
  const auto v = r.vjp(x, g);
  const double h = 1e-6;
  const auto jdx = (r.apply(x + dx * h) - r.apply(x - dx * h)) * (1.0 / (2 * h));
  const double lhs = inner(g, jdx).real();
  const double rhs = inner(v, dx).real();
  EXPECT_NEAR(lhs, rhs, tol * std::max(1.0, std::abs(lhs)));
}

}  // namespace

TEST(Identity, PassesThroughAndPreservesShape) {
  std::mt19937_64 rng(1);
  const IdentityReconstructor id;
  const auto x = oracle::random_volume({6, 5, 4}, rng);
  EXPECT_EQ(id.apply(x), x);
  EXPECT_TRUE(id.differentiable());
  check_vjp(id, x, rng, 1e-8);
}

TEST(Identity, MotionFreeFullySampledLossVanishes) {
  std::mt19937_64 rng(2);
  const Shape s{16, 16};
  const auto mask = make_mask(plane_for(s), 1.0, MaskKind::UniformRandom, 0);
  const MotionOperator op(s, make_coils(s, 3, 0), make_trajectory(mask, 2, TrajectoryOrder::Random, 0));
  const auto x = oracle::random_volume(s, rng);
  const auto y = op.forward(x, op.zero_motion());
  const IdentityReconstructor id;
  const auto pred = op.forward(id.apply(op.corrected_zf(y, op.zero_motion())), op.zero_motion());
  EXPECT_LT(norm1(pred - y) / norm1(y), 1e-5);
}

TEST(SubspaceProjector, ReconstructsSpanMemberFromFullData) {
  const Shape s{32, 32};
  const auto basis = gaussian_basis(1024, 16, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> c(16);
  for (auto& v : c) v = n(rng);
  const auto x = from_real(s, basis.synthesize(c));
  const auto mask = make_mask(plane_for(s), 1.0, MaskKind::UniformRandom, 0);
  const MotionOperator op(s, make_coils(s, 1, 0), make_trajectory(mask, 1, TrajectoryOrder::Random, 0));
  const SubspaceProjector f(basis, s, double(op.num_points()));
  EXPECT_DOUBLE_EQ(f.scale(), 1.0);
  const auto rec = f.apply(op.corrected_zf(op.forward(x, op.zero_motion()), op.zero_motion()));
  const double bound = 3 * std::sqrt(16.0 / 1024) + 2 * std::sqrt(16.0 / 1024);
  EXPECT_LT(relative_error(rec, x), bound);
}

TEST(SubspaceProjector, SuppressesOrthogonalComplement) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto basis = gaussian_basis(1024, 16, 100 + trial);
    const auto q = orthonormal_basis(1024, 16, 100 + trial);
    std::vector<double> x(1024);
    for (auto& v : x) v = n(rng);
    const auto coef = q.project(x);
    const auto par = q.synthesize(coef);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= par[i];
    const SubspaceProjector f(basis, {32, 32}, 1024);
    const auto xv = from_real({32, 32}, x);
    EXPECT_LE(norm2(f.apply(xv)), 0.3 * norm2(xv));
  }
}

TEST(SubspaceProjector, FullRankOrthonormalIsIdentity) {
  std::mt19937_64 rng(6);
  const auto basis = orthonormal_basis(64, 64, 7);
  const SubspaceProjector f(basis, {8, 8}, 64);
  const auto x = oracle::random_volume({8, 8}, rng);
  EXPECT_LT(relative_error(f.apply(x), x), 1e-10);
}

TEST(SubspaceProjector, LinearOnRealAndImaginaryParts) {
  std::mt19937_64 rng(7);
  const auto basis = gaussian_basis(256, 8, 8);
  const SubspaceProjector f(basis, {16, 16}, 128);
  const auto a = oracle::random_volume({16, 16}, rng);
  const auto b = oracle::random_volume({16, 16}, rng);
  const auto lhs = f.apply(a * 2.0 + b * cplx(0, 1));
  const auto rhs = f.apply(a) * 2.0 + f.apply(b) * cplx(0, 1);
  EXPECT_LT(relative_error(lhs, rhs), 1e-12);
  check_vjp(f, a, rng, 1e-6);
}

TEST(SubspaceProjector, LipschitzBound) {
  std::mt19937_64 rng(8);
  const auto basis = gaussian_basis(256, 16, 9);
  const double sampled = 100;
  const SubspaceProjector f(basis, {16, 16}, sampled);
  // σ_max(UUᵀ) = σ_max(UᵀU) by power iteration on the d × d Gram matrix.
  std::vector<double> v(16, 1.0);
  double sigma = 0;
  for (int it = 0; it < 200; ++it) {
    const auto u = basis.synthesize(v);
    auto w = basis.project(u);
    double nn = 0;
    for (double z : w) nn += z * z;
    sigma = std::sqrt(nn);
    for (std::size_t i = 0; i < 16; ++i) v[i] = w[i] / sigma;
  }
  const double L = std::max(1.0, 256 * sigma / sampled);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_volume({16, 16}, rng);
    const auto b = oracle::random_volume({16, 16}, rng);
    EXPECT_LE(norm2(f.apply(a) - f.apply(b)), L * norm2(a - b) * (1 + 1e-9));
  }
}

TEST(SubspaceProjector, RejectsBadDimensions) {
  const auto basis = gaussian_basis(256, 8, 1);
  EXPECT_THROW(SubspaceProjector(basis, {16, 15}, 100), ShapeError);
  const SubspaceProjector f(basis, {16, 16}, 100);
  EXPECT_THROW(f.apply(ComplexVolume({8, 32})), ShapeError);
}

TEST(Haar, ZeroThresholdIsIdentity) {
  std::mt19937_64 rng(9);
  for (const Shape& s : {Shape{16, 16}, Shape{13, 10}, Shape{8, 8, 8}}) {
    const HaarDenoiser h(0.0, 2);
    const auto x = oracle::random_volume(s, rng);
    EXPECT_LT(relative_error(h.apply(x), x), 1e-10);
  }
}

TEST(Haar, ConstantImageUnchanged) {
  ComplexVolume x({16, 16});
  x.fill({0.7, -0.2});
  const HaarDenoiser h(5.0, 3);
  EXPECT_LT(relative_error(h.apply(x), x), 1e-12);
}

TEST(Haar, SingleDetailCoefficientShrinks) {
  const double tau = 0.3;
  ComplexVolume c({16, 16});
  const auto detail = haar_detail_mask({16, 16}, 2);
  std::size_t idx = 0;
  while (!detail[idx]) ++idx;
  c[idx] = std::polar(2 * tau, 0.4);
  const HaarDenoiser h(tau, 2);
  const auto out = haar_forward(h.apply(haar_inverse(c, 2)), 2);
  EXPECT_NEAR(std::abs(out[idx] - std::polar(tau, 0.4)), 0.0, 1e-12);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (i != idx) EXPECT_NEAR(std::abs(out[i]), 0.0, 1e-12);
}

TEST(Haar, TransformIsOrthonormal) {
  std::mt19937_64 rng(10);
  const auto x = oracle::random_volume({16, 8, 8}, rng);
  const auto c = haar_forward(x, 3);
  EXPECT_NEAR(norm2(c), norm2(x), 1e-10 * norm2(x));
  EXPECT_LT(relative_error(haar_inverse(c, 3), x), 1e-12);
  EXPECT_THROW(haar_forward(oracle::random_volume({12, 8}, rng), 3), ShapeError);
}

TEST(Haar, SoftThreshold) {
  EXPECT_EQ(soft_threshold({0.1, 0}, 0.2), cplx(0));
  EXPECT_NEAR(std::abs(soft_threshold({3, 4}, 1) - cplx(2.4, 3.2)), 0.0, 1e-14);
}

TEST(Haar, NonExpansive) {
  std::mt19937_64 rng(11);
  const HaarDenoiser h(0.4, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_volume({12, 20}, rng);
    const auto b = oracle::random_volume({12, 20}, rng);
    EXPECT_LE(norm2(h.apply(a) - h.apply(b)), norm2(a - b) * (1 + 1e-12));
  }
}

TEST(Haar, VjpMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  check_vjp(HaarDenoiser(0.3, 2), oracle::random_volume({16, 12}, rng), rng, 1e-5);
  check_vjp(HaarDenoiser(0.3, 1, HaarDenoiser::Mode::SliceWise, 1), oracle::random_volume({8, 6, 8}, rng), rng,
            1e-5);
}

TEST(Haar, SliceWiseReassemblesPerSlice) {
  std::mt19937_64 rng(13);
  const auto x = oracle::random_volume({8, 6, 10}, rng);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const HaarDenoiser sw(0.5, 1, HaarDenoiser::Mode::SliceWise, axis);
    const HaarDenoiser native(0.5, 1);
    const auto out = sw.apply(x);
    for (std::size_t i = 0; i < x.extent(axis); ++i) {
      const auto expect = native.apply(extract_slice(x, axis, i));
      EXPECT_EQ(extract_slice(out, axis, i), expect);
    }
  }
  auto y = x;
  insert_slice(y, 1, 3, extract_slice(x, 1, 3));
  EXPECT_EQ(y, x);
}

TEST(Haar, PadAdjoint) {
  std::mt19937_64 rng(14);
  const auto x = oracle::random_volume({5, 7}, rng);
  const auto p = oracle::random_volume({8, 8}, rng);
  const cplx lhs = inner(pad_edge(x, {8, 8}), p);
  const cplx rhs = inner(x, pad_edge_adjoint(p, {5, 7}));
  EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::abs(lhs));
}

class External : public ::testing::Test {
 protected:
  static std::vector<std::string> child(const std::string& mode) { return {ECHO_CHILD_PATH, mode}; }
};

TEST_F(External, EchoIsIdentity) {
  std::mt19937_64 rng(15);
  const ExternalReconstructor r(child("echo"), {8, 6});
  EXPECT_FALSE(r.differentiable());
  for (int i = 0; i < 3; ++i) {
    const auto x = quantize_f32(oracle::random_volume({8, 6}, rng));
    EXPECT_EQ(r.apply(x), x);
  }
  EXPECT_THROW(r.apply(ComplexVolume({6, 8})), ShapeError);
}

TEST_F(External, WrongShapeReply) {
  const ExternalReconstructor r(child("wrong-shape"), {4, 4});
  try {
    r.apply(ComplexVolume({4, 4}));
    FAIL();
  } catch (const ExternalError& e) {
    EXPECT_EQ(e.kind(), ExternalError::Kind::ShapeMismatch);
  }
}

TEST_F(External, ChildDiesMidFrame) {
  const ExternalReconstructor r(child("die-mid-frame"), {8, 8});
  try {
    r.apply(ComplexVolume({8, 8}));
    FAIL();
  } catch (const ExternalError& e) {
    EXPECT_EQ(e.kind(), ExternalError::Kind::Truncated);
  }
  EXPECT_TRUE(r.reaped());
}

TEST_F(External, BadHandshake) {
  try {
    ExternalReconstructor r(child("bad-handshake"), {4, 4});
    FAIL();
  } catch (const ExternalError& e) {
    EXPECT_EQ(e.kind(), ExternalError::Kind::Startup);
  }
}

TEST_F(External, Timeout) {
  const ExternalReconstructor r(child("hang"), {4, 4}, std::chrono::milliseconds(300));
  try {
    r.apply(ComplexVolume({4, 4}));
    FAIL();
  } catch (const ExternalError& e) {
    EXPECT_EQ(e.kind(), ExternalError::Kind::Timeout);
  }
}

TEST_F(External, MissingProgram) {
  EXPECT_THROW(ExternalReconstructor({"/nonexistent/program"}, {4, 4}), ExternalError);
}
