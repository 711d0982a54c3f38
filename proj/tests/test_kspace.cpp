#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "mttt/coils.hpp"
#include "mttt/fft.hpp"
#include "mttt/phantom.hpp"
#include "mttt/sampling.hpp"
#include "oracles.hpp"

using namespace mttt;

TEST(Fft, CenteredDeltaGivesConstant) {
  ComplexVolume v({8, 8});
  v[4 * 8 + 4] = 1.0;
  const auto f = fft_centered(v);
  for (auto z : f.values()) EXPECT_NEAR(std::abs(z - cplx(0.125, 0)), 0.0, 1e-14);
}

TEST(Fft, MatchesNaiveDft) {
  std::mt19937_64 rng(1);
  for (const Shape& s : {Shape{8, 8}, Shape{7, 6}, Shape{4, 5, 3}}) {
    const auto v = oracle::random_volume(s, rng);
    EXPECT_LT(relative_error(fft_centered(v), oracle::naive_dft(v)), 1e-10);
  }
}

TEST(Fft, UnitaryOn3D) {
  std::mt19937_64 rng(2);
  const auto v = oracle::random_volume({8, 8, 8}, rng);
  const auto f = fft_centered(v);
  EXPECT_NEAR(norm2(f), norm2(v), 1e-10 * norm2(v));
  EXPECT_LT(relative_error(fft_centered(f, FftDirection::Inverse), v), 1e-10);
}

TEST(Fft, SingleAxisAndInvalidAxis) {
  std::mt19937_64 rng(3);
  const auto v = oracle::random_volume({6, 4}, rng);
  const auto both = fft_centered(fft_centered(v, {0}), {1});
  EXPECT_LT(relative_error(both, fft_centered(v)), 1e-12);
  EXPECT_THROW(fft_centered(v, {2}), Error);
}

TEST(Mask, FullSamplingAtR1) {
  const auto m = make_mask({16, 16}, 1.0, MaskKind::UniformRandom, 0);
  EXPECT_EQ(m.count(), 256u);
}

TEST(Mask, CountAndCenter) {
  for (auto kind : {MaskKind::UniformRandom, MaskKind::InterleavedColumns}) {
    const auto m = make_mask({16, 16}, 4.0, kind, 5);
    EXPECT_GE(m.count(), 58u);
    EXPECT_LE(m.count(), 70u);
    for (std::size_t l = 0; l < m.plane.size(); ++l)
      if (m.plane.in_center_block(l)) EXPECT_TRUE(m.sampled(l));
  }
}

TEST(Mask, Deterministic) {
  const auto a = make_mask({32, 32}, 4.0, MaskKind::UniformRandom, 42);
  const auto b = make_mask({32, 32}, 4.0, MaskKind::UniformRandom, 42);
  const auto c = make_mask({32, 32}, 4.0, MaskKind::UniformRandom, 43);
  EXPECT_EQ(a.grid, b.grid);
  EXPECT_NE(a.grid, c.grid);
}

TEST(Mask, Errors) {
  EXPECT_THROW(make_mask({4, 4}, 0.5, MaskKind::UniformRandom, 0), Error);
  EXPECT_THROW(make_mask({4, 4}, 8.0, MaskKind::UniformRandom, 0), Error);
}

TEST(Mask, VolumeRoundTrip) {
  const auto m = make_mask({16, 12}, 3.0, MaskKind::UniformRandom, 1);
  const auto back = UndersamplingMask::from_volume(m.to_volume(), 3.0);
  EXPECT_EQ(back.grid, m.grid);
  EXPECT_EQ(back.plane, m.plane);
}

TEST(Trajectory, InterleavedSmallExample) {
  UndersamplingMask mask;
  mask.plane = {8, 8};
  mask.grid.assign(64, 0);
  const std::vector<std::size_t> lines{0, 3, 9, 17, 30, 41, 50, 63};
  for (auto l : lines) mask.grid[l] = 1;
  const auto t = make_trajectory(mask, 4, TrajectoryOrder::Interleaved, 0, false);
  ASSERT_EQ(t.shots.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(t.shots[i], (std::vector<std::size_t>{lines[i], lines[i + 4]}));
    for (auto l : t.shots[i]) EXPECT_EQ(t.line_to_state[l], int(i));
  }
}

TEST(Trajectory, InterleavedCenterInFirstShot) {
  const auto mask = make_mask({16, 16}, 4.0, MaskKind::UniformRandom, 2);
  const auto t = make_trajectory(mask, 8, TrajectoryOrder::Interleaved, 0);
  for (std::size_t l = 0; l < mask.plane.size(); ++l)
    if (mask.plane.in_center_block(l)) EXPECT_EQ(t.line_to_state[l], 0);
}

TEST(Trajectory, EveryOrderPartitionsSupport) {
  const auto mask = make_mask({24, 20}, 4.0, MaskKind::UniformRandom, 3);
  const auto support = mask.lines();
  for (auto order : {TrajectoryOrder::Interleaved, TrajectoryOrder::Random, TrajectoryOrder::Linear,
                     TrajectoryOrder::DeterministicRadius}) {
    for (std::size_t b : {1u, 5u, 8u}) {
      const auto t = make_trajectory(mask, b, order, 9);
      std::vector<std::size_t> all;
      for (const auto& s : t.shots) all.insert(all.end(), s.begin(), s.end());
      std::set<std::size_t> unique(all.begin(), all.end());
      EXPECT_EQ(unique.size(), all.size());
      EXPECT_EQ(std::vector<std::size_t>(unique.begin(), unique.end()), support);
      EXPECT_EQ(t.num_states, int(b));
      EXPECT_NO_THROW(t.validate_against(mask));
    }
  }
}

TEST(Trajectory, LinearFirstShotHasSmallestKy) {
  const auto mask = make_mask({16, 16}, 2.0, MaskKind::UniformRandom, 4);
  const auto t = make_trajectory(mask, 4, TrajectoryOrder::Linear, 0);
  std::size_t max_first = 0, min_rest = 1000;
  for (auto l : t.shots[0]) max_first = std::max(max_first, mask.plane.ky(l));
  for (std::size_t s = 1; s < 4; ++s)
    for (auto l : t.shots[s]) min_rest = std::min(min_rest, mask.plane.ky(l));
  EXPECT_LE(max_first, min_rest);
}

TEST(Trajectory, DeterministicRadiusBalancesShots) {
  const auto mask = make_mask({32, 32}, 4.0, MaskKind::UniformRandom, 5);
  const auto lin = make_trajectory(mask, 8, TrajectoryOrder::Linear, 0);
  const auto det = make_trajectory(mask, 8, TrajectoryOrder::DeterministicRadius, 0);
  auto spread = [&](const SamplingTrajectory& t) {
    std::vector<double> means;
    for (std::size_t s = 1; s < t.shots.size(); ++s) {
      double m = 0;
      for (auto l : t.shots[s]) m += mask.plane.center_distance(l);
      means.push_back(m / double(t.shots[s].size()));
    }
    auto [lo, hi] = std::minmax_element(means.begin(), means.end());
    return *hi - *lo;
  };
  EXPECT_LT(spread(det), spread(lin));
  EXPECT_EQ(make_trajectory(mask, 8, TrajectoryOrder::DeterministicRadius, 99).shots, det.shots);
}

TEST(Trajectory, Errors) {
  const auto mask = make_mask({8, 8}, 2.0, MaskKind::UniformRandom, 0);
  EXPECT_THROW(make_trajectory(mask, 0, TrajectoryOrder::Random, 0), Error);
  EXPECT_THROW(make_trajectory(mask, 1000, TrajectoryOrder::Random, 0), Error);
}

TEST(Trajectory, JsonRoundTrip) {
  const auto mask = make_mask({16, 16}, 4.0, MaskKind::UniformRandom, 6);
  const auto t = make_trajectory(mask, 8, TrajectoryOrder::Random, 3);
  const auto back = SamplingTrajectory::from_json(t.to_json());
  EXPECT_EQ(back.shots, t.shots);
  EXPECT_EQ(back.line_to_state, t.line_to_state);
  EXPECT_EQ(back.num_states, t.num_states);
}

TEST(Coils, SumOfSquaresIsOne) {
  for (const Shape& s : {Shape{32, 32}, Shape{12, 10, 8}})
    for (std::size_t c : {1u, 4u, 8u}) {
      const auto coils = make_coils(s, c, 7);
      ASSERT_EQ(coils.count(), c);
      for (std::size_t i = 0; i < shape_size(s); ++i) {
        double sos = 0;
        for (const auto& m : coils.maps) sos += std::norm(m[i]);
        EXPECT_NEAR(sos, 1.0, 1e-6);
      }
    }
}

TEST(Coils, SingleCoilIsConstantUnimodular) {
  const auto coils = make_coils({16, 16}, 1, 0);
  const cplx v0 = coils.maps[0][0];
  EXPECT_NEAR(std::abs(v0), 1.0, 1e-12);
  for (auto z : coils.maps[0].values()) EXPECT_NEAR(std::abs(z - v0), 0.0, 1e-12);
  std::mt19937_64 rng(1);
  const auto x = oracle::random_volume({16, 16}, rng);
  const auto e = expand(x, coils);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(std::abs(e[i] - v0 * x[i]), 0.0, 1e-12);
}

TEST(Coils, DeterministicAndErrors) {
  EXPECT_EQ(make_coils({16, 16}, 4, 3).stacked(), make_coils({16, 16}, 4, 3).stacked());
  EXPECT_THROW(make_coils({16, 16}, 0, 3), Error);
}

TEST(Coils, ReduceExpandIdentityAndAdjoint) {
  std::mt19937_64 rng(2);
  const auto coils = make_coils({20, 18}, 4, 1);
  const auto x = oracle::random_volume({20, 18}, rng);
  EXPECT_LT(relative_error(reduce(expand(x, coils), coils), x), 1e-10);
  const auto y = oracle::random_volume({4, 20, 18}, rng);
  const cplx lhs = inner(expand(x, coils), y);
  const cplx rhs = inner(x, reduce(y, coils));
  EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::abs(lhs));
  EXPECT_THROW(expand(oracle::random_volume({20, 17}, rng), coils), ShapeError);
}

TEST(Coils, StackedRoundTrip) {
  const auto coils = make_coils({8, 8}, 3, 2);
  EXPECT_EQ(CoilSensitivities::from_stacked(coils.stacked()).stacked(), coils.stacked());
}

TEST(Phantom, SubspaceLiesInSpan) {
  const Shape s{32, 32};
  const auto basis = smooth_basis(s, 16, 0.5, 1);
  PhantomParams pp;
  pp.basis = &basis;
  const auto x = make_phantom(s, PhantomKind::Subspace, pp, 2);
  for (int part = 0; part < 2; ++part) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = part ? x[i].imag() : x[i].real();
    const auto back = basis.synthesize(basis.project(r));
    double num = 0, den = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      num += (back[i] - r[i]) * (back[i] - r[i]);
      den += r[i] * r[i];
    }
    if (den > 0) EXPECT_LT(std::sqrt(num / den), 1e-10);
  }
  EXPECT_LT(basis.gram_deviation(), 1e-10);
}

TEST(Phantom, EllipsesWithinUnitMagnitude) {
  const auto x = make_phantom({48, 40}, PhantomKind::Ellipses, {}, 3);
  double mx = 0;
  for (auto z : x.values()) {
    EXPECT_LE(std::abs(z), 1.0 + 1e-12);
    mx = std::max(mx, std::abs(z));
  }
  EXPECT_GT(mx, 0.1);
}

TEST(Phantom, Deterministic) {
  EXPECT_EQ(make_phantom({16, 16}, PhantomKind::Ellipses, {}, 5), make_phantom({16, 16}, PhantomKind::Ellipses, {}, 5));
  const auto basis = smooth_basis({16, 16}, 8, 0.5, 1);
  PhantomParams pp;
  pp.basis = &basis;
  EXPECT_EQ(make_phantom({16, 16}, PhantomKind::Subspace, pp, 5), make_phantom({16, 16}, PhantomKind::Subspace, pp, 5));
  EXPECT_THROW(make_phantom({16, 16}, PhantomKind::Subspace, {}, 5), Error);
}

TEST(Phantom, GaussianBasisNearlyOrthonormal) {
  const auto b = gaussian_basis(64 * 16, 16, 4);
  EXPECT_LE(b.gram_deviation(), 0.2);
}
