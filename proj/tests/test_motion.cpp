#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "mttt/fft.hpp"
#include "mttt/motion.hpp"
#include "oracles.hpp"

using namespace mttt;

namespace {

constexpr double kPi = std::numbers::pi;

SamplingTrajectory trajectory_for(const Shape& s, double accel, std::size_t shots, std::uint64_t seed) {
  const auto mask = make_mask(plane_for(s), accel, MaskKind::UniformRandom, seed);
  return make_trajectory(mask, shots, TrajectoryOrder::Random, seed + 1);
}

MotionTrajectory random_motion(std::size_t dim, std::size_t states, double amp, std::mt19937_64& rng,
                               bool rotations = true) {
  std::uniform_real_distribution<double> u(-amp, amp);
  MotionTrajectory m(dim, states);
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t q = 0; q < m.params_per_state(); ++q)
      m.param(s, q) = (!rotations && is_rotation_param(dim, q)) ? 0.0 : u(rng);
  return m;
}

}  // namespace

TEST(Rotation, ZeroAngleLeavesCoordinates) {
  std::mt19937_64 rng(1);
  FreqCoords k(3, std::vector<double>(30));
  for (auto& v : k.values) v = std::uniform_real_distribution<double>(-3, 3)(rng);
  const std::vector<int> states(10, 0);
  const auto r = rotate_coords(k, MotionTrajectory(3, 1), states);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(r.values[i], k.values[i]);
}

TEST(Rotation, QuarterTurnOrientation) {
  MotionTrajectory m(2, 1);
  m.states[0].phi[0] = 90;
  const auto r = rotate_coords(FreqCoords(2, {kPi / 2, 0}), m, std::vector<int>{0});
  EXPECT_NEAR(r(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(r(0, 1), -kPi / 2, 1e-12);
}

TEST(Rotation, InverseAngleRestores) {
  std::mt19937_64 rng(2);
  FreqCoords k(3, std::vector<double>(60));
  for (auto& v : k.values) v = std::uniform_real_distribution<double>(-1.5, 1.5)(rng);
  auto m = random_motion(3, 1, 20, rng);
  const std::vector<int> states(20, 0);
  const auto r = rotate_coords(k, m, states);
  // Rᵀ is undone by R, which for the extrinsic order means applying R(φ) to the rotated set.
  const auto R = rotation_matrix(3, m.states[0]);
  for (std::size_t p = 0; p < 20; ++p)
    for (std::size_t a = 0; a < 3; ++a) {
      double v = 0;
      for (std::size_t b = 0; b < 3; ++b) v += R[a * 3 + b] * r(p, b);
      EXPECT_NEAR(v, k(p, a), 1e-12);
    }
  MotionTrajectory m2(2, 1);
  m2.states[0].phi[0] = 33;
  FreqCoords k2(2, {0.4, -1.1, 2.0, 0.3});
  const auto once = rotate_coords(k2, m2, std::vector<int>{0, 0});
  m2.states[0].phi[0] = -33;
  const auto back = rotate_coords(once, m2, std::vector<int>{0, 0});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(back.values[i], k2.values[i], 1e-12);
}

TEST(Rotation, MatrixIsOrthonormalAndDerivativeMatches) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_motion(3, 1, 40, rng);
    const auto R = rotation_matrix(3, m.states[0]);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < 3; ++k) dot += R[i * 3 + k] * R[j * 3 + k];
        EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
      }
    for (std::size_t axis = 0; axis < 3; ++axis) {
      auto up = m.states[0], dn = m.states[0];
      const double h = 1e-4;
      up.phi[axis] += h * 180 / kPi;
      dn.phi[axis] -= h * 180 / kPi;
      const auto Ru = rotation_matrix(3, up), Rd = rotation_matrix(3, dn);
      const auto D = rotation_derivative(3, m.states[0], axis);
      for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(D[i], (Ru[i] - Rd[i]) / (2 * h), 1e-7);
    }
  }
}

TEST(Rotation, ExtrinsicOrder) {
  MotionState s;
  s.phi = {30, 40, 50};
  const auto R = rotation_matrix(3, s);
  auto single = [](std::size_t axis, double deg) {
    MotionState t;
    t.phi[axis] = deg;
    return rotation_matrix(3, t);
  };
  const auto rx = single(0, 30), ry = single(1, 40), rz = single(2, 50);
  auto mul = [](const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> c{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    return c;
  };
  const auto expected = mul(rz, mul(ry, rx));
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(R[i], expected[i], 1e-14);
}

TEST(PhaseShift, ZeroTranslationIsIdentity) {
  std::mt19937_64 rng(4);
  const auto k = grid_frequencies({8, 8});
  auto y = oracle::random_volume({2, 64, 1}, rng);
  const auto y0 = y;
  phase_shift(y, k, MotionTrajectory(2, 1), std::vector<int>(64, 0), 1);
  EXPECT_EQ(y, y0);
}

TEST(PhaseShift, IntegerShiftIsCircularShift) {
  std::mt19937_64 rng(5);
  const Shape s{8, 8};
  const auto x = oracle::random_volume(s, rng);
  auto f = fft_centered(x);
  MotionTrajectory m(2, 1);
  m.states[0].t = {3, 0, 0};
  ComplexVolume y({1, 64, 1}, f.values());
  phase_shift(y, grid_frequencies(s), m, std::vector<int>(64, 0), 1);
  const auto back = fft_centered(ComplexVolume(s, y.values()), FftDirection::Inverse);
  EXPECT_LT(relative_error(back, oracle::circshift(x, {3, 0})), 1e-12);
}

TEST(PhaseShift, CorruptThenCorrectCancels) {
  std::mt19937_64 rng(6);
  FreqCoords k(2, std::vector<double>(40));
  for (auto& v : k.values) v = std::uniform_real_distribution<double>(-kPi, kPi)(rng);
  const auto m = random_motion(2, 2, 5, rng);
  std::vector<int> st(20);
  for (int i = 0; i < 20; ++i) st[i] = i % 2;
  auto y = oracle::random_volume({3, 20, 1}, rng);
  const auto y0 = y;
  phase_shift(y, k, m, st, 1);
  phase_shift(y, k, m, st, -1);
  EXPECT_LT(relative_error(y, y0), 1e-12);
}

TEST(MotionOperator, ZeroMotionReducesToCartesian) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const bool three = trial % 4 == 3;
    const Shape s = three ? Shape{8, 8, 6} : Shape{16, 12};
    const auto coils = make_coils(s, 1 + trial % 4, trial);
    const auto traj = trajectory_for(s, 1.0 + trial % 3, 4, trial);
    const MotionOperator op(s, coils, traj);
    const auto x = oracle::random_volume(s, rng);
    EXPECT_LT(relative_error(op.forward(x, op.zero_motion()), oracle::cartesian_forward(x, coils, traj)), 1e-5);
  }
}

TEST(MotionOperator, AdjointDotProduct) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const bool three = trial % 2;
    const Shape s = three ? Shape{8, 6, 6} : Shape{12, 12};
    const auto op = MotionOperator(s, make_coils(s, 2, trial), trajectory_for(s, 2.0, 3, trial));
    const auto m = random_motion(s.size(), 3, 6, rng);
    const auto x = oracle::random_volume(s, rng);
    const auto y = oracle::random_volume(op.kspace_shape(), rng);
    const cplx lhs = inner(op.forward(x, m), y);
    const cplx rhs = inner(x, op.adjoint(y, m));
    EXPECT_LT(std::abs(lhs - rhs), 1e-5 * std::abs(lhs));
  }
}

TEST(MotionOperator, TranslationRoundTrip) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const bool three = trial % 5 == 4;
    const Shape s = three ? Shape{8, 8, 8} : Shape{16, 16};
    const std::size_t coils = trial % 2 ? 1 : 3;
    const auto op = MotionOperator(s, make_coils(s, coils, trial), trajectory_for(s, 1.0, 4, trial));
    const auto m = random_motion(s.size(), 4, 4, rng, false);
    const auto x = oracle::random_volume(s, rng);
    EXPECT_LT(relative_error(op.corrected_zf(op.forward(x, m), m), x), 1e-5);
  }
}

TEST(MotionOperator, QuarterTurnOfSquare) {
  const Shape s{32, 32};
  ComplexVolume x(s);
  for (std::size_t i = 12; i < 22; ++i)
    for (std::size_t j = 10; j < 20; ++j) x[i * 32 + j] = 1.0;
  const auto op = MotionOperator(s, make_coils(s, 1, 0), trajectory_for(s, 1.0, 1, 0));
  MotionTrajectory m(2, 1);
  m.states[0].phi[0] = 90;
  const auto y = op.forward(x, m);
  EXPECT_LT(relative_error(op.corrected_zf(y, m), x), 5e-2);
  EXPECT_LT(relative_error(op.corrected_zf(y, op.zero_motion()), oracle::rotate_image(x, 90)), 5e-2);
}

TEST(MotionOperator, CorrectedZfTrivialCases) {
  std::mt19937_64 rng(10);
  const Shape s{16, 16};
  const auto coils = make_coils(s, 3, 1);
  const auto traj = trajectory_for(s, 3.0, 4, 2);
  const MotionOperator op(s, coils, traj);
  const auto m = random_motion(2, 4, 3, rng);
  const auto zero = op.corrected_zf(ComplexVolume(op.kspace_shape()), m);
  for (auto z : zero.values()) EXPECT_EQ(z, cplx(0));
  const auto x = oracle::random_volume(s, rng);
  const auto y = op.forward(x, op.zero_motion());
  ComplexVolume filled({3, 16, 16});
  const auto lines = traj.lines();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t l = 0; l < lines.size(); ++l) filled[c * 256 + lines[l]] = y[c * lines.size() + l];
  const auto zf = reduce(fft_centered(filled, {1, 2}, FftDirection::Inverse), coils);
  EXPECT_LT(relative_error(op.corrected_zf(y, op.zero_motion(), false), zf), 1e-5);
}

TEST(MotionOperator, StateLocality) {
  std::mt19937_64 rng(11);
  const Shape s{16, 16};
  const MotionOperator op(s, make_coils(s, 2, 0), trajectory_for(s, 2.0, 4, 3));
  const auto x = oracle::random_volume(s, rng);
  auto m = random_motion(2, 4, 3, rng);
  const auto y0 = op.forward(x, m);
  m.param(2, 0) += 0.7;
  m.param(2, 2) += 5;
  const auto y1 = op.forward(x, m);
  const std::size_t P = op.num_points();
  for (std::size_t i = 0; i < y0.size(); ++i) {
    if (op.point_state()[i % P] == 2)
      EXPECT_NE(y0[i], y1[i]);
    else
      EXPECT_EQ(y0[i], y1[i]);
  }
}

TEST(MotionOperator, FullTurnIsIdentity) {
  std::mt19937_64 rng(12);
  const Shape s{8, 8, 6};
  const MotionOperator op(s, make_coils(s, 2, 0), trajectory_for(s, 2.0, 2, 4));
  const auto x = oracle::random_volume(s, rng);
  auto m = random_motion(3, 2, 10, rng);
  const auto a = op.forward(x, m);
  for (auto& st : m.states)
    for (auto& p : st.phi) p += 360;
  EXPECT_LT(relative_error(op.forward(x, m), a), 1e-10);
}

TEST(MotionOperator, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const bool three = trial % 2;
    const Shape s = three ? Shape{8, 8, 6} : Shape{16, 16};
    const MotionOperator op(s, make_coils(s, 2, trial), trajectory_for(s, 2.0, 2, trial));
    const auto x = oracle::random_volume(s, rng);
    const auto m = random_motion(s.size(), 2, 4, rng);
    const auto cot = oracle::random_volume(op.kspace_shape(), rng);
    const auto g = op.forward_grad_motion(x, m, cot);
    auto f = [&](const std::vector<double>& p) {
      auto mm = m;
      mm.set_params(p);
      return inner(cot, op.forward(x, mm)).real();
    };
    EXPECT_LT(oracle::rel_vec_error(g, oracle::central_diff(f, m.params(), 1e-3)), 1e-3);
  }
}

TEST(MotionOperator, GradientOfZeroCotangentIsZero) {
  std::mt19937_64 rng(14);
  const Shape s{12, 12};
  const MotionOperator op(s, make_coils(s, 2, 0), trajectory_for(s, 2.0, 3, 0));
  const auto x = oracle::random_volume(s, rng);
  for (double g : op.forward_grad_motion(x, random_motion(2, 3, 3, rng), ComplexVolume(op.kspace_shape())))
    EXPECT_EQ(g, 0.0);
}

TEST(MotionOperator, RejectsMismatchedInputs) {
  const Shape s{12, 12};
  const MotionOperator op(s, make_coils(s, 2, 0), trajectory_for(s, 2.0, 3, 0));
  EXPECT_THROW(op.forward(ComplexVolume(s), MotionTrajectory(2, 2)), ShapeError);
  EXPECT_THROW(op.forward(ComplexVolume({12, 11}), op.zero_motion()), ShapeError);
  EXPECT_THROW(op.corrected_zf(ComplexVolume({2, 3, 1}), op.zero_motion()), ShapeError);
}

TEST(MotionTrajectory, CsvRoundTrip) {
  std::mt19937_64 rng(15);
  for (std::size_t dim : {2u, 3u}) {
    const auto m = random_motion(dim, 5, 10, rng);
    EXPECT_EQ(MotionTrajectory::from_csv(m.to_csv()), m);
  }
  EXPECT_EQ(param_names(3), (std::vector<std::string>{"t1", "t2", "t3", "phi1", "phi2", "phi3"}));
}

TEST(MotionTrajectory, NormalizeAngles) {
  MotionTrajectory m(2, 1);
  m.states[0].phi[0] = 190;
  m.normalize_angles();
  EXPECT_NEAR(m.states[0].phi[0], -170, 1e-12);
}
