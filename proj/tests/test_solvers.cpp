#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "mttt/metrics.hpp"
#include "mttt/simharness.hpp"
#include "mttt/solvers.hpp"
#include "oracles.hpp"

using namespace mttt;

namespace {

SamplingTrajectory full_trajectory(const Shape& s, std::size_t shots, std::uint64_t seed) {
  const auto mask = make_mask(plane_for(s), 1.0, MaskKind::UniformRandom, seed);
  return make_trajectory(mask, shots, TrajectoryOrder::Random, seed, false);
}

double masked_l1_residual(const MotionOperator& op, const ComplexVolume& x, const ComplexVolume& y,
                          const MotionTrajectory& m) {
  const auto p = op.forward(x, m);
  double r = 0;
  for (std::size_t i = 0; i < p.size(); ++i) r += std::abs(p[i] - y[i]);
  return r;
}

Trial desk_trial(const SeverityLevel& level, std::uint64_t seed, const Shape& shape = {64, 64}) {
  ExperimentSpec spec;
  spec.shape = shape;
  return make_trial(spec, level, seed);
}

}  // namespace

TEST(L1, FullSamplingLeastSquares) {
  std::mt19937_64 rng(1);
  const Shape s{16, 16};
  const MotionOperator op(s, make_coils(s, 3, 1), full_trajectory(s, 4, 1));
  const auto x = oracle::random_volume(s, rng);
  const auto y = op.forward(x, op.zero_motion());
  L1Config cfg;
  cfg.lambda = 0.0;
  const auto out = l1_reconstruct(op, y, op.zero_motion(), cfg);
  EXPECT_LE(relative_error(out.image, x), 1e-3);
  EXPECT_EQ(out.trace.size(), 51u);
}

TEST(L1, ObjectiveNonIncreasing) {
  const auto t = desk_trial({1, 5}, 2);
  const MotionOperator op({64, 64}, t.coils, t.scenario.trajectory);
  const auto out = l1_reconstruct(op, t.kspace, op.zero_motion(), L1Config{});
  for (std::size_t i = 1; i < out.trace.size(); ++i) EXPECT_LE(out.trace[i], out.trace[i - 1]);
  EXPECT_LT(out.trace.back(), out.trace.front());
}

TEST(L1, ExcludingEveryStateFails) {
  const Shape s{8, 8};
  const MotionOperator op(s, make_coils(s, 2, 0), full_trajectory(s, 3, 0));
  std::mt19937_64 rng(2);
  const auto y = op.forward(oracle::random_volume(s, rng), op.zero_motion());
  const std::vector<int> all{0, 1, 2};
  EXPECT_THROW(l1_reconstruct(op, y, op.zero_motion(), L1Config{}, all), Error);
  const auto report = DCReport::from_losses({0.5, 0.5, 0.5}, 0.0);
  EXPECT_THROW(threshold_and_reconstruct(op, y, op.zero_motion(), report, L1Config{}), Error);
}

TEST(L1, DataTermGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Shape s{8, 8};
  const auto mask = make_mask(plane_for(s), 2.0, MaskKind::UniformRandom, 3);
  const MotionOperator op(s, make_coils(s, 2, 3), make_trajectory(mask, 2, TrajectoryOrder::Random, 3));
  MotionTrajectory m(2, 2);
  m.param(1, 0) = 0.6;
  m.param(1, 2) = 4.0;
  const auto y = op.forward(oracle::random_volume(s, rng), m);
  const auto x = oracle::random_volume(s, rng);
  const auto r = op.forward(x, m) - y;
  const auto g = op.adjoint(r, m) * 2.0;
  std::vector<double> an, p;
  for (auto z : x.values()) p.insert(p.end(), {z.real(), z.imag()});
  for (auto z : g.values()) an.insert(an.end(), {z.real(), z.imag()});
  auto f = [&](const std::vector<double>& v) {
    ComplexVolume xx(s);
    for (std::size_t i = 0; i < xx.size(); ++i) xx[i] = {v[2 * i], v[2 * i + 1]};
    const auto rr = op.forward(xx, m) - y;
    const double n = norm2(rr);
    return n * n;
  };
  EXPECT_LT(oracle::rel_vec_error(an, oracle::central_diff(f, p, 1e-4)), 1e-4);
}

TEST(L1, ExclusionDropsExactlyThoseRows) {
  const Shape s{12, 12};
  const auto mask = make_mask(plane_for(s), 2.0, MaskKind::UniformRandom, 4);
  const MotionOperator op(s, make_coils(s, 2, 4), make_trajectory(mask, 4, TrajectoryOrder::Random, 4));
  const std::vector<int> ex{1, 3};
  const auto pm = op.point_mask(ex);
  ASSERT_EQ(pm.size(), op.num_points());
  std::size_t kept = 0;
  const auto counts = op.trajectory().state_line_counts();
  for (std::size_t i = 0; i < pm.size(); ++i) {
    const int st = op.point_state()[i];
    EXPECT_EQ(pm[i], (st == 1 || st == 3) ? 0.0 : 1.0);
    kept += pm[i] != 0.0;
  }
  EXPECT_EQ(kept, (counts[0] + counts[2]) * op.readout());
}

TEST(Threshold, EmptyFlagsMatchPlainL1) {
  const auto t = desk_trial({1, 2}, 5, {32, 32});
  const MotionOperator op({32, 32}, t.coils, t.scenario.trajectory);
  const auto report = DCReport::from_losses(std::vector<double>(op.num_states(), 0.1), 0.575);
  const auto a = threshold_and_reconstruct(op, t.kspace, t.scenario.motion, report, L1Config{});
  const auto b = l1_reconstruct(op, t.kspace, t.scenario.motion, L1Config{});
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.trace, b.trace);
}

TEST(Threshold, ExcludingCorruptedStateHelps) {
  int better = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto t = desk_trial({0, 0}, 10 + seed);
    const MotionOperator op({64, 64}, t.coils, t.scenario.trajectory);
    MotionTrajectory m = op.zero_motion();
    m.states[3].phi[0] += 10.0;
    const auto report = DCReport::from_losses(
        [&] {
          std::vector<double> l(op.num_states(), 0.1);
          l[3] = 0.9;
          return l;
        }(),
        0.575);
    const auto th = threshold_and_reconstruct(op, t.kspace, m, report, L1Config{});
    const auto plain = l1_reconstruct(op, t.kspace, m, L1Config{});
    better += psnr(t.image, th.image) > psnr(t.image, plain.image);
  }
  EXPECT_EQ(better, 3);
}

TEST(DCLayer, ConsistentInitBarelyMoves) {
  std::mt19937_64 rng(6);
  const Shape s{16, 16};
  const MotionOperator op(s, make_coils(s, 3, 6), full_trajectory(s, 2, 6));
  const auto x = oracle::random_volume(s, rng);
  const auto y = op.forward(x, op.zero_motion());
  const auto out = dc_layer_refine(op, y, op.zero_motion(), x, DCLayerConfig{});
  EXPECT_LE(relative_error(out.image, x), 1e-3);
}

TEST(DCLayer, LargeLambdaStaysAtInit) {
  std::mt19937_64 rng(7);
  const Shape s{16, 16};
  const MotionOperator op(s, make_coils(s, 3, 7), full_trajectory(s, 2, 7));
  const auto y = op.forward(oracle::random_volume(s, rng), op.zero_motion());
  const auto x0 = oracle::random_volume(s, rng);
  DCLayerConfig cfg;
  cfg.lambda = 1e6;
  const auto out = dc_layer_refine(op, y, op.zero_motion(), x0, cfg);
  EXPECT_LE(relative_error(out.image, x0), 1e-3);
}

TEST(DCLayer, CorruptedInitReducesDataTerm) {
  const auto t = desk_trial({1, 5}, 8);
  const MotionOperator op({64, 64}, t.coils, t.scenario.trajectory);
  const auto x0 = op.corrected_zf(t.kspace, op.zero_motion());
  const auto out = dc_layer_refine(op, t.kspace, t.scenario.motion, x0, DCLayerConfig{});
  EXPECT_LT(masked_l1_residual(op, out.image, t.kspace, t.scenario.motion),
            masked_l1_residual(op, x0, t.kspace, t.scenario.motion));
  EXPECT_LT(out.trace.back(), out.trace.front());
  EXPECT_THROW(dc_layer_refine(op, t.kspace, t.scenario.motion, ComplexVolume({8, 8}), DCLayerConfig{}),
               ShapeError);
}

TEST(AltOpt, ZeroIterationsReturnsZeroFilled) {
  const auto t = desk_trial({1, 2}, 9, {32, 32});
  const MotionOperator op({32, 32}, t.coils, t.scenario.shot_trajectory);
  AltOptConfig cfg;
  cfg.max_iters = 0;
  const auto out = altopt(op, t.kspace, cfg);
  for (double p : out.motion.params()) EXPECT_EQ(p, 0.0);
  EXPECT_LT(relative_error(out.image, op.corrected_zf(t.kspace, op.zero_motion())), 1e-12);
  EXPECT_EQ(out.trace.size(), 1u);
}

TEST(AltOpt, ZeroMotionRateKeepsMotionAtZero) {
  const auto t = desk_trial({1, 2}, 10, {32, 32});
  const MotionOperator op({32, 32}, t.coils, t.scenario.shot_trajectory);
  AltOptConfig cfg;
  cfg.max_iters = 5;
  cfg.motion_step = 0.0;
  for (double p : altopt(op, t.kspace, cfg).motion.params()) EXPECT_EQ(p, 0.0);
  cfg.paper_scale = true;
  cfg.recon_lr = 1e-3;
  cfg.motion_lr = 0.0;
  for (double p : altopt(op, t.kspace, cfg).motion.params()) EXPECT_EQ(p, 0.0);
}

TEST(AltOpt, MotionFreeStaysNearZero) {
  const auto t = desk_trial({0, 0}, 11);
  const MotionOperator op({64, 64}, t.coils, t.scenario.shot_trajectory);
  AltOptConfig cfg;
  cfg.max_iters = 60;
  const auto out = altopt(op, t.kspace, cfg);
  for (double p : out.motion.params()) EXPECT_LE(std::abs(p), 0.25);
  EXPECT_LT(out.trace.back(), out.trace.front());
}

TEST(AltOpt, BeatsNoCorrectionAtMildMotion) {
  int wins = 0;
  const int trials = 4;
  for (int seed = 0; seed < trials; ++seed) {
    const auto t = desk_trial({1, 2}, 20 + seed, {32, 32});
    const MotionOperator op({32, 32}, t.coils, t.scenario.shot_trajectory);
    AltOptConfig cfg;
    cfg.max_iters = 100;
    const auto est = altopt(op, t.kspace, cfg);
    const auto corrected = l1_reconstruct(op, t.kspace, est.motion, L1Config{});
    const auto plain = l1_reconstruct(op, t.kspace, op.zero_motion(), L1Config{});
    wins += psnr(t.image, corrected.image) > psnr(t.image, plain.image);
  }
  EXPECT_GE(wins, 3);
}

TEST(SolverConfig, ValidationAndJson) {
  L1Config l1;
  l1.steps = 0;
  EXPECT_THROW(l1.validate(), Error);
  AltOptConfig a;
  a.recon_lr = 0;
  EXPECT_THROW(a.validate(), Error);
  DCLayerConfig d;
  d.relative_step = -1;
  EXPECT_THROW(d.validate(), Error);

  L1Config l2;
  l2.lambda = 0.25;
  L1Config l3;
  from_json(to_json(l2), l3);
  EXPECT_EQ(l3.lambda, 0.25);
  EXPECT_THROW(from_json(nlohmann::json{{"bogus", 1}}, l3), Error);
  AltOptConfig a2;
  a2.max_iters = 7;
  AltOptConfig a3;
  from_json(to_json(a2), a3);
  EXPECT_EQ(a3.max_iters, 7);
}
