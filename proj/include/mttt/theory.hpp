#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mttt/complex_volume.hpp"
#include "mttt/phantom.hpp"

namespace mttt {

/// Signal x = U c of length n in a random d-dimensional subspace, observed
/// in b frequency blocks, each under its own unknown circular shift.
struct SubspaceModel {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t b = 0;
  double k = 0.0;  // expected frequencies per block
  SubspaceBasis basis;
  std::vector<double> c;
  std::vector<long long> m_star;
  std::vector<std::vector<std::size_t>> blocks;  // ascending frequency indices

  std::vector<double> signal() const;
  /// n / (b·k).
  double scale() const { return double(n) / (double(b) * k); }
};

struct TheoryParams {
  std::size_t n = 2800;
  std::size_t d = 100;
  std::size_t b = 4;
  double k = 1400;
  /// Draw m* uniformly from {0..n−1}; otherwise m* = 0.
  bool random_shifts = false;
};

/// U with i.i.d. N(0, 1/n) entries, c with i.i.d. N(0, 1/d) entries, and
/// each frequency placed in each block independently with probability k/n.
SubspaceModel make_subspace_model(const TheoryParams& p, std::uint64_t seed);

/// One sample vector per block, aligned with model.blocks.
using BlockMeasurements = std::vector<std::vector<cplx>>;

/// y_ℓ[j] = e^{i2π m*_ℓ j/n}·(F x)[j] for j ∈ T_ℓ, F the unitary DFT.
BlockMeasurements simulate_measurements(const SubspaceModel& model);

/// f(F_Tᴴ D_mᴴ y) with f(z) = (n/(bk))·U Uᵀ z on real and imaginary parts.
std::vector<cplx> theory_reconstruct(const SubspaceModel& model, const BlockMeasurements& y,
                                     const std::vector<long long>& m);

/// ‖D_m F_T f(F_Tᴴ D_mᴴ y) − y‖₂².
double theory_loss(const SubspaceModel& model, const BlockMeasurements& y, const std::vector<long long>& m);

/// Number of components with m_ℓ ≢ m*_ℓ (mod n).
std::size_t corruption_count(const SubspaceModel& model, const std::vector<long long>& m);

struct LandscapeSweep {
  std::size_t a = 0;
  std::vector<long long> m1;
  std::vector<double> losses;
};

/// Loss as m₁ runs over `grid` while components 2..a+1 sit at m* + offset
/// and the rest at m*. The default offset is n/4.
LandscapeSweep sweep_landscape(const SubspaceModel& model, const BlockMeasurements& y,
                               const std::vector<long long>& grid, std::size_t a, long long offset = -1);

/// Columns m1, loss_a0, loss_a1, ... over sweeps sharing one grid.
std::string landscape_csv(const std::vector<LandscapeSweep>& sweeps);

struct Theorem1Entry {
  std::vector<long long> m;
  std::size_t a = 0;
  double lhs = 0.0;
  double rhs_sampling = 0.0;
  double rhs_subspace = 0.0;
  double loss = 0.0;
  bool above_truth = false;
};

struct Theorem1Report {
  double loss_truth = 0.0;
  double bound_truth = 0.0;  // 12·√(d/(bk))·(bk/n)
  bool within_bound = false;
  long long argmin_m1 = 0;
  bool argmin_at_truth = false;
  std::vector<Theorem1Entry> entries;
  /// Share of sampled m ≠ m* with L(m) > L(m*).
  double ordered_fraction = 0.0;

  nlohmann::json to_json() const;
};

/// Exhaustive sweep of m₁ over all n shifts (others at m*) plus
/// `random_draws` uniformly random shift vectors.
Theorem1Report theorem1_check(const SubspaceModel& model, const BlockMeasurements& y, double c_diag,
                              std::size_t random_draws, std::uint64_t seed);

}  // namespace mttt
