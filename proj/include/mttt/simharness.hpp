#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mttt/motion.hpp"
#include "mttt/phantom.hpp"
#include "mttt/solvers.hpp"
#include "mttt/ttt.hpp"

namespace mttt {

/// Number of motion events and their maximal amplitude (voxels and degrees).
struct SeverityLevel {
  int n_events = 0;
  double m_max = 0.0;

  std::string label() const;
  friend bool operator==(const SeverityLevel&, const SeverityLevel&) = default;
};

/// (0,0), (1,2), (5,2), (10,2), (1,5), (1,10), (5,5), (10,5), (5,10), (10,10).
const std::vector<SeverityLevel>& canonical_levels();
/// Parses "N_e,M_max".
SeverityLevel parse_level(const std::string& s);

/// Ground truth for one simulated acquisition. `trajectory` carries the
/// true state of every line; `shot_trajectory` has one state per shot.
struct SimulatedScenario {
  SamplingTrajectory shot_trajectory;
  SamplingTrajectory trajectory;
  MotionTrajectory motion;
  std::vector<std::size_t> event_shots;  // first shot after each event
  std::vector<std::size_t> intra_shots;  // shots acquired during an event
  std::uint64_t seed = 0;
};

/// Events at distinct shot gaps 1..B−1; all parameters redrawn uniformly in
/// [−M_max, M_max] at each event. Shot 0 stays at zero motion.
SimulatedScenario simulate_inter_shot(const SamplingTrajectory& traj, std::size_t dim, const SeverityLevel& level,
                                      std::uint64_t seed);

/// As simulate_inter_shot, but ⌈N_e/2⌉ events happen during their shot: each
/// line of that shot gets its own state on a piecewise-linear path from the
/// previous shot's parameters to the new ones with 0 to 2 interior peaks.
SimulatedScenario simulate_intra_shot(const SamplingTrajectory& traj, std::size_t dim, const SeverityLevel& level,
                                      std::uint64_t seed);

/// Per-line comparison of two motion estimates living on different
/// trajectories over the same lines.
struct MotionError {
  double mae = 0.0;      // mean over lines and parameters
  double max_abs = 0.0;  // worst line and parameter
};
MotionError motion_error(const MotionTrajectory& estimate, const SamplingTrajectory& estimate_traj,
                         const MotionTrajectory& truth, const SamplingTrajectory& truth_traj);

/// Per-line states replaced by n_splits acquisition-contiguous groups per
/// intra-shot shot, each holding the mean of its lines' true parameters.
struct Discretized {
  SamplingTrajectory trajectory;
  MotionTrajectory motion;
  std::vector<int> split_states;
};
Discretized discretize_intra(const SimulatedScenario& sc, int n_splits);

enum class Method { Ttt, TttTh, AltOpt, AltOptTh, Known, None };
Method parse_method(const std::string& s);
std::string to_string(Method m);
enum class ReconKind { L1, DCLayer };
ReconKind parse_recon_kind(const std::string& s);
std::string to_string(ReconKind r);

struct ExperimentSpec {
  Shape shape{64, 64};
  std::size_t coils = 4;
  double acceleration = 4.0;
  MaskKind mask = MaskKind::UniformRandom;
  std::size_t shots = 8;
  TrajectoryOrder order = TrajectoryOrder::Interleaved;
  PhantomKind phantom = PhantomKind::Subspace;
  std::size_t subspace_dim = 16;
  double smoothness = 0.5;
  bool intra_shot = false;
  TTTConfig ttt = desk_ttt_config();
  L1Config l1;
  DCLayerConfig dc_layer;
  AltOptConfig altopt;
};

/// Everything needed to run one trial; deterministic in (spec, level, seed).
struct Trial {
  SubspaceBasis basis;
  ComplexVolume image;
  CoilSensitivities coils;
  SimulatedScenario scenario;
  ComplexVolume kspace;
};
Trial make_trial(const ExperimentSpec& spec, const SeverityLevel& level, std::uint64_t seed);

struct ExperimentRow {
  SeverityLevel level;
  std::string method;
  std::uint64_t seed = 0;
  double psnr = 0.0;
  double motion_mae = 0.0;
  std::size_t flagged_count = 0;
};

std::vector<ExperimentRow> run_experiment(const ExperimentSpec& spec, const SeverityLevel& level,
                                          const std::vector<Method>& methods, ReconKind recon,
                                          const std::vector<std::uint64_t>& seeds);

std::string experiment_csv(const std::vector<ExperimentRow>& rows);

struct SplitRow {
  SeverityLevel level;
  int n_splits = 0;
  std::uint64_t seed = 0;
  double psnr_known = 0.0;  // discretized true motion
  double psnr_ttt = 0.0;    // split states estimated, others known
  double motion_mae = 0.0;
};

/// Intra-shot scenarios with the inter-shot states known.
std::vector<SplitRow> sweep_nsplits(const ExperimentSpec& spec, const std::vector<SeverityLevel>& levels,
                                    const std::vector<int>& n_splits, const std::vector<std::uint64_t>& seeds,
                                    bool estimate = true);

std::string nsplits_csv(const std::vector<SplitRow>& rows);

}  // namespace mttt
