#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "mttt/motion.hpp"
#include "mttt/reconstructor.hpp"

namespace mttt {

struct PhaseSchedule {
  int iters = 0;
  double lr = 0.0;
  double decay_factor = 1.0;
  std::vector<int> decay_at;  // 0-based iterations at which lr is divided
};

/// Learning rate in effect at 0-based iteration `iter`.
double schedule_lr(const PhaseSchedule& s, int iter);

struct TTTConfig {
  PhaseSchedule phase1{70, 4.0, 4.0, {40, 60}};
  PhaseSchedule phase2{30, 0.5, 1.0, {}};
  PhaseSchedule phase3{30, 0.05, 1.0, {}};
  int extra_converge_iters = 30;
  int extra_converge_decay_after = 10;
  double dc_threshold = 0.575;
  int n_splits = 10;
  std::vector<double> clamp_bounds{5, 8, 10, 12, 15};
  std::vector<int> clamp_until{15, 30, 45, 60, 150};
  int rot_only_warmup_steps = 5;
  int grad_slice_count = 5;  // 3D only; 0 uses every slice
  bool fix_first_state = true;
  bool intra_shot = false;
  bool density_compensation = true;
  std::uint64_t seed = 0;

  /// Throws unless rates are positive, decays increasing and inside the
  /// phase, and the clamp arrays have equal length.
  void validate() const;
};

/// Defaults with the phase-1 rate lowered to 0.5 for small images.
TTTConfig desk_ttt_config();

/// |parameter| bound after global optimizer step `step`; +inf once the
/// schedule has run out.
double clamp_bound(const TTTConfig& cfg, int step);

struct DCReport {
  std::vector<double> per_state_loss;
  double threshold = 0.0;
  std::vector<int> flagged;

  /// flagged = { i : loss[i] > threshold }.
  static DCReport from_losses(std::vector<double> losses, double threshold);
};

/// Slices along `axis` through which the reconstructor gradient flows;
/// empty `indices` means every slice.
struct SliceSelection {
  std::size_t axis = 0;
  std::vector<std::size_t> indices;
};

struct DCEvaluation {
  double loss = 0.0;
  std::vector<double> grad;  // flat motion parameters
  ComplexVolume zero_filled;
  ComplexVolume reconstruction;
  ComplexVolume prediction;
};

/// ‖A(T,m)·f(A†(T,−m)y) − y‖₁ / ‖y‖₁.
double dc_loss(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
               const Reconstructor& recon, bool density_compensation = true);

/// Loss and its gradient in m. The density weights are held constant.
/// Non-differentiable reconstructors contribute only the re-acquisition
/// path to the gradient.
DCEvaluation dc_loss_and_grad(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
                              const Reconstructor& recon, bool density_compensation = true,
                              const SliceSelection* slices = nullptr);

/// Relative ℓ₁ residual restricted to points with mask 1.
double masked_dc_loss(const ComplexVolume& prediction, const ComplexVolume& y, std::span<const double> mask);

DCReport dc_loss_per_state(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
                           const Reconstructor& recon, double threshold, bool density_compensation = true);
DCReport report_from_prediction(const MotionOperator& op, const ComplexVolume& prediction,
                                const ComplexVolume& y, double threshold);

class Adam {
 public:
  Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// One bias-corrected step on entries with mask != 0 (all when empty).
  void step(std::vector<double>& params, const std::vector<double>& grad, double lr,
            const std::vector<std::uint8_t>& mask = {});
  int steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

struct TraceRow {
  std::string phase;
  int iteration = 0;
  int global_step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct PhaseOutcome {
  MotionTrajectory motion;
  std::vector<TraceRow> trace;
};

/// Phase 1 from m = 0 with one state per shot.
PhaseOutcome run_phase1(const MotionOperator& op, const ComplexVolume& y, const Reconstructor& recon,
                        const TTTConfig& cfg);

struct ResetOutcome {
  MotionTrajectory motion;
  SamplingTrajectory trajectory;
  std::vector<int> trainable;
};

/// Resets flagged states to the mean of their nearest unflagged neighbors;
/// with `intra`, splits each flagged state's lines into n_splits
/// acquisition-contiguous states. State 0 is never reset when
/// fix_first_state is set.
ResetOutcome reset_and_split(const MotionTrajectory& m, const DCReport& report, const SamplingTrajectory& traj,
                             const TTTConfig& cfg, bool intra);

struct TTTResult {
  MotionTrajectory phase1_motion;
  DCReport phase1_report;
  MotionTrajectory motion;
  SamplingTrajectory trajectory;
  DCReport report;
  std::vector<int> trainable;
  std::vector<TraceRow> trace;
};

TTTResult run_full(const MotionOperator& op, const ComplexVolume& y, const Reconstructor& recon,
                   const TTTConfig& cfg);

/// Phase-2 then phase-3 schedules on the `trainable` states only, starting
/// from `m` after warm-up and with the clamp schedule at its phase-2 step.
PhaseOutcome refine_states(const MotionOperator& op, const ComplexVolume& y, const Reconstructor& recon,
                           const TTTConfig& cfg, MotionTrajectory m, const std::vector<int>& trainable);

void save_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path);
void save_report_csv(const DCReport& report, const std::filesystem::path& path);

nlohmann::json to_json(const TTTConfig& cfg);
/// Overlays keys of `j` onto `cfg`; unknown keys are rejected.
void from_json(const nlohmann::json& j, TTTConfig& cfg);

}  // namespace mttt
