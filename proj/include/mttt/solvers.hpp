#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "mttt/motion.hpp"
#include "mttt/ttt.hpp"

namespace mttt {

struct L1Config {
  int steps = 50;
  double lambda = 1e-3;
  int levels = 3;
  /// When set, lr is used verbatim on unnormalized data.
  bool paper_scale = false;
  double lr = 5e7;

  void validate() const;
};

struct AltOptConfig {
  int recon_steps_per_round = 2;
  int motion_steps_per_round = 4;
  double recon_lambda = 1e-4;
  int levels = 3;
  /// Gauss-Newton damping for the motion steps.
  double motion_step = 0.5;
  int max_iters = 500;
  /// Stop once the loss drops below this fraction of the initial loss.
  double early_stop_fraction = 1e-6;
  bool paper_scale = false;
  double recon_lr = 5e7;
  double motion_lr = 5e-11;
  bool fix_first_state = true;

  void validate() const;
};

struct DCLayerConfig {
  double lambda = 0.1;
  int steps = 50;
  /// First step length relative to ‖x_init‖₂; later steps shrink as 1/√k.
  double relative_step = 0.01;

  void validate() const;
};

struct SolverResult {
  ComplexVolume image;
  std::vector<double> trace;  // objective per iteration, starting value first
};

struct AltOptResult {
  MotionTrajectory motion;
  ComplexVolume image;
  std::vector<double> trace;  // mean-squared residual after each round
};

/// Largest eigenvalue of AᴴMA by power iteration (M the point mask).
double operator_norm_sq(const MotionOperator& op, const MotionTrajectory& m, std::span<const double> mask,
                        int iterations = 10);

/// argmin ‖M(A x − y)‖² + λ‖W x‖₁ by subgradient descent from the corrected
/// zero-filled image; M drops the lines of `excluded` states.
SolverResult l1_reconstruct(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
                            const L1Config& cfg, std::span<const int> excluded = {});

/// argmin ‖M(A x − y)‖₁/‖M y‖₁ + λ‖x − x₀‖₁/‖x₀‖₁ from x₀; returns the best
/// iterate.
SolverResult dc_layer_refine(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
                             const ComplexVolume& x_init, const DCLayerConfig& cfg,
                             std::span<const int> excluded = {});

AltOptResult altopt(const MotionOperator& op, const ComplexVolume& y, const AltOptConfig& cfg);

/// l1_reconstruct without the flagged states of `report`.
SolverResult threshold_and_reconstruct(const MotionOperator& op, const ComplexVolume& y,
                                       const MotionTrajectory& m, const DCReport& report, const L1Config& cfg);

nlohmann::json to_json(const L1Config& cfg);
void from_json(const nlohmann::json& j, L1Config& cfg);
nlohmann::json to_json(const AltOptConfig& cfg);
void from_json(const nlohmann::json& j, AltOptConfig& cfg);
nlohmann::json to_json(const DCLayerConfig& cfg);
void from_json(const nlohmann::json& j, DCLayerConfig& cfg);

}  // namespace mttt
