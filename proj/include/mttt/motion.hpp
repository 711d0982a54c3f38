#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <vector>

#include "mttt/coils.hpp"
#include "mttt/complex_volume.hpp"
#include "mttt/nufft.hpp"
#include "mttt/sampling.hpp"

namespace mttt {

/// Rigid motion state. Translations in voxels, angles in degrees.
/// 2D uses t[0], t[1] and the in-plane angle phi[0]; 3D uses all six.
struct MotionState {
  std::array<double, 3> t{};
  std::array<double, 3> phi{};

  friend bool operator==(const MotionState&, const MotionState&) = default;
};

/// Parameters per state: 3 in 2D (t1, t2, φ), 6 in 3D (t1..t3, φ1..φ3).
std::size_t params_per_state(std::size_t dim);
/// True when parameter q of a state is a rotation angle.
bool is_rotation_param(std::size_t dim, std::size_t q);

struct MotionTrajectory {
  std::size_t dim = 2;
  std::vector<MotionState> states;

  MotionTrajectory() = default;
  MotionTrajectory(std::size_t dim, std::size_t num_states);

  std::size_t size() const { return states.size(); }
  std::size_t params_per_state() const { return mttt::params_per_state(dim); }

  /// Flat parameter vector, state-major in the per-state order above.
  std::vector<double> params() const;
  void set_params(std::span<const double> p);
  double& param(std::size_t state, std::size_t q);
  double param(std::size_t state, std::size_t q) const;

  /// Maps angles into (−180, 180].
  void normalize_angles();

  /// One row per state: state, t1.., phi...
  void save_csv(const std::filesystem::path& path) const;
  std::string to_csv() const;
  static MotionTrajectory load_csv(const std::filesystem::path& path);
  static MotionTrajectory from_csv(const std::string& text);

  friend bool operator==(const MotionTrajectory&, const MotionTrajectory&) = default;
};

/// Parameter names in CSV column order.
std::vector<std::string> param_names(std::size_t dim);

/// Rotation matrix (row-major 3×3). 2D: rotation about z by phi[0].
/// 3D: extrinsic x → y → z, R = Rz(φ3)·Ry(φ2)·Rx(φ1).
std::array<double, 9> rotation_matrix(std::size_t dim, const MotionState& s);
/// ∂R/∂φ_axis in radian units.
std::array<double, 9> rotation_derivative(std::size_t dim, const MotionState& s, std::size_t axis);

/// Rotated coordinates R(φ_state)ᵀ k for every point; point p belongs to
/// state point_state[p]. All states share one coordinate list.
FreqCoords rotate_coords(const FreqCoords& base, const MotionTrajectory& m,
                         std::span<const int> point_state);

/// samples[c, p] · e^{sign·(−i)·k_p·t_state}, in place. sign = +1 corrupts,
/// sign = −1 corrects.
void phase_shift(ComplexVolume& samples, const FreqCoords& base, const MotionTrajectory& m,
                 std::span<const int> point_state, int sign);

/// Per-evaluation cache of the motion-dependent quantities.
struct MotionGeometry {
  FreqCoords rotated;
  GriddingTable table;
  std::vector<cplx> phase;      // e^{−i k·t} per point
  std::vector<double> weights;  // density compensation per point, or empty
};

/// A(T, m) = L(T, t)·N(T, φ)·F·E restricted to the sampled lines.
///
/// k-space samples are stored as C × L × Z: coils, sampled lines in
/// ascending index order, read-out positions (Z = 1 in 2D).
class MotionOperator {
 public:
  MotionOperator(Shape image_shape, CoilSensitivities coils, SamplingTrajectory trajectory,
                 NufftOptions options = {});
  /// Same geometry and coils with a different trajectory over the same lines.
  MotionOperator with_trajectory(SamplingTrajectory trajectory) const;

  const Shape& image_shape() const { return image_shape_; }
  std::size_t dim() const { return image_shape_.size(); }
  const CoilSensitivities& coils() const { return coils_; }
  const SamplingTrajectory& trajectory() const { return trajectory_; }
  const NufftPlan& plan() const { return *plan_; }
  Shape kspace_shape() const;
  std::size_t num_points() const { return base_.size(); }
  std::size_t readout() const { return readout_; }
  std::size_t num_states() const { return std::size_t(trajectory_.num_states); }
  const FreqCoords& base_coords() const { return base_; }
  /// State of each point (line-major, then read-out).
  const std::vector<int>& point_state() const { return point_state_; }
  /// Point ranges [first, last) of each stored line.
  std::size_t line_of_point(std::size_t p) const { return p / readout_; }

  MotionTrajectory zero_motion() const { return MotionTrajectory(dim(), num_states()); }

  MotionGeometry geometry(const MotionTrajectory& m, bool density_compensation = false) const;

  ComplexVolume forward(const ComplexVolume& x, const MotionTrajectory& m) const;
  ComplexVolume forward(const ComplexVolume& x, const MotionGeometry& g) const;

  /// E†·N†(T, −φ)·L(T, −t)·y with density compensation by default.
  ComplexVolume corrected_zf(const ComplexVolume& y, const MotionTrajectory& m,
                             bool density_compensation = true) const;
  /// Uses g.weights when present.
  ComplexVolume corrected_zf(const ComplexVolume& y, const MotionGeometry& g) const;

  /// Exact adjoint A(T, m)ᴴ (no density compensation).
  ComplexVolume adjoint(const ComplexVolume& y, const MotionTrajectory& m) const;
  ComplexVolume adjoint(const ComplexVolume& y, const MotionGeometry& g) const;

  /// ∂/∂m Re⟨cot, A(T, m)x⟩, flat in MotionTrajectory::params order.
  std::vector<double> forward_grad_motion(const ComplexVolume& x, const MotionTrajectory& m,
                                          const ComplexVolume& cot) const;
  std::vector<double> forward_grad_motion(const ComplexVolume& x, const MotionTrajectory& m,
                                          const MotionGeometry& g, const ComplexVolume& cot) const;

  /// ∂/∂m Re⟨cot, corrected_zf(y, m)⟩ with the density weights of `g` held
  /// constant.
  std::vector<double> zf_grad_motion(const ComplexVolume& y, const MotionTrajectory& m,
                                     const MotionGeometry& g, const ComplexVolume& cot) const;

  /// 1 for points whose state is not excluded, else 0.
  std::vector<double> point_mask(std::span<const int> excluded_states) const;

 private:
  void check_motion(const MotionTrajectory& m) const;
  void check_kspace(const ComplexVolume& y) const;
  std::vector<double> coords_to_params(const MotionTrajectory& m,
                                       const std::vector<double>& coord_grad) const;

  Shape image_shape_;
  CoilSensitivities coils_;
  SamplingTrajectory trajectory_;
  std::shared_ptr<const NufftPlan> plan_;
  std::size_t readout_ = 1;
  std::vector<std::size_t> lines_;
  FreqCoords base_;
  std::vector<int> point_state_;
  std::shared_ptr<const std::vector<double>> base_weights_;
};

}  // namespace mttt
