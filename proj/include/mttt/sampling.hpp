#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mttt/complex_volume.hpp"

namespace mttt {

/// Geometry of a Cartesian acquisition: the phase-encode plane k_x × k_y is
/// undersampled, the read-out axis k_z (3D only) is always fully sampled.
/// A "line" is one phase-encode position, addressed by its flat index
/// kx * ny + ky; in 2D each line holds a single sample.
struct PhaseEncodePlane {
  std::size_t nx = 0;
  std::size_t ny = 0;

  std::size_t size() const { return nx * ny; }
  std::size_t flat(std::size_t kx, std::size_t ky) const { return kx * ny + ky; }
  std::size_t kx(std::size_t line) const { return line / ny; }
  std::size_t ky(std::size_t line) const { return line % ny; }
  /// True for the 3×3 block around (⌊nx/2⌋, ⌊ny/2⌋).
  bool in_center_block(std::size_t line) const;
  /// Euclidean distance of a line to the k-space center, in grid units.
  double center_distance(std::size_t line) const;

  friend bool operator==(const PhaseEncodePlane&, const PhaseEncodePlane&) = default;
};

/// Plane for an image of shape r_x × r_y (× r_z).
PhaseEncodePlane plane_for(const Shape& image_shape);
/// Read-out length (1 for 2D images).
std::size_t readout_length(const Shape& image_shape);

enum class MaskKind { InterleavedColumns, UniformRandom };

MaskKind parse_mask_kind(const std::string& s);
std::string to_string(MaskKind k);

struct UndersamplingMask {
  PhaseEncodePlane plane;
  std::vector<std::uint8_t> grid;  // 0/1 per line
  double acceleration = 1.0;

  std::size_t count() const;
  double sampled_fraction() const { return double(count()) / double(plane.size()); }
  bool sampled(std::size_t line) const { return grid.at(line) != 0; }
  /// Sampled line indices in ascending order.
  std::vector<std::size_t> lines() const;

  /// 0/1 payload over nx × ny for MTTT-ARRAY export.
  ComplexVolume to_volume() const;
  static UndersamplingMask from_volume(const ComplexVolume& v, double acceleration);
};

/// Deterministic for a fixed seed. The 3×3 center block is always sampled and
/// the sampled fraction is within ±10% of 1/R, otherwise construction fails.
UndersamplingMask make_mask(const PhaseEncodePlane& plane, double acceleration, MaskKind kind,
                            std::uint64_t seed);

enum class TrajectoryOrder { Interleaved, Random, Linear, DeterministicRadius };

TrajectoryOrder parse_trajectory_order(const std::string& s);
std::string to_string(TrajectoryOrder o);

/// Acquisition order of the sampled lines plus the line → motion-state map.
struct SamplingTrajectory {
  PhaseEncodePlane plane;
  std::vector<std::vector<std::size_t>> shots;  // acquisition-ordered line indices
  std::vector<int> line_to_state;               // per plane position; -1 if unsampled
  int num_states = 0;

  /// Sampled lines in ascending index order; this is the storage order of
  /// k-space samples everywhere in the library.
  std::vector<std::size_t> lines() const;
  /// States aligned with lines().
  std::vector<int> states_of_lines() const;
  std::size_t line_count() const;
  /// Number of lines per state.
  std::vector<std::size_t> state_line_counts() const;

  /// Throws unless shots are disjoint, line_to_state is total over the shot
  /// lines and every state 0..num_states-1 owns at least one line.
  void validate() const;
  /// Also checks that the shots cover exactly the support of `mask`.
  void validate_against(const UndersamplingMask& mask) const;

  nlohmann::json to_json() const;
  static SamplingTrajectory from_json(const nlohmann::json& j);
};

/// Builds B shots over the mask support. With `center_first`, the 3×3 center
/// lines are acquired first, in shot 0 (not applied to the linear order).
SamplingTrajectory make_trajectory(const UndersamplingMask& mask, std::size_t num_shots,
                                   TrajectoryOrder order, std::uint64_t seed,
                                   bool center_first = true);

}  // namespace mttt
