#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mttt/complex_volume.hpp"

namespace mttt {

/// Frequency coordinates in radians/sample, row-major M × dim.
struct FreqCoords {
  std::size_t dim = 0;
  std::vector<double> values;

  FreqCoords() = default;
  FreqCoords(std::size_t dim, std::vector<double> values);

  std::size_t size() const { return dim ? values.size() / dim : 0; }
  double operator()(std::size_t p, std::size_t axis) const { return values[p * dim + axis]; }
  double& operator()(std::size_t p, std::size_t axis) { return values[p * dim + axis]; }
};

/// Maps k into [−π, π).
double wrap_frequency(double k);

/// Integer-grid frequencies of `shape` in fft_centered output order.
FreqCoords grid_frequencies(const Shape& shape);

struct NufftOptions {
  double oversampling = 2.0;
  /// Kernel width in units of the original grid; the kernel spans
  /// oversampling·kernel_width samples of the oversampled grid.
  double kernel_width = 4.0;
};

/// Per-coordinate interpolation stencil on the oversampled grid. Built once
/// per coordinate set and shared by all coils and gradient passes.
struct GriddingTable {
  std::size_t points = 0;
  std::size_t taps = 0;     // stencil length per axis
  std::size_t dim = 0;
  std::array<std::vector<std::uint32_t>, 3> index;  // points × taps per axis
  std::array<std::vector<double>, 3> weight;
};

/// Kaiser-Bessel gridding NUFFT on a fixed Cartesian grid.
///
/// forward: f(k_p) ≈ Σ_x image(x)·e^{−i k_p·x} / √N over centered positions
///          x_a = i_a − ⌊N_a/2⌋, evaluated by deapodize → zero-padded FFT →
///          kernel interpolation.
/// adjoint: exact adjoint of forward, optionally applied to W·samples.
///
/// Coordinates are wrapped into [−π, π) before gridding, so the operator is
/// 2π-periodic in every frequency component. Plans are immutable and
/// shareable across threads.
class NufftPlan {
 public:
  explicit NufftPlan(Shape grid, NufftOptions options = {});

  const Shape& grid() const { return grid_; }
  std::size_t dim() const { return grid_.size(); }
  double beta() const { return beta_; }
  const NufftOptions& options() const { return options_; }

  GriddingTable prepare(const FreqCoords& coords) const;

  std::vector<cplx> forward(const ComplexVolume& image, const GriddingTable& table) const;
  std::vector<cplx> forward(const ComplexVolume& image, const FreqCoords& coords) const;

  ComplexVolume adjoint(std::span<const cplx> samples, const GriddingTable& table,
                        std::span<const double> weights = {}) const;
  ComplexVolume adjoint(std::span<const cplx> samples, const FreqCoords& coords,
                        std::span<const double> weights = {}) const;

  /// Pipe's fixed point w ← w / (G Gᴴ w) with the gridding kernel, scaled so
  /// that a fully sampled Cartesian grid receives unit weights.
  std::vector<double> pipe_weights(const GriddingTable& table, int iterations = 10) const;
  std::vector<double> pipe_weights(const FreqCoords& coords, int iterations = 10) const;

  /// ∂/∂k_p Re⟨cotangent, forward(image)⟩, row-major M × dim. Evaluated as
  /// forward passes over the moment images −i·x_d·image.
  std::vector<double> coord_grad(const ComplexVolume& image, const GriddingTable& table,
                                 std::span<const cplx> cotangent) const;
  std::vector<double> coord_grad(const ComplexVolume& image, const FreqCoords& coords,
                                 std::span<const cplx> cotangent) const;

  /// −i·x_axis·image with centered positions.
  ComplexVolume moment(const ComplexVolume& image, std::size_t axis) const;

 private:
  double kernel(double u) const;
  void stencil(double k, std::size_t g, std::span<std::uint32_t> idx, std::span<double> wt) const;
  void check_image(const ComplexVolume& image) const;
  std::vector<cplx> to_oversampled_spectrum(const ComplexVolume& image) const;
  void interpolate(const std::vector<cplx>& grid, const GriddingTable& table,
                   std::span<cplx> out) const;
  template <typename T>
  void spread(std::span<const T> values, const GriddingTable& table, std::vector<T>& grid) const;
  template <typename T>
  void gather(const std::vector<T>& grid, const GriddingTable& table, std::span<T> out) const;

  Shape grid_;
  NufftOptions options_;
  Shape oversampled_;
  double width_ = 0.0;  // kernel width on the oversampled grid
  double beta_ = 0.0;
  std::size_t taps_ = 0;
  std::array<std::vector<double>, 3> deapod_;  // 1/φ̂ per axis and position
  double cartesian_density_ = 1.0;
  double scale_ = 1.0;  // 1/√N
};

}  // namespace mttt
