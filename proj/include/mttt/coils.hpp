#pragma once

#include <cstdint>
#include <vector>

#include "mttt/complex_volume.hpp"

namespace mttt {

/// Synthetic receive-coil sensitivities S_1..S_C over the image grid,
/// normalized so that Σ_j |S_j|² = 1 at every voxel.
struct CoilSensitivities {
  std::vector<ComplexVolume> maps;

  std::size_t count() const { return maps.size(); }
  const Shape& shape() const { return maps.at(0).shape(); }

  /// Stacked C × image volume for MTTT-ARRAY export.
  ComplexVolume stacked() const;
  static CoilSensitivities from_stacked(const ComplexVolume& v);
};

/// Smooth complex Gaussian lobes placed at evenly spaced angles around the
/// image center, then voxel-wise normalized. C = 1 gives a constant
/// unit-magnitude map.
CoilSensitivities make_coils(const Shape& image_shape, std::size_t num_coils, std::uint64_t seed);

/// E x: per-coil images S_j · x, stacked as C × image.
ComplexVolume expand(const ComplexVolume& x, const CoilSensitivities& coils);
/// E^H: Σ_j conj(S_j) · x_j.
ComplexVolume reduce(const ComplexVolume& coil_images, const CoilSensitivities& coils);

}  // namespace mttt
