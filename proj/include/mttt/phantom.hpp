#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mttt/complex_volume.hpp"

namespace mttt {

/// Real n × d matrix, column-major (column j occupies [j*n, (j+1)*n)).
struct SubspaceBasis {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> u;

  double at(std::size_t row, std::size_t col) const { return u[col * n + row]; }
  std::span<const double> column(std::size_t col) const { return {u.data() + col * n, n}; }

  /// max |UᵀU − I| over all entries.
  double gram_deviation() const;
  /// Uᵀ x for a real vector.
  std::vector<double> project(std::span<const double> x) const;
  /// U c.
  std::vector<double> synthesize(std::span<const double> c) const;
};

/// i.i.d. N(0, 1/n) entries: columns are nearly orthonormal for n ≫ d.
SubspaceBasis gaussian_basis(std::size_t n, std::size_t d, std::uint64_t seed);

/// Orthonormal basis of band-limited random images: each column is a real
/// random field with spectrum confined to |k| ≤ cutoff·π (per-axis centered
/// frequencies), orthonormalized by Gram-Schmidt. n = product of shape.
SubspaceBasis smooth_basis(const Shape& shape, std::size_t d, double cutoff, std::uint64_t seed);

enum class PhantomKind { Ellipses, Subspace };

PhantomKind parse_phantom_kind(const std::string& s);

struct PhantomParams {
  const SubspaceBasis* basis = nullptr;  // required for Subspace
  std::size_t num_ellipses = 8;
};

/// Ellipses: sum of rotated ellipse indicators with magnitude clamped to
/// [0, 1] and a smooth phase. Subspace: x = U c with c i.i.d. N(0, 1).
ComplexVolume make_phantom(const Shape& shape, PhantomKind kind, const PhantomParams& params,
                           std::uint64_t seed);

}  // namespace mttt
