#include "mttt/coils.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mttt {

ComplexVolume CoilSensitivities::stacked() const {
  if (maps.empty()) throw ShapeError("coils: no maps");
  Shape shape{maps.size()};
  shape.insert(shape.end(), maps[0].shape().begin(), maps[0].shape().end());
  ComplexVolume out(shape);
  const std::size_t n = maps[0].size();
  for (std::size_t c = 0; c < maps.size(); ++c)
    std::copy(maps[c].data().begin(), maps[c].data().end(), out.data().begin() + long(c * n));
  return out;
}

CoilSensitivities CoilSensitivities::from_stacked(const ComplexVolume& v) {
  if (v.rank() < 2) throw ShapeError("coils: stacked volume needs a coil axis");
  Shape image(v.shape().begin() + 1, v.shape().end());
  const std::size_t n = shape_size(image);
  CoilSensitivities out;
  for (std::size_t c = 0; c < v.extent(0); ++c) {
    std::vector<cplx> data(v.data().begin() + long(c * n), v.data().begin() + long((c + 1) * n));
    out.maps.emplace_back(image, std::move(data));
  }
  return out;
}

CoilSensitivities make_coils(const Shape& image_shape, std::size_t num_coils, std::uint64_t seed) {
  if (num_coils == 0) throw Error("make_coils: need at least one coil");
  validate_shape(image_shape);
  if (image_shape.size() < 2 || image_shape.size() > 3)
    throw ShapeError("make_coils: image must be 2D or 3D");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  CoilSensitivities coils;
  const std::size_t n = shape_size(image_shape);

  if (num_coils == 1) {
    const double phase = std::numbers::pi * unit(rng);
    coils.maps.emplace_back(image_shape, std::vector<cplx>(n, std::polar(1.0, phase)));
    return coils;
  }

  const std::size_t nx = image_shape[0], ny = image_shape[1];
  const std::size_t nz = image_shape.size() == 3 ? image_shape[2] : 1;
  const double radius = 0.6;  // lobe centers, fraction of half field of view
  const double width = 0.7;   // Gaussian lobe width, same units
  for (std::size_t c = 0; c < num_coils; ++c) {
    const double angle = 2.0 * std::numbers::pi * double(c) / double(num_coils) + 0.2 * unit(rng);
    const double cx = radius * std::cos(angle);
    const double cy = radius * std::sin(angle);
    const double cz = image_shape.size() == 3 ? 0.3 * unit(rng) : 0.0;
    const double phase0 = std::numbers::pi * unit(rng);
    const double gx = 0.5 * unit(rng), gy = 0.5 * unit(rng), gz = 0.5 * unit(rng);
    ComplexVolume map(image_shape);
    for (std::size_t ix = 0; ix < nx; ++ix)
      for (std::size_t iy = 0; iy < ny; ++iy)
        for (std::size_t iz = 0; iz < nz; ++iz) {
          const double px = (double(ix) - double(nx / 2)) / (0.5 * double(nx));
          const double py = (double(iy) - double(ny / 2)) / (0.5 * double(ny));
          const double pz = nz > 1 ? (double(iz) - double(nz / 2)) / (0.5 * double(nz)) : 0.0;
          const double r2 = (px - cx) * (px - cx) + (py - cy) * (py - cy) + (pz - cz) * (pz - cz);
          const double mag = std::exp(-r2 / (2.0 * width * width));
          const double phase = phase0 + gx * px + gy * py + gz * pz;
          map[(ix * ny + iy) * nz + iz] = std::polar(mag, phase);
        }
    coils.maps.push_back(std::move(map));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const auto& m : coils.maps) s += std::norm(m[i]);
    const double inv = 1.0 / std::sqrt(s);
    for (auto& m : coils.maps) m[i] *= inv;
  }
  return coils;
}

ComplexVolume expand(const ComplexVolume& x, const CoilSensitivities& coils) {
  if (coils.maps.empty() || x.shape() != coils.shape())
    throw ShapeError("expand: image shape " + shape_string(x.shape()) + " does not match coils");
  Shape shape{coils.count()};
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  ComplexVolume out(shape);
  const std::size_t n = x.size();
  for (std::size_t c = 0; c < coils.count(); ++c)
    for (std::size_t i = 0; i < n; ++i) out[c * n + i] = coils.maps[c][i] * x[i];
  return out;
}

ComplexVolume reduce(const ComplexVolume& coil_images, const CoilSensitivities& coils) {
  if (coils.maps.empty()) throw ShapeError("reduce: no coils");
  Shape expect{coils.count()};
  expect.insert(expect.end(), coils.shape().begin(), coils.shape().end());
  if (coil_images.shape() != expect)
    throw ShapeError("reduce: coil images " + shape_string(coil_images.shape()) +
                     " do not match " + shape_string(expect));
  ComplexVolume out(coils.shape());
  const std::size_t n = out.size();
  for (std::size_t c = 0; c < coils.count(); ++c)
    for (std::size_t i = 0; i < n; ++i) out[i] += std::conj(coils.maps[c][i]) * coil_images[c * n + i];
  return out;
}

}  // namespace mttt
