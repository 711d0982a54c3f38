#include "mttt/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mttt/fft.hpp"

namespace mttt {

double SubspaceBasis::gram_deviation() const {
  double worst = 0.0;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += u[a * n + i] * u[b * n + i];
      worst = std::max(worst, std::abs(s - (a == b ? 1.0 : 0.0)));
    }
  return worst;
}

std::vector<double> SubspaceBasis::project(std::span<const double> x) const {
  if (x.size() != n) throw ShapeError("basis project: length mismatch");
  std::vector<double> c(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double* col = u.data() + j * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += col[i] * x[i];
    c[j] = s;
  }
  return c;
}

std::vector<double> SubspaceBasis::synthesize(std::span<const double> c) const {
  if (c.size() != d) throw ShapeError("basis synthesize: length mismatch");
  std::vector<double> x(n, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double* col = u.data() + j * n;
    for (std::size_t i = 0; i < n; ++i) x[i] += col[i] * c[j];
  }
  return x;
}

SubspaceBasis gaussian_basis(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) throw ShapeError("gaussian_basis: empty dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(n)));
  SubspaceBasis b{n, d, std::vector<double>(n * d)};
  for (auto& v : b.u) v = normal(rng);
  return b;
}

SubspaceBasis smooth_basis(const Shape& shape, std::size_t d, double cutoff, std::uint64_t seed) {
  validate_shape(shape);
  const std::size_t n = shape_size(shape);
  if (d == 0 || d >= n) throw ShapeError("smooth_basis: need 0 < d < n");
  if (!(cutoff > 0.0 && cutoff <= 1.0)) throw Error("smooth_basis: cutoff must be in (0, 1]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SubspaceBasis b{n, d, std::vector<double>(n * d)};

  // Frequency radius of each centered k-space index, as a fraction of Nyquist.
  std::vector<double> radius(n, 0.0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t rem = flat;
    double r2 = 0.0;
    for (std::size_t a = shape.size(); a-- > 0;) {
      const std::size_t idx = rem % shape[a];
      rem /= shape[a];
      const double k = (double(idx) - double(shape[a] / 2)) / (0.5 * double(shape[a]));
      r2 += k * k;
    }
    radius[flat] = std::sqrt(r2);
  }

  std::size_t filled = 0;
  while (filled < d) {
    ComplexVolume spec(shape);
    for (std::size_t i = 0; i < n; ++i)
      if (radius[i] <= cutoff) spec[i] = cplx(normal(rng), normal(rng));
    const ComplexVolume img = fft_centered(spec, FftDirection::Inverse);
    double* col = b.u.data() + filled * n;
    for (std::size_t i = 0; i < n; ++i) col[i] = img[i].real();
    // Two passes of modified Gram-Schmidt.
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j < filled; ++j) {
        const double* q = b.u.data() + j * n;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += q[i] * col[i];
        for (std::size_t i = 0; i < n; ++i) col[i] -= s * q[i];
      }
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += col[i] * col[i];
    nrm = std::sqrt(nrm);
    if (nrm < 1e-8) continue;  // band exhausted for this draw; redraw
    for (std::size_t i = 0; i < n; ++i) col[i] /= nrm;
    ++filled;
  }
  return b;
}

PhantomKind parse_phantom_kind(const std::string& s) {
  if (s == "ellipses") return PhantomKind::Ellipses;
  if (s == "subspace") return PhantomKind::Subspace;
  throw Error("unknown phantom kind: " + s);
}

namespace {

ComplexVolume ellipse_phantom(const Shape& shape, std::size_t count, std::uint64_t seed) {
  if (shape.size() < 2 || shape.size() > 3) throw ShapeError("ellipse phantom must be 2D or 3D");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Ellipse {
    double cx, cy, cz, ax, ay, az, angle, value;
  };
  std::vector<Ellipse> shapes;
  shapes.push_back({0.0, 0.0, 0.0, 0.75, 0.85, 0.8, 0.0, 0.8});
  for (std::size_t i = 0; i < count; ++i) {
    Ellipse e;
    e.cx = 0.5 * (2 * unit(rng) - 1);
    e.cy = 0.5 * (2 * unit(rng) - 1);
    e.cz = 0.4 * (2 * unit(rng) - 1);
    e.ax = 0.08 + 0.25 * unit(rng);
    e.ay = 0.08 + 0.25 * unit(rng);
    e.az = 0.1 + 0.3 * unit(rng);
    e.angle = std::numbers::pi * unit(rng);
    e.value = 0.4 * (2 * unit(rng) - 1);
    shapes.push_back(e);
  }
  const double p0 = 2 * unit(rng) - 1, p1 = 2 * unit(rng) - 1, p2 = 2 * unit(rng) - 1;

  const std::size_t nx = shape[0], ny = shape[1], nz = shape.size() == 3 ? shape[2] : 1;
  ComplexVolume out(shape);
  for (std::size_t ix = 0; ix < nx; ++ix)
    for (std::size_t iy = 0; iy < ny; ++iy)
      for (std::size_t iz = 0; iz < nz; ++iz) {
        const double px = (double(ix) - double(nx / 2)) / (0.5 * double(nx));
        const double py = (double(iy) - double(ny / 2)) / (0.5 * double(ny));
        const double pz = nz > 1 ? (double(iz) - double(nz / 2)) / (0.5 * double(nz)) : 0.0;
        double mag = 0.0;
        for (const auto& e : shapes) {
          const double c = std::cos(e.angle), s = std::sin(e.angle);
          const double dx = px - e.cx, dy = py - e.cy;
          const double u = (c * dx + s * dy) / e.ax;
          const double v = (-s * dx + c * dy) / e.ay;
          const double w = nz > 1 ? (pz - e.cz) / e.az : 0.0;
          if (u * u + v * v + w * w <= 1.0) mag += e.value;
        }
        mag = std::clamp(mag, 0.0, 1.0);
        const double phase = 0.5 * (p0 * px + p1 * py) + 0.3 * p2 * (px * px + py * py + pz * pz);
        out[(ix * ny + iy) * nz + iz] = std::polar(mag, phase);
      }
  return out;
}

}  // namespace

ComplexVolume make_phantom(const Shape& shape, PhantomKind kind, const PhantomParams& params,
                           std::uint64_t seed) {
  validate_shape(shape);
  if (kind == PhantomKind::Ellipses) return ellipse_phantom(shape, params.num_ellipses, seed);
  if (!params.basis) throw Error("subspace phantom requires a basis");
  const auto& basis = *params.basis;
  if (basis.n != shape_size(shape))
    throw ShapeError("subspace phantom: basis has " + std::to_string(basis.n) +
                     " rows, shape has " + std::to_string(shape_size(shape)) + " voxels");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> c(basis.d);
  for (auto& v : c) v = normal(rng);
  const auto x = basis.synthesize(c);
  ComplexVolume out(shape);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
  return out;
}

}  // namespace mttt
