#include "mttt/nufft.hpp"

#include <cmath>
#include <numbers>

#include "mttt/fft.hpp"

namespace mttt {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

FreqCoords::FreqCoords(std::size_t d, std::vector<double> v) : dim(d), values(std::move(v)) {
  if (dim == 0 || dim > 3) throw ShapeError("FreqCoords: dimension must be 1, 2 or 3");
  if (values.size() % dim != 0) throw ShapeError("FreqCoords: length not a multiple of dim");
}

double wrap_frequency(double k) {
  double w = k - kTwoPi * std::floor((k + std::numbers::pi) / kTwoPi);
  if (w >= std::numbers::pi) w -= kTwoPi;
  if (w < -std::numbers::pi) w += kTwoPi;
  return w;
}

FreqCoords grid_frequencies(const Shape& shape) {
  validate_shape(shape);
  if (shape.size() > 3) throw ShapeError("grid_frequencies: at most three axes");
  const std::size_t n = shape_size(shape);
  FreqCoords c(shape.size(), std::vector<double>(n * shape.size()));
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t rem = flat;
    for (std::size_t a = shape.size(); a-- > 0;) {
      const std::size_t idx = rem % shape[a];
      rem /= shape[a];
      c(flat, a) = kTwoPi * (double(idx) - double(shape[a] / 2)) / double(shape[a]);
    }
  }
  return c;
}

NufftPlan::NufftPlan(Shape grid, NufftOptions options) : grid_(std::move(grid)), options_(options) {
  validate_shape(grid_);
  if (grid_.size() > 3) throw ShapeError("NufftPlan: at most three axes");
  if (!(options_.oversampling > 1.0)) throw Error("NufftPlan: oversampling must exceed 1");
  if (!(options_.kernel_width > 0.0)) throw Error("NufftPlan: kernel width must be positive");

  const double sigma = options_.oversampling;
  const double w = options_.kernel_width;
  width_ = sigma * w;
  beta_ = std::numbers::pi * std::sqrt(w * w * (sigma - 0.5) * (sigma - 0.5) - 0.8);
  taps_ = static_cast<std::size_t>(std::ceil(width_));

  taps_ = std::max<std::size_t>(taps_, 1);

  const double i0b = std::cyl_bessel_i(0.0, beta_);
  auto kernel_ft = [&](double nu) {
    const double a = std::numbers::pi * width_ * nu;
    const double z2 = beta_ * beta_ - a * a;
    double v = 1.0;
    if (z2 > 0) {
      const double z = std::sqrt(z2);
      v = std::sinh(z) / z;
    } else if (z2 < 0) {
      const double z = std::sqrt(-z2);
      v = std::sin(z) / z;
    }
    return width_ * v / i0b;
  };

  std::size_t n = 1;
  for (std::size_t a = 0; a < grid_.size(); ++a) {
    auto g = static_cast<std::size_t>(std::ceil(sigma * double(grid_[a])));
    if (g % 2) ++g;
    oversampled_.push_back(g);
    n *= grid_[a];
    deapod_[a].resize(grid_[a]);
    for (std::size_t i = 0; i < grid_[a]; ++i) {
      const double x = double(i) - double(grid_[a] / 2);
      deapod_[a][i] = 1.0 / kernel_ft(x / double(g));
    }
  }
  scale_ = 1.0 / std::sqrt(double(n));

  // Density a fully sampled Cartesian grid accumulates under G Gᴴ; Pipe
  // weights are reported relative to it.
  cartesian_density_ = 1.0;
  for (std::size_t a = 0; a < grid_.size(); ++a) {
    const std::size_t g = oversampled_[a];
    std::vector<double> acc(g, 0.0);
    std::vector<std::uint32_t> idx(taps_);
    std::vector<double> wt(taps_);
    for (std::size_t q = 0; q < grid_[a]; ++q) {
      const double k = kTwoPi * (double(q) - double(grid_[a] / 2)) / double(grid_[a]);
      stencil(k, g, idx, wt);
      for (std::size_t t = 0; t < taps_; ++t) acc[idx[t]] += wt[t];
    }
    stencil(0.0, g, idx, wt);
    double s = 0.0;
    for (std::size_t t = 0; t < taps_; ++t) s += wt[t] * acc[idx[t]];
    cartesian_density_ *= s;
  }
}

double NufftPlan::kernel(double u) const {
  const double r = 2.0 * u / width_;
  if (std::abs(r) >= 1.0) return 0.0;
  static thread_local double cached_beta = -1.0, cached_norm = 1.0;
  if (cached_beta != beta_) {
    cached_beta = beta_;
    cached_norm = 1.0 / std::cyl_bessel_i(0.0, beta_);
  }
  return std::cyl_bessel_i(0.0, beta_ * std::sqrt(1.0 - r * r)) * cached_norm;
}

void NufftPlan::stencil(double k, std::size_t g, std::span<std::uint32_t> idx,
                        std::span<double> wt) const {
  const double kappa = wrap_frequency(k) * double(g) / kTwoPi;
  const auto j0 = static_cast<long>(std::floor(kappa - 0.5 * width_)) + 1;
  const auto gl = static_cast<long>(g);
  for (std::size_t t = 0; t < taps_; ++t) {
    const long j = j0 + static_cast<long>(t);
    wt[t] = kernel(kappa - double(j));
    idx[t] = static_cast<std::uint32_t>(((j % gl) + gl) % gl);
  }
}

GriddingTable NufftPlan::prepare(const FreqCoords& coords) const {
  if (coords.dim != dim())
    throw ShapeError("nufft: coordinates are " + std::to_string(coords.dim) + "-D, grid is " +
                     std::to_string(dim()) + "-D");
  GriddingTable t;
  t.points = coords.size();
  t.taps = taps_;
  t.dim = dim();
  for (std::size_t a = 0; a < dim(); ++a) {
    t.index[a].resize(t.points * taps_);
    t.weight[a].resize(t.points * taps_);
    for (std::size_t p = 0; p < t.points; ++p) {
      const double k = coords(p, a);
      if (!std::isfinite(k)) throw NumericError("nufft: non-finite coordinate");
      stencil(k, oversampled_[a], std::span(t.index[a]).subspan(p * taps_, taps_),
              std::span(t.weight[a]).subspan(p * taps_, taps_));
    }
  }
  return t;
}

void NufftPlan::check_image(const ComplexVolume& image) const {
  if (image.shape() != grid_)
    throw ShapeError("nufft: image shape " + shape_string(image.shape()) + " differs from plan grid " +
                     shape_string(grid_));
}

std::vector<cplx> NufftPlan::to_oversampled_spectrum(const ComplexVolume& image) const {
  const std::size_t d = dim();
  std::array<std::size_t, 3> n{1, 1, 1}, g{1, 1, 1};
  for (std::size_t a = 0; a < d; ++a) {
    n[a] = grid_[a];
    g[a] = oversampled_[a];
  }
  std::array<std::vector<double>, 3> dp;
  for (std::size_t a = 0; a < 3; ++a) dp[a] = a < d ? deapod_[a] : std::vector<double>{1.0};

  std::vector<cplx> buf(g[0] * g[1] * g[2], cplx{});
  for (std::size_t i0 = 0; i0 < n[0]; ++i0) {
    const std::size_t p0 = (i0 + g[0] - n[0] / 2) % g[0];
    for (std::size_t i1 = 0; i1 < n[1]; ++i1) {
      const std::size_t p1 = (i1 + g[1] - n[1] / 2) % g[1];
      const double s01 = dp[0][i0] * dp[1][i1];
      for (std::size_t i2 = 0; i2 < n[2]; ++i2) {
        const std::size_t p2 = (i2 + g[2] - n[2] / 2) % g[2];
        buf[(p0 * g[1] + p1) * g[2] + p2] = image[(i0 * n[1] + i1) * n[2] + i2] * (s01 * dp[2][i2]);
      }
    }
  }
  fft_inplace(buf, oversampled_, FftDirection::Forward);
  return buf;
}

template <typename T>
void NufftPlan::gather(const std::vector<T>& grid, const GriddingTable& t, std::span<T> out) const {
  const std::size_t K = t.taps;
  const std::size_t d = t.dim;
  const std::size_t g1 = d > 1 ? oversampled_[1] : 1;
  const std::size_t g2 = d > 2 ? oversampled_[2] : 1;
  for (std::size_t p = 0; p < t.points; ++p) {
    T acc{};
    const std::uint32_t* ix0 = t.index[0].data() + p * K;
    const double* w0 = t.weight[0].data() + p * K;
    if (d == 1) {
      for (std::size_t a = 0; a < K; ++a) acc += grid[ix0[a]] * w0[a];
    } else if (d == 2) {
      const std::uint32_t* ix1 = t.index[1].data() + p * K;
      const double* w1 = t.weight[1].data() + p * K;
      for (std::size_t a = 0; a < K; ++a) {
        if (w0[a] == 0.0) continue;
        T row{};
        const std::size_t base = std::size_t(ix0[a]) * g1;
        for (std::size_t b = 0; b < K; ++b) row += grid[base + ix1[b]] * w1[b];
        acc += row * w0[a];
      }
    } else {
      const std::uint32_t* ix1 = t.index[1].data() + p * K;
      const double* w1 = t.weight[1].data() + p * K;
      const std::uint32_t* ix2 = t.index[2].data() + p * K;
      const double* w2 = t.weight[2].data() + p * K;
      for (std::size_t a = 0; a < K; ++a) {
        if (w0[a] == 0.0) continue;
        T plane{};
        for (std::size_t b = 0; b < K; ++b) {
          if (w1[b] == 0.0) continue;
          T row{};
          const std::size_t base = (std::size_t(ix0[a]) * g1 + ix1[b]) * g2;
          for (std::size_t c = 0; c < K; ++c) row += grid[base + ix2[c]] * w2[c];
          plane += row * w1[b];
        }
        acc += plane * w0[a];
      }
    }
    out[p] = acc;
  }
}

template <typename T>
void NufftPlan::spread(std::span<const T> values, const GriddingTable& t, std::vector<T>& grid) const {
  const std::size_t K = t.taps;
  const std::size_t d = t.dim;
  const std::size_t g1 = d > 1 ? oversampled_[1] : 1;
  const std::size_t g2 = d > 2 ? oversampled_[2] : 1;
  for (std::size_t p = 0; p < t.points; ++p) {
    const T v = values[p];
    const std::uint32_t* ix0 = t.index[0].data() + p * K;
    const double* w0 = t.weight[0].data() + p * K;
    if (d == 1) {
      for (std::size_t a = 0; a < K; ++a) grid[ix0[a]] += v * w0[a];
    } else if (d == 2) {
      const std::uint32_t* ix1 = t.index[1].data() + p * K;
      const double* w1 = t.weight[1].data() + p * K;
      for (std::size_t a = 0; a < K; ++a) {
        if (w0[a] == 0.0) continue;
        const T va = v * w0[a];
        const std::size_t base = std::size_t(ix0[a]) * g1;
        for (std::size_t b = 0; b < K; ++b) grid[base + ix1[b]] += va * w1[b];
      }
    } else {
      const std::uint32_t* ix1 = t.index[1].data() + p * K;
      const double* w1 = t.weight[1].data() + p * K;
      const std::uint32_t* ix2 = t.index[2].data() + p * K;
      const double* w2 = t.weight[2].data() + p * K;
      for (std::size_t a = 0; a < K; ++a) {
        if (w0[a] == 0.0) continue;
        const T va = v * w0[a];
        for (std::size_t b = 0; b < K; ++b) {
          if (w1[b] == 0.0) continue;
          const T vb = va * w1[b];
          const std::size_t base = (std::size_t(ix0[a]) * g1 + ix1[b]) * g2;
          for (std::size_t c = 0; c < K; ++c) grid[base + ix2[c]] += vb * w2[c];
        }
      }
    }
  }
}

void NufftPlan::interpolate(const std::vector<cplx>& grid, const GriddingTable& table,
                            std::span<cplx> out) const {
  gather<cplx>(grid, table, out);
  for (auto& v : out) v *= scale_;
}

std::vector<cplx> NufftPlan::forward(const ComplexVolume& image, const GriddingTable& table) const {
  check_image(image);
  if (table.dim != dim()) throw ShapeError("nufft: table dimension mismatch");
  const auto spectrum = to_oversampled_spectrum(image);
  std::vector<cplx> out(table.points);
  interpolate(spectrum, table, out);
  return out;
}

std::vector<cplx> NufftPlan::forward(const ComplexVolume& image, const FreqCoords& coords) const {
  return forward(image, prepare(coords));
}

ComplexVolume NufftPlan::adjoint(std::span<const cplx> samples, const GriddingTable& table,
                                 std::span<const double> weights) const {
  if (samples.size() != table.points)
    throw ShapeError("nufft adjoint: " + std::to_string(samples.size()) + " samples for " +
                     std::to_string(table.points) + " coordinates");
  if (!weights.empty() && weights.size() != samples.size())
    throw ShapeError("nufft adjoint: weight count mismatch");
  std::vector<cplx> vals(samples.begin(), samples.end());
  if (!weights.empty())
    for (std::size_t p = 0; p < vals.size(); ++p) vals[p] *= weights[p];

  std::vector<cplx> buf(shape_size(oversampled_), cplx{});
  spread<cplx>(vals, table, buf);
  fft_inplace(buf, oversampled_, FftDirection::Inverse);

  const std::size_t d = dim();
  std::array<std::size_t, 3> n{1, 1, 1}, g{1, 1, 1};
  for (std::size_t a = 0; a < d; ++a) {
    n[a] = grid_[a];
    g[a] = oversampled_[a];
  }
  std::array<std::vector<double>, 3> dp;
  for (std::size_t a = 0; a < 3; ++a) dp[a] = a < d ? deapod_[a] : std::vector<double>{1.0};

  ComplexVolume out(grid_);
  for (std::size_t i0 = 0; i0 < n[0]; ++i0) {
    const std::size_t p0 = (i0 + g[0] - n[0] / 2) % g[0];
    for (std::size_t i1 = 0; i1 < n[1]; ++i1) {
      const std::size_t p1 = (i1 + g[1] - n[1] / 2) % g[1];
      const double s01 = dp[0][i0] * dp[1][i1] * scale_;
      for (std::size_t i2 = 0; i2 < n[2]; ++i2) {
        const std::size_t p2 = (i2 + g[2] - n[2] / 2) % g[2];
        out[(i0 * n[1] + i1) * n[2] + i2] = buf[(p0 * g[1] + p1) * g[2] + p2] * (s01 * dp[2][i2]);
      }
    }
  }
  return out;
}

ComplexVolume NufftPlan::adjoint(std::span<const cplx> samples, const FreqCoords& coords,
                                 std::span<const double> weights) const {
  return adjoint(samples, prepare(coords), weights);
}

std::vector<double> NufftPlan::pipe_weights(const GriddingTable& table, int iterations) const {
  if (table.points == 0) throw Error("pipe_weights: no coordinates");
  std::vector<double> w(table.points, 1.0);
  std::vector<double> grid(shape_size(oversampled_));
  std::vector<double> density(table.points);
  for (int it = 0; it < iterations; ++it) {
    std::fill(grid.begin(), grid.end(), 0.0);
    spread<double>(w, table, grid);
    gather<double>(grid, table, density);
    for (std::size_t p = 0; p < w.size(); ++p) {
      if (!(density[p] > 0.0)) throw NumericError("pipe_weights: non-positive density");
      w[p] /= density[p];
    }
  }
  for (auto& v : w) v *= cartesian_density_;
  return w;
}

std::vector<double> NufftPlan::pipe_weights(const FreqCoords& coords, int iterations) const {
  return pipe_weights(prepare(coords), iterations);
}

ComplexVolume NufftPlan::moment(const ComplexVolume& image, std::size_t axis) const {
  check_image(image);
  if (axis >= dim()) throw ShapeError("nufft moment: invalid axis");
  ComplexVolume out(grid_);
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < dim(); ++a) inner *= grid_[a];
  const std::size_t n = grid_[axis];
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double x = double((i / inner) % n) - double(n / 2);
    out[i] = image[i] * cplx(0.0, -x);
  }
  return out;
}

std::vector<double> NufftPlan::coord_grad(const ComplexVolume& image, const GriddingTable& table,
                                          std::span<const cplx> cotangent) const {
  if (cotangent.size() != table.points) throw ShapeError("coord_grad: cotangent length mismatch");
  const std::size_t d = dim();
  std::vector<double> grad(table.points * d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    const auto deriv = forward(moment(image, a), table);
    for (std::size_t p = 0; p < table.points; ++p)
      grad[p * d + a] = (std::conj(cotangent[p]) * deriv[p]).real();
  }
  return grad;
}

std::vector<double> NufftPlan::coord_grad(const ComplexVolume& image, const FreqCoords& coords,
                                          std::span<const cplx> cotangent) const {
  return coord_grad(image, prepare(coords), cotangent);
}

}  // namespace mttt
