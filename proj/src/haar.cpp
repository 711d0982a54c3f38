#include <cmath>
#include <numbers>

#include "mttt/reconstructor.hpp"

namespace mttt {

namespace {

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t a = shape.size(); a-- > 1;) s[a - 1] = s[a] * shape[a];
  return s;
}

// Visits every multi-index in [0, extent) over all axes except `skip`,
// passing the flat offset.
template <typename F>
void for_each_offset(const Shape& extent, const std::vector<std::size_t>& stride, std::size_t skip, F&& f) {
  std::size_t count = 1;
  for (std::size_t a = 0; a < extent.size(); ++a)
    if (a != skip) count *= extent[a];
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t rem = k, off = 0;
    for (std::size_t a = extent.size(); a-- > 0;) {
      if (a == skip) continue;
      off += (rem % extent[a]) * stride[a];
      rem /= extent[a];
    }
    f(off);
  }
}

void haar_axis(std::vector<cplx>& data, const Shape& shape, const Shape& block, std::size_t axis, bool inverse) {
  const auto stride = strides_of(shape);
  const std::size_t len = block[axis];
  const std::size_t half = len / 2;
  const double r = 1.0 / std::numbers::sqrt2;
  std::vector<cplx> line(len), out(len);
  for_each_offset(block, stride, axis, [&](std::size_t off) {
    for (std::size_t i = 0; i < len; ++i) line[i] = data[off + i * stride[axis]];
    if (!inverse) {
      for (std::size_t i = 0; i < half; ++i) {
        out[i] = (line[2 * i] + line[2 * i + 1]) * r;
        out[half + i] = (line[2 * i] - line[2 * i + 1]) * r;
      }
    } else {
      for (std::size_t i = 0; i < half; ++i) {
        out[2 * i] = (line[i] + line[half + i]) * r;
        out[2 * i + 1] = (line[i] - line[half + i]) * r;
      }
    }
    for (std::size_t i = 0; i < len; ++i) data[off + i * stride[axis]] = out[i];
  });
}

void check_dyadic(const Shape& shape, int levels) {
  if (levels < 0) throw Error("haar: levels must be non-negative");
  const std::size_t f = std::size_t(1) << levels;
  for (auto e : shape)
    if (e > 1 && e % f != 0)
      throw ShapeError("haar: shape " + shape_string(shape) + " not divisible by 2^" + std::to_string(levels));
}

}  // namespace

Shape haar_padded_shape(const Shape& shape, int levels) {
  const std::size_t f = std::size_t(1) << levels;
  Shape out = shape;
  for (auto& e : out)
    if (e > 1) e = (e + f - 1) / f * f;
  return out;
}

ComplexVolume haar_forward(const ComplexVolume& x, int levels) {
  check_dyadic(x.shape(), levels);
  ComplexVolume c = x;
  Shape block = x.shape();
  for (int l = 0; l < levels; ++l) {
    for (std::size_t a = 0; a < block.size(); ++a)
      if (x.shape()[a] > 1) haar_axis(c.values(), x.shape(), block, a, false);
    for (std::size_t a = 0; a < block.size(); ++a)
      if (x.shape()[a] > 1) block[a] /= 2;
  }
  return c;
}

ComplexVolume haar_inverse(const ComplexVolume& c, int levels) {
  check_dyadic(c.shape(), levels);
  ComplexVolume x = c;
  for (int l = levels; l-- > 0;) {
    Shape block = c.shape();
    for (std::size_t a = 0; a < block.size(); ++a)
      if (block[a] > 1) block[a] >>= l;
    for (std::size_t a = block.size(); a-- > 0;)
      if (c.shape()[a] > 1) haar_axis(x.values(), c.shape(), block, a, true);
  }
  return x;
}

std::vector<std::uint8_t> haar_detail_mask(const Shape& shape, int levels) {
  check_dyadic(shape, levels);
  const auto stride = strides_of(shape);
  std::vector<std::uint8_t> mask(shape_size(shape), 1);
  Shape coarse = shape;
  for (auto& e : coarse)
    if (e > 1) e >>= levels;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    bool in_coarse = true;
    for (std::size_t a = 0; a < shape.size(); ++a)
      if ((i / stride[a]) % shape[a] >= coarse[a]) in_coarse = false;
    if (in_coarse) mask[i] = 0;
  }
  return mask;
}

ComplexVolume pad_edge(const ComplexVolume& x, const Shape& padded) {
  if (padded.size() != x.rank()) throw ShapeError("pad_edge: rank mismatch");
  for (std::size_t a = 0; a < padded.size(); ++a)
    if (padded[a] < x.extent(a)) throw ShapeError("pad_edge: target smaller than input");
  if (padded == x.shape()) return x;
  const auto src_stride = strides_of(x.shape());
  const auto dst_stride = strides_of(padded);
  ComplexVolume out(padded);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < padded.size(); ++a) {
      const std::size_t idx = std::min((i / dst_stride[a]) % padded[a], x.extent(a) - 1);
      src += idx * src_stride[a];
    }
    out[i] = x[src];
  }
  return out;
}

ComplexVolume pad_edge_adjoint(const ComplexVolume& padded, const Shape& original) {
  if (padded.shape() == original) return padded;
  const auto src_stride = strides_of(original);
  const auto dst_stride = strides_of(padded.shape());
  ComplexVolume out(original);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < original.size(); ++a) {
      const std::size_t idx = std::min((i / dst_stride[a]) % padded.extent(a), original[a] - 1);
      src += idx * src_stride[a];
    }
    out[src] += padded[i];
  }
  return out;
}

cplx soft_threshold(cplx z, double tau) {
  const double mag = std::abs(z);
  if (mag <= tau) return {0.0, 0.0};
  return z * (1.0 - tau / mag);
}

HaarDenoiser::HaarDenoiser(double tau, int levels, Mode mode, std::size_t slice_axis)
    : tau_(tau), levels_(levels), mode_(mode), slice_axis_(slice_axis) {
  if (!(tau >= 0.0)) throw Error("wavelet denoiser: threshold must be non-negative");
  if (levels < 0) throw Error("wavelet denoiser: levels must be non-negative");
  if (slice_axis > 2) throw Error("wavelet denoiser: slice axis must be 0, 1 or 2");
}

ComplexVolume HaarDenoiser::apply_native(const ComplexVolume& x) const {
  const Shape padded = haar_padded_shape(x.shape(), levels_);
  auto c = haar_forward(pad_edge(x, padded), levels_);
  const auto mask = haar_detail_mask(padded, levels_);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (mask[i]) c[i] = soft_threshold(c[i], tau_);
  const auto y = haar_inverse(c, levels_);
  if (padded == x.shape()) return y;
  ComplexVolume out(x.shape());
  const auto src_stride = strides_of(padded);
  const auto dst_stride = strides_of(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < padded.size(); ++a) src += ((i / dst_stride[a]) % x.extent(a)) * src_stride[a];
    out[i] = y[src];
  }
  return out;
}

ComplexVolume HaarDenoiser::vjp_native(const ComplexVolume& x, const ComplexVolume& g) const {
  const Shape padded = haar_padded_shape(x.shape(), levels_);
  const auto c = haar_forward(pad_edge(x, padded), levels_);
  // Crop transpose: zero-extend g onto the padded grid.
  ComplexVolume gp(padded);
  {
    const auto big = strides_of(padded);
    const auto small = strides_of(x.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::size_t dst = 0;
      for (std::size_t a = 0; a < padded.size(); ++a) dst += ((i / small[a]) % x.extent(a)) * big[a];
      gp[dst] = g[i];
    }
  }
  // The inverse transform is orthonormal, so its transpose is the forward one.
  auto gc = haar_forward(gp, levels_);
  const auto mask = haar_detail_mask(padded, levels_);
  for (std::size_t i = 0; i < gc.size(); ++i) {
    if (!mask[i]) continue;
    const double mag = std::abs(c[i]);
    if (mag <= tau_) {
      gc[i] = 0.0;
      continue;
    }
    const cplx u = c[i] / mag;
    const double proj = (std::conj(u) * gc[i]).real();
    gc[i] = gc[i] * (1.0 - tau_ / mag) + u * (tau_ * proj / mag);
  }
  return pad_edge_adjoint(haar_inverse(gc, levels_), x.shape());
}

ComplexVolume HaarDenoiser::apply(const ComplexVolume& x) const {
  if (mode_ == Mode::Native || x.rank() != 3) return apply_native(x);
  ComplexVolume out(x.shape());
  for (std::size_t s = 0; s < x.extent(slice_axis_); ++s)
    insert_slice(out, slice_axis_, s, apply_native(extract_slice(x, slice_axis_, s)));
  return out;
}

ComplexVolume HaarDenoiser::vjp(const ComplexVolume& x, const ComplexVolume& cotangent) const {
  require_same_shape(x, cotangent, "wavelet vjp");
  if (mode_ == Mode::Native || x.rank() != 3) return vjp_native(x, cotangent);
  ComplexVolume out(x.shape());
  for (std::size_t s = 0; s < x.extent(slice_axis_); ++s)
    insert_slice(out, slice_axis_, s,
                 vjp_native(extract_slice(x, slice_axis_, s), extract_slice(cotangent, slice_axis_, s)));
  return out;
}

ComplexVolume extract_slice(const ComplexVolume& v, std::size_t axis, std::size_t index) {
  if (v.rank() != 3 || axis > 2 || index >= v.extent(axis)) throw ShapeError("extract_slice: invalid slice");
  Shape shape;
  for (std::size_t a = 0; a < 3; ++a)
    if (a != axis) shape.push_back(v.extent(a));
  ComplexVolume out(shape);
  const auto stride = strides_of(v.shape());
  std::size_t k = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if ((i / stride[axis]) % v.extent(axis) == index) out[k++] = v[i];
  return out;
}

void insert_slice(ComplexVolume& v, std::size_t axis, std::size_t index, const ComplexVolume& slice) {
  if (v.rank() != 3 || axis > 2 || index >= v.extent(axis)) throw ShapeError("insert_slice: invalid slice");
  if (slice.size() * v.extent(axis) != v.size()) throw ShapeError("insert_slice: slice size mismatch");
  const auto stride = strides_of(v.shape());
  std::size_t k = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if ((i / stride[axis]) % v.extent(axis) == index) v[i] = slice[k++];
}

}  // namespace mttt
