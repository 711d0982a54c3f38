#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mttt {

using cplx = std::complex<double>;
using Shape = std::vector<std::size_t>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes or sizes between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered, divergence, or a degenerate numeric input.
class NumericError : public Error {
 public:
  using Error::Error;
};

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Throws ShapeError unless `shape` has 1 to 4 positive extents.
void validate_shape(const Shape& shape);

/// Dense row-major complex array with 1 to 4 axes.
///
/// Images are stored as r_x × r_y (× r_z); coil-wise k-space samples as
/// C × lines × readout. The buffer length always equals the product of the
/// extents.
class ComplexVolume {
 public:
  ComplexVolume() = default;
  explicit ComplexVolume(Shape shape);
  ComplexVolume(Shape shape, std::vector<cplx> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<cplx> data() { return data_; }
  std::span<const cplx> data() const { return data_; }
  std::vector<cplx>& values() { return data_; }
  const std::vector<cplx>& values() const { return data_; }

  cplx& operator[](std::size_t i) { return data_[i]; }
  const cplx& operator[](std::size_t i) const { return data_[i]; }

  /// True when every sample is finite.
  bool all_finite() const;

  void fill(cplx value);

  ComplexVolume& operator+=(const ComplexVolume& other);
  ComplexVolume& operator-=(const ComplexVolume& other);
  ComplexVolume& operator*=(cplx scale);

  friend bool operator==(const ComplexVolume&, const ComplexVolume&) = default;

 private:
  Shape shape_;
  std::vector<cplx> data_;
};

ComplexVolume operator+(ComplexVolume a, const ComplexVolume& b);
ComplexVolume operator-(ComplexVolume a, const ComplexVolume& b);
ComplexVolume operator*(ComplexVolume a, cplx scale);

void require_same_shape(const ComplexVolume& a, const ComplexVolume& b, const char* what);

// Vector helpers over flat sample buffers.
double norm2(std::span<const cplx> v);
double norm1(std::span<const cplx> v);
double sum_abs2(std::span<const cplx> v);
/// Hermitian inner product sum(conj(a) * b).
cplx inner(std::span<const cplx> a, std::span<const cplx> b);

inline double norm2(const ComplexVolume& v) { return norm2(v.data()); }
inline double norm1(const ComplexVolume& v) { return norm1(v.data()); }
inline cplx inner(const ComplexVolume& a, const ComplexVolume& b) {
  return inner(a.data(), b.data());
}

/// ‖a − b‖₂ / ‖b‖₂.
double relative_error(const ComplexVolume& a, const ComplexVolume& b);

}  // namespace mttt
