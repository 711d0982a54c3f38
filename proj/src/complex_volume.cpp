#include "mttt/complex_volume.hpp"

#include <cmath>
#include <sstream>

namespace mttt {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4)
    throw ShapeError("shape must have 1 to 4 extents, got " + shape_string(shape));
  for (auto e : shape)
    if (e == 0) throw ShapeError("shape extents must be positive, got " + shape_string(shape));
}

ComplexVolume::ComplexVolume(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_size(shape_), cplx{});
}

ComplexVolume::ComplexVolume(Shape shape, std::vector<cplx> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_size(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
}

bool ComplexVolume::all_finite() const {
  for (const auto& v : data_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

void ComplexVolume::fill(cplx value) { std::fill(data_.begin(), data_.end(), value); }

ComplexVolume& ComplexVolume::operator+=(const ComplexVolume& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

ComplexVolume& ComplexVolume::operator-=(const ComplexVolume& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

ComplexVolume& ComplexVolume::operator*=(cplx scale) {
  for (auto& v : data_) v *= scale;
  return *this;
}

ComplexVolume operator+(ComplexVolume a, const ComplexVolume& b) { return a += b; }
ComplexVolume operator-(ComplexVolume a, const ComplexVolume& b) { return a -= b; }
ComplexVolume operator*(ComplexVolume a, cplx scale) { return a *= scale; }

void require_same_shape(const ComplexVolume& a, const ComplexVolume& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

double sum_abs2(std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return s;
}

double norm2(std::span<const cplx> v) { return std::sqrt(sum_abs2(v)); }

double norm1(std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& z : v) s += std::abs(z);
  return s;
}

cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  if (a.size() != b.size()) throw ShapeError("inner: length mismatch");
  cplx s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

double relative_error(const ComplexVolume& a, const ComplexVolume& b) {
  require_same_shape(a, b, "relative_error");
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) num += std::norm(a[i] - b[i]);
  const double den = sum_abs2(b.data());
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace mttt
