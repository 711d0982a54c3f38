#include "mttt/reconstructor.hpp"

#include <cmath>

namespace mttt {

void Reconstructor::check_input(const ComplexVolume& x) const {
  const Shape expect = expected_shape();
  if (!expect.empty() && x.shape() != expect)
    throw ShapeError(name() + " reconstructor expects " + shape_string(expect) + ", got " +
                     shape_string(x.shape()));
}

ComplexVolume Reconstructor::vjp(const ComplexVolume&, const ComplexVolume&) const {
  throw Error(name() + " reconstructor is not differentiable");
}

ComplexVolume IdentityReconstructor::vjp(const ComplexVolume& x, const ComplexVolume& cotangent) const {
  require_same_shape(x, cotangent, "identity vjp");
  return cotangent;
}

SubspaceProjector::SubspaceProjector(SubspaceBasis basis, Shape shape, double sampled)
    : basis_(std::move(basis)), shape_(std::move(shape)) {
  validate_shape(shape_);
  if (basis_.n != shape_size(shape_))
    throw ShapeError("subspace projector: basis has " + std::to_string(basis_.n) + " rows for shape " +
                     shape_string(shape_));
  if (basis_.d == 0 || basis_.d > basis_.n) throw ShapeError("subspace projector: need 0 < d <= n");
  if (!(sampled > 0.0)) throw Error("subspace projector: sampled count must be positive");
  scale_ = double(basis_.n) / sampled;
}

ComplexVolume SubspaceProjector::apply(const ComplexVolume& x) const {
  check_input(x);
  const std::size_t n = basis_.n;
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = x[i].real();
    im[i] = x[i].imag();
  }
  const auto cr = basis_.project(re);
  const auto ci = basis_.project(im);
  const auto xr = basis_.synthesize(cr);
  const auto xi = basis_.synthesize(ci);
  ComplexVolume out(shape_);
  for (std::size_t i = 0; i < n; ++i) out[i] = scale_ * cplx(xr[i], xi[i]);
  return out;
}

ComplexVolume SubspaceProjector::vjp(const ComplexVolume& x, const ComplexVolume& cotangent) const {
  require_same_shape(x, cotangent, "subspace vjp");
  return apply(cotangent);
}

}  // namespace mttt
