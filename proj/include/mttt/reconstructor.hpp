#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "mttt/complex_volume.hpp"
#include "mttt/phantom.hpp"

namespace mttt {

/// Frozen image-to-image map standing in for a trained network.
///
/// apply() is deterministic and shape preserving. Differentiable
/// reconstructors also provide vjp(): the transpose of the real Jacobian at
/// x applied to a cotangent, so that Re⟨g, J·dx⟩ = Re⟨vjp(x, g), dx⟩.
class Reconstructor {
 public:
  virtual ~Reconstructor() = default;

  virtual std::string name() const = 0;
  /// Empty when any shape is accepted.
  virtual Shape expected_shape() const { return {}; }
  virtual ComplexVolume apply(const ComplexVolume& x) const = 0;
  virtual bool differentiable() const { return false; }
  virtual ComplexVolume vjp(const ComplexVolume& x, const ComplexVolume& cotangent) const;

 protected:
  void check_input(const ComplexVolume& x) const;
};

class IdentityReconstructor : public Reconstructor {
 public:
  std::string name() const override { return "identity"; }
  ComplexVolume apply(const ComplexVolume& x) const override { return x; }
  bool differentiable() const override { return true; }
  ComplexVolume vjp(const ComplexVolume& x, const ComplexVolume& cotangent) const override;
};

/// f(x) = (n / (b·k)) · U Uᵀ x, applied to real and imaginary parts
/// separately. `sampled` is b·k, the number of measured locations.
class SubspaceProjector : public Reconstructor {
 public:
  SubspaceProjector(SubspaceBasis basis, Shape shape, double sampled);

  std::string name() const override { return "subspace"; }
  Shape expected_shape() const override { return shape_; }
  ComplexVolume apply(const ComplexVolume& x) const override;
  bool differentiable() const override { return true; }
  ComplexVolume vjp(const ComplexVolume& x, const ComplexVolume& cotangent) const override;

  double scale() const { return scale_; }
  const SubspaceBasis& basis() const { return basis_; }

 private:
  SubspaceBasis basis_;
  Shape shape_;
  double scale_;
};

// Orthonormal multi-level Haar transform over every axis of extent > 1.
// Extents must be divisible by 2^levels; see haar_padded_shape.

Shape haar_padded_shape(const Shape& shape, int levels);
ComplexVolume haar_forward(const ComplexVolume& x, int levels);
ComplexVolume haar_inverse(const ComplexVolume& c, int levels);
/// 1 at detail coefficients, 0 in the coarse approximation block.
std::vector<std::uint8_t> haar_detail_mask(const Shape& shape, int levels);

/// Edge-replication padding to `padded` (each extent ≥ the original).
ComplexVolume pad_edge(const ComplexVolume& x, const Shape& padded);
/// Transpose of pad_edge: replicated entries are summed back onto the edge.
ComplexVolume pad_edge_adjoint(const ComplexVolume& padded, const Shape& original);

/// z · max(0, 1 − τ/|z|).
cplx soft_threshold(cplx z, double tau);

/// Haar soft-threshold denoiser. Detail coefficients are shrunk by τ; the
/// coarse block is kept. Non-dyadic shapes are edge-padded internally.
class HaarDenoiser : public Reconstructor {
 public:
  enum class Mode { Native, SliceWise };

  HaarDenoiser(double tau, int levels, Mode mode = Mode::Native, std::size_t slice_axis = 2);

  std::string name() const override { return "wavelet"; }
  ComplexVolume apply(const ComplexVolume& x) const override;
  bool differentiable() const override { return true; }
  ComplexVolume vjp(const ComplexVolume& x, const ComplexVolume& cotangent) const override;

 private:
  ComplexVolume apply_native(const ComplexVolume& x) const;
  ComplexVolume vjp_native(const ComplexVolume& x, const ComplexVolume& g) const;

  double tau_;
  int levels_;
  Mode mode_;
  std::size_t slice_axis_;
};

/// Extracts slice `index` along `axis` of a 3D volume as a 2D volume.
ComplexVolume extract_slice(const ComplexVolume& v, std::size_t axis, std::size_t index);
void insert_slice(ComplexVolume& v, std::size_t axis, std::size_t index, const ComplexVolume& slice);

/// Failure of the external reconstructor bridge.
class ExternalError : public Error {
 public:
  enum class Kind { Startup, ChildExited, Truncated, Malformed, ShapeMismatch, Timeout };
  ExternalError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Child process speaking the framed MTTT-ARRAY protocol on stdin/stdout.
///
/// Handshake: parent writes {"proto":1,"shape":[...]} and a newline, child
/// answers a JSON line with "ok": true. Each apply() then sends one frame
/// (u32 little-endian length + MTTT-ARRAY bytes) and reads one frame back.
/// Single in-flight request; not differentiable.
class ExternalReconstructor : public Reconstructor {
 public:
  ExternalReconstructor(std::vector<std::string> command, Shape shape,
                        std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~ExternalReconstructor() override;
  ExternalReconstructor(const ExternalReconstructor&) = delete;
  ExternalReconstructor& operator=(const ExternalReconstructor&) = delete;

  std::string name() const override { return "external"; }
  Shape expected_shape() const override { return shape_; }
  ComplexVolume apply(const ComplexVolume& x) const override;

  /// True once the child has been reaped.
  bool reaped() const { return pid_ < 0; }

 private:
  void write_all(const std::uint8_t* data, std::size_t n) const;
  void read_exact(std::uint8_t* data, std::size_t n, bool mid_frame) const;
  [[noreturn]] void fail(ExternalError::Kind kind, const std::string& message) const;
  void shutdown() const;

  std::vector<std::string> command_;
  Shape shape_;
  std::chrono::milliseconds timeout_;
  mutable int fd_ = -1;
  mutable int pid_ = -1;
};

}  // namespace mttt
