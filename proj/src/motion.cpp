#include "mttt/motion.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "mttt/csv.hpp"

namespace mttt {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::array<double, 9> matmul(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = s;
    }
  return c;
}

std::array<double, 9> rot_x(double a, bool deriv) {
  const double c = std::cos(a), s = std::sin(a);
  if (deriv) return {0, 0, 0, 0, -s, -c, 0, c, -s};
  return {1, 0, 0, 0, c, -s, 0, s, c};
}

std::array<double, 9> rot_y(double a, bool deriv) {
  const double c = std::cos(a), s = std::sin(a);
  if (deriv) return {-s, 0, c, 0, 0, 0, -c, 0, -s};
  return {c, 0, s, 0, 1, 0, -s, 0, c};
}

std::array<double, 9> rot_z(double a, bool deriv) {
  const double c = std::cos(a), s = std::sin(a);
  if (deriv) return {-s, -c, 0, c, -s, 0, 0, 0, 0};
  return {c, -s, 0, s, c, 0, 0, 0, 1};
}

}  // namespace

std::size_t params_per_state(std::size_t dim) {
  if (dim == 2) return 3;
  if (dim == 3) return 6;
  throw ShapeError("motion: dimension must be 2 or 3");
}

bool is_rotation_param(std::size_t dim, std::size_t q) { return q >= dim; }

std::vector<std::string> param_names(std::size_t dim) {
  if (dim == 2) return {"t1", "t2", "phi"};
  return {"t1", "t2", "t3", "phi1", "phi2", "phi3"};
}

MotionTrajectory::MotionTrajectory(std::size_t d, std::size_t num_states) : dim(d), states(num_states) {
  (void)mttt::params_per_state(d);
}

double& MotionTrajectory::param(std::size_t state, std::size_t q) {
  auto& s = states.at(state);
  return q < dim ? s.t[q] : s.phi[q - dim];
}

double MotionTrajectory::param(std::size_t state, std::size_t q) const {
  const auto& s = states.at(state);
  return q < dim ? s.t[q] : s.phi[q - dim];
}

std::vector<double> MotionTrajectory::params() const {
  const std::size_t P = params_per_state();
  std::vector<double> p(states.size() * P);
  for (std::size_t i = 0; i < states.size(); ++i)
    for (std::size_t q = 0; q < P; ++q) p[i * P + q] = param(i, q);
  return p;
}

void MotionTrajectory::set_params(std::span<const double> p) {
  const std::size_t P = params_per_state();
  if (p.size() != states.size() * P) throw ShapeError("motion: parameter vector length mismatch");
  for (std::size_t i = 0; i < states.size(); ++i)
    for (std::size_t q = 0; q < P; ++q) param(i, q) = p[i * P + q];
}

void MotionTrajectory::normalize_angles() {
  for (auto& s : states)
    for (auto& a : s.phi) {
      a = std::remainder(a, 360.0);
      if (a <= -180.0) a += 360.0;
    }
}

std::string MotionTrajectory::to_csv() const {
  std::vector<std::string> header{"state"};
  for (auto& n : param_names(dim)) header.push_back(n);
  CsvWriter w(header);
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::vector<CsvWriter::Cell> row{static_cast<long long>(i)};
    for (std::size_t q = 0; q < params_per_state(); ++q) row.emplace_back(param(i, q));
    w.add_row(row);
  }
  return w.str();
}

void MotionTrajectory::save_csv(const std::filesystem::path& path) const {
  std::vector<std::string> header{"state"};
  for (auto& n : param_names(dim)) header.push_back(n);
  CsvWriter w(header);
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::vector<CsvWriter::Cell> row{static_cast<long long>(i)};
    for (std::size_t q = 0; q < params_per_state(); ++q) row.emplace_back(param(i, q));
    w.add_row(row);
  }
  w.save(path);
}

namespace {

MotionTrajectory from_table(const CsvTable& t) {
  std::size_t dim = 0;
  if (t.header.size() == 4) dim = 2;
  else if (t.header.size() == 7) dim = 3;
  else throw Error("motion csv: expected 4 or 7 columns");
  const auto names = param_names(dim);
  MotionTrajectory m(dim, t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (std::stoull(t.rows[i].at(t.column("state"))) != i) throw Error("motion csv: states out of order");
    for (std::size_t q = 0; q < names.size(); ++q) m.param(i, q) = std::stod(t.rows[i].at(t.column(names[q])));
  }
  return m;
}

}  // namespace

MotionTrajectory MotionTrajectory::load_csv(const std::filesystem::path& path) {
  return from_table(read_csv(path));
}

MotionTrajectory MotionTrajectory::from_csv(const std::string& text) { return from_table(parse_csv(text)); }

std::array<double, 9> rotation_matrix(std::size_t dim, const MotionState& s) {
  if (dim == 2) return rot_z(s.phi[0] * kDeg, false);
  return matmul(rot_z(s.phi[2] * kDeg, false),
                matmul(rot_y(s.phi[1] * kDeg, false), rot_x(s.phi[0] * kDeg, false)));
}

std::array<double, 9> rotation_derivative(std::size_t dim, const MotionState& s, std::size_t axis) {
  if (dim == 2) {
    if (axis != 0) throw Error("rotation_derivative: 2D has a single angle");
    return rot_z(s.phi[0] * kDeg, true);
  }
  const double a = s.phi[0] * kDeg, b = s.phi[1] * kDeg, c = s.phi[2] * kDeg;
  return matmul(rot_z(c, axis == 2), matmul(rot_y(b, axis == 1), rot_x(a, axis == 0)));
}

FreqCoords rotate_coords(const FreqCoords& base, const MotionTrajectory& m,
                         std::span<const int> point_state) {
  if (base.dim != m.dim) throw ShapeError("rotate_coords: coordinate and motion dimensions differ");
  if (point_state.size() != base.size()) throw ShapeError("rotate_coords: state list length mismatch");
  std::vector<std::array<double, 9>> rot(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) rot[i] = rotation_matrix(m.dim, m.states[i]);
  FreqCoords out = base;
  const std::size_t d = base.dim;
  for (std::size_t p = 0; p < base.size(); ++p) {
    const int s = point_state[p];
    if (s < 0 || std::size_t(s) >= m.size()) throw Error("rotate_coords: point without a motion state");
    const auto& R = rot[std::size_t(s)];
    for (std::size_t i = 0; i < d; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < d; ++j) v += R[j * 3 + i] * base(p, j);
      out(p, i) = v;
    }
  }
  return out;
}

void phase_shift(ComplexVolume& samples, const FreqCoords& base, const MotionTrajectory& m,
                 std::span<const int> point_state, int sign) {
  const std::size_t M = base.size();
  if (M == 0 || samples.size() % M != 0 || point_state.size() != M)
    throw ShapeError("phase_shift: sample count does not match coordinates");
  const std::size_t coils = samples.size() / M;
  for (std::size_t p = 0; p < M; ++p) {
    const auto& s = m.states.at(std::size_t(point_state[p]));
    double kt = 0.0;
    for (std::size_t a = 0; a < base.dim; ++a) kt += base(p, a) * s.t[a];
    const cplx ph = std::polar(1.0, -double(sign) * kt);
    for (std::size_t c = 0; c < coils; ++c) samples[c * M + p] *= ph;
  }
}

MotionOperator::MotionOperator(Shape image_shape, CoilSensitivities coils, SamplingTrajectory trajectory,
                               NufftOptions options)
    : image_shape_(std::move(image_shape)), coils_(std::move(coils)), trajectory_(std::move(trajectory)) {
  validate_shape(image_shape_);
  if (image_shape_.size() < 2 || image_shape_.size() > 3)
    throw ShapeError("motion operator: image must be 2D or 3D");
  if (coils_.maps.empty() || coils_.shape() != image_shape_)
    throw ShapeError("motion operator: coil maps do not match image " + shape_string(image_shape_));
  if (!(trajectory_.plane == plane_for(image_shape_)))
    throw ShapeError("motion operator: trajectory plane does not match image");
  trajectory_.validate();
  plan_ = std::make_shared<NufftPlan>(image_shape_, options);
  readout_ = readout_length(image_shape_);
  lines_ = trajectory_.lines();

  const std::size_t d = dim();
  const auto& pl = trajectory_.plane;
  base_ = FreqCoords(d, std::vector<double>(lines_.size() * readout_ * d));
  point_state_.resize(lines_.size() * readout_);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t l = 0; l < lines_.size(); ++l) {
    const double kx = two_pi * (double(pl.kx(lines_[l])) - double(pl.nx / 2)) / double(pl.nx);
    const double ky = two_pi * (double(pl.ky(lines_[l])) - double(pl.ny / 2)) / double(pl.ny);
    for (std::size_t z = 0; z < readout_; ++z) {
      const std::size_t p = l * readout_ + z;
      base_(p, 0) = kx;
      base_(p, 1) = ky;
      if (d == 3)
        base_(p, 2) = two_pi * (double(z) - double(readout_ / 2)) / double(readout_);
      point_state_[p] = trajectory_.line_to_state[lines_[l]];
    }
  }
  base_weights_ = std::make_shared<std::vector<double>>(plan_->pipe_weights(base_));
}

MotionOperator MotionOperator::with_trajectory(SamplingTrajectory trajectory) const {
  if (trajectory.lines() != lines_)
    throw ShapeError("with_trajectory: trajectory covers different lines");
  trajectory.validate();
  MotionOperator op = *this;
  op.trajectory_ = std::move(trajectory);
  for (std::size_t l = 0; l < op.lines_.size(); ++l)
    for (std::size_t z = 0; z < readout_; ++z)
      op.point_state_[l * readout_ + z] = op.trajectory_.line_to_state[lines_[l]];
  return op;
}

Shape MotionOperator::kspace_shape() const { return {coils_.count(), lines_.size(), readout_}; }

void MotionOperator::check_motion(const MotionTrajectory& m) const {
  if (m.dim != dim()) throw ShapeError("motion operator: motion dimension mismatch");
  if (m.size() != num_states())
    throw ShapeError("motion operator: " + std::to_string(m.size()) + " motion states for " +
                     std::to_string(num_states()) + " trajectory states");
  for (const auto& s : m.states)
    for (std::size_t a = 0; a < 3; ++a)
      if (!std::isfinite(s.t[a]) || !std::isfinite(s.phi[a])) throw NumericError("motion: non-finite parameter");
}

void MotionOperator::check_kspace(const ComplexVolume& y) const {
  if (y.shape() != kspace_shape())
    throw ShapeError("motion operator: k-space shape " + shape_string(y.shape()) + ", expected " +
                     shape_string(kspace_shape()));
}

MotionGeometry MotionOperator::geometry(const MotionTrajectory& m, bool density_compensation) const {
  check_motion(m);
  MotionGeometry g;
  g.rotated = rotate_coords(base_, m, point_state_);
  g.table = plan_->prepare(g.rotated);
  g.phase.resize(base_.size());
  for (std::size_t p = 0; p < base_.size(); ++p) {
    const auto& s = m.states[std::size_t(point_state_[p])];
    double kt = 0.0;
    for (std::size_t a = 0; a < dim(); ++a) kt += base_(p, a) * s.t[a];
    g.phase[p] = std::polar(1.0, -kt);
  }
  if (density_compensation) {
    g.weights = plan_->pipe_weights(g.table);
    for (std::size_t p = 0; p < g.weights.size(); ++p) g.weights[p] /= (*base_weights_)[p];
  }
  return g;
}

ComplexVolume MotionOperator::forward(const ComplexVolume& x, const MotionTrajectory& m) const {
  return forward(x, geometry(m));
}

ComplexVolume MotionOperator::forward(const ComplexVolume& x, const MotionGeometry& g) const {
  if (x.shape() != image_shape_)
    throw ShapeError("motion forward: image shape " + shape_string(x.shape()) + ", expected " +
                     shape_string(image_shape_));
  const std::size_t M = num_points();
  ComplexVolume out(kspace_shape());
  ComplexVolume coil_image(image_shape_);
  for (std::size_t c = 0; c < coils_.count(); ++c) {
    for (std::size_t i = 0; i < x.size(); ++i) coil_image[i] = coils_.maps[c][i] * x[i];
    const auto s = plan_->forward(coil_image, g.table);
    for (std::size_t p = 0; p < M; ++p) out[c * M + p] = s[p] * g.phase[p];
  }
  return out;
}

ComplexVolume MotionOperator::corrected_zf(const ComplexVolume& y, const MotionTrajectory& m,
                                           bool density_compensation) const {
  return corrected_zf(y, geometry(m, density_compensation));
}

ComplexVolume MotionOperator::corrected_zf(const ComplexVolume& y, const MotionGeometry& g) const {
  check_kspace(y);
  const std::size_t M = num_points();
  ComplexVolume out(image_shape_);
  std::vector<cplx> s(M);
  for (std::size_t c = 0; c < coils_.count(); ++c) {
    for (std::size_t p = 0; p < M; ++p) {
      s[p] = y[c * M + p] * std::conj(g.phase[p]);
      if (!g.weights.empty()) s[p] *= g.weights[p];
    }
    const auto img = plan_->adjoint(s, g.table);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::conj(coils_.maps[c][i]) * img[i];
  }
  return out;
}

ComplexVolume MotionOperator::adjoint(const ComplexVolume& y, const MotionTrajectory& m) const {
  return adjoint(y, geometry(m));
}

ComplexVolume MotionOperator::adjoint(const ComplexVolume& y, const MotionGeometry& g) const {
  MotionGeometry plain{g.rotated, g.table, g.phase, {}};
  return corrected_zf(y, plain);
}

std::vector<double> MotionOperator::coords_to_params(const MotionTrajectory& m,
                                                     const std::vector<double>& coord_grad) const {
  const std::size_t d = dim();
  const std::size_t P = params_per_state(d);
  const std::size_t n_angles = d == 2 ? 1 : 3;
  std::vector<double> grad(m.size() * P, 0.0);
  std::vector<std::array<std::array<double, 9>, 3>> dR(m.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t a = 0; a < n_angles; ++a) dR[i][a] = rotation_derivative(d, m.states[i], a);
  for (std::size_t p = 0; p < base_.size(); ++p) {
    const std::size_t s = std::size_t(point_state_[p]);
    for (std::size_t a = 0; a < n_angles; ++a) {
      const auto& D = dR[s][a];
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double dk = 0.0;
        for (std::size_t j = 0; j < d; ++j) dk += D[j * 3 + i] * base_(p, j);
        acc += coord_grad[p * d + i] * dk;
      }
      grad[s * P + d + a] += acc * kDeg;
    }
  }
  return grad;
}

std::vector<double> MotionOperator::forward_grad_motion(const ComplexVolume& x, const MotionTrajectory& m,
                                                        const ComplexVolume& cot) const {
  return forward_grad_motion(x, m, geometry(m), cot);
}

std::vector<double> MotionOperator::forward_grad_motion(const ComplexVolume& x, const MotionTrajectory& m,
                                                        const MotionGeometry& g,
                                                        const ComplexVolume& cot) const {
  check_motion(m);
  check_kspace(cot);
  if (x.shape() != image_shape_) throw ShapeError("forward_grad_motion: image shape mismatch");
  const std::size_t d = dim();
  const std::size_t P = params_per_state(d);
  const std::size_t M = num_points();
  std::vector<double> coord(M * d, 0.0);
  std::vector<double> grad_t(m.size() * d, 0.0);
  ComplexVolume coil_image(image_shape_);
  std::vector<cplx> gq(M);
  for (std::size_t c = 0; c < coils_.count(); ++c) {
    for (std::size_t i = 0; i < x.size(); ++i) coil_image[i] = coils_.maps[c][i] * x[i];
    const auto s = plan_->forward(coil_image, g.table);
    for (std::size_t p = 0; p < M; ++p) {
      const cplx gc = cot[c * M + p];
      gq[p] = std::conj(g.phase[p]) * gc;
      const cplx pred = s[p] * g.phase[p];
      // d pred / d t_a = −i k_a pred
      const double base = (std::conj(gc) * cplx(0.0, -1.0) * pred).real();
      const std::size_t st = std::size_t(point_state_[p]);
      for (std::size_t a = 0; a < d; ++a) grad_t[st * d + a] += base * base_(p, a);
    }
    const auto cg = plan_->coord_grad(coil_image, g.table, gq);
    for (std::size_t i = 0; i < coord.size(); ++i) coord[i] += cg[i];
  }
  auto grad = coords_to_params(m, coord);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t a = 0; a < d; ++a) grad[i * P + a] += grad_t[i * d + a];
  return grad;
}

std::vector<double> MotionOperator::zf_grad_motion(const ComplexVolume& y, const MotionTrajectory& m,
                                                   const MotionGeometry& g, const ComplexVolume& cot) const {
  check_motion(m);
  check_kspace(y);
  if (cot.shape() != image_shape_) throw ShapeError("zf_grad_motion: cotangent shape mismatch");
  const std::size_t d = dim();
  const std::size_t P = params_per_state(d);
  const std::size_t M = num_points();
  std::vector<double> coord(M * d, 0.0);
  std::vector<double> grad_t(m.size() * d, 0.0);
  ComplexVolume h(image_shape_);
  std::vector<cplx> s(M);
  for (std::size_t c = 0; c < coils_.count(); ++c) {
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = coils_.maps[c][i] * cot[i];
    for (std::size_t p = 0; p < M; ++p) {
      s[p] = y[c * M + p] * std::conj(g.phase[p]);
      if (!g.weights.empty()) s[p] *= g.weights[p];
    }
    const auto fh = plan_->forward(h, g.table);
    for (std::size_t p = 0; p < M; ++p) {
      // d s / d t_a = i k_a s
      const double base = (std::conj(fh[p]) * cplx(0.0, 1.0) * s[p]).real();
      const std::size_t st = std::size_t(point_state_[p]);
      for (std::size_t a = 0; a < d; ++a) grad_t[st * d + a] += base * base_(p, a);
    }
    const auto cg = plan_->coord_grad(h, g.table, s);
    for (std::size_t i = 0; i < coord.size(); ++i) coord[i] += cg[i];
  }
  auto grad = coords_to_params(m, coord);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t a = 0; a < d; ++a) grad[i * P + a] += grad_t[i * d + a];
  return grad;
}

std::vector<double> MotionOperator::point_mask(std::span<const int> excluded_states) const {
  std::vector<std::uint8_t> excluded(num_states(), 0);
  for (int s : excluded_states) {
    if (s < 0 || std::size_t(s) >= num_states()) throw Error("point_mask: state index out of range");
    excluded[std::size_t(s)] = 1;
  }
  std::vector<double> mask(num_points());
  for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = excluded[std::size_t(point_state_[p])] ? 0.0 : 1.0;
  return mask;
}

}  // namespace mttt
