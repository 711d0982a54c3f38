#include "mttt/solvers.hpp"

#include <cmath>
#include <random>

#include "mttt/reconstructor.hpp"

namespace mttt {

namespace {

double haar_l1(const ComplexVolume& x, int levels) {
  const auto c = haar_forward(pad_edge(x, haar_padded_shape(x.shape(), levels)), levels);
  return norm1(c);
}

ComplexVolume haar_l1_subgrad(const ComplexVolume& x, int levels) {
  auto c = haar_forward(pad_edge(x, haar_padded_shape(x.shape(), levels)), levels);
  for (auto& v : c.values()) {
    const double a = std::abs(v);
    v = a > 0.0 ? v / a : cplx{};
  }
  return pad_edge_adjoint(haar_inverse(c, levels), x.shape());
}

void apply_mask(ComplexVolume& k, std::span<const double> mask) {
  const std::size_t p = mask.size();
  for (std::size_t i = 0; i < k.size(); ++i) k[i] *= mask[i % p];
}

ComplexVolume residual(const MotionOperator& op, const MotionGeometry& geo, const ComplexVolume& x,
                       const ComplexVolume& y, std::span<const double> mask) {
  auto r = op.forward(x, geo);
  r -= y;
  if (!mask.empty()) apply_mask(r, mask);
  return r;
}

void axpy(ComplexVolume& x, double a, const ComplexVolume& g) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += a * g[i];
}

void check_divergence(const std::vector<double>& trace, const char* what) {
  const double v = trace.back();
  if (!std::isfinite(v) || v > 1e6 * trace.front()) {
    std::string msg = std::string(what) + ": diverged; objective trace:";
    for (double t : trace) msg += " " + std::to_string(t);
    throw NumericError(msg);
  }
}

}  // namespace

void L1Config::validate() const {
  if (steps < 1) throw Error("l1: steps must be >= 1");
  if (!(lambda >= 0.0)) throw Error("l1: lambda must be >= 0");
  if (levels < 0) throw Error("l1: levels must be >= 0");
  if (!(lr > 0.0)) throw Error("l1: lr must be positive");
}

void AltOptConfig::validate() const {
  if (recon_steps_per_round < 1 || motion_steps_per_round < 0) throw Error("altopt: step counts must be positive");
  if (max_iters < 0) throw Error("altopt: max_iters must be >= 0");
  if (!(recon_lambda >= 0.0)) throw Error("altopt: recon_lambda must be >= 0");
  if (!(motion_step >= 0.0) || !(recon_lr > 0.0) || !(motion_lr >= 0.0))
    throw Error("altopt: rates must be positive");
  if (!(early_stop_fraction >= 0.0)) throw Error("altopt: early_stop_fraction must be >= 0");
  if (levels < 0) throw Error("altopt: levels must be >= 0");
}

void DCLayerConfig::validate() const {
  if (steps < 0) throw Error("dc layer: steps must be >= 0");
  if (!(lambda >= 0.0)) throw Error("dc layer: lambda must be >= 0");
  if (!(relative_step > 0.0)) throw Error("dc layer: relative_step must be positive");
}

double operator_norm_sq(const MotionOperator& op, const MotionTrajectory& m, std::span<const double> mask,
                        int iterations) {
  const auto geo = op.geometry(m, false);
  ComplexVolume v(op.image_shape());
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> nd;
  for (auto& z : v.values()) z = {nd(rng), nd(rng)};
  v *= 1.0 / norm2(v);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    auto k = op.forward(v, geo);
    if (!mask.empty()) apply_mask(k, mask);
    auto w = op.adjoint(k, geo);
    lambda = norm2(w);
    if (!(lambda > 0.0)) throw NumericError("operator norm: operator annihilates the probe vector");
    v = w * (1.0 / lambda);
  }
  return lambda;
}

SolverResult l1_reconstruct(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
                            const L1Config& cfg, std::span<const int> excluded) {
  cfg.validate();
  const auto mask = op.point_mask(excluded);
  bool any = false;
  for (double v : mask) any = any || v != 0.0;
  if (!any) throw Error("l1 reconstruction: every motion state is excluded");

  const double scale = cfg.paper_scale ? 1.0 : norm2(y);
  if (!(scale > 0.0)) return {ComplexVolume(op.image_shape()), {0.0}};
  ComplexVolume yn = y * (1.0 / scale);
  apply_mask(yn, mask);

  const auto geo = op.geometry(m, false);
  const double lr = cfg.paper_scale ? cfg.lr : 0.5 / operator_norm_sq(op, m, mask);
  ComplexVolume x = op.corrected_zf(yn, m);
  auto objective = [&](const ComplexVolume& r, const ComplexVolume& img) {
    return sum_abs2(r.data()) + cfg.lambda * haar_l1(img, cfg.levels);
  };
  auto r = residual(op, geo, x, yn, mask);
  SolverResult out;
  out.trace.push_back(objective(r, x));
  double step = lr;
  for (int it = 0; it < cfg.steps; ++it) {
    auto g = op.adjoint(r, geo) * 2.0;
    if (cfg.lambda > 0.0) axpy(g, cfg.lambda, haar_l1_subgrad(x, cfg.levels));
    // Halve the step until the objective does not rise.
    ComplexVolume trial = x;
    axpy(trial, -step, g);
    auto rt = residual(op, geo, trial, yn, mask);
    double obj = objective(rt, trial);
    for (int h = 0; h < 30 && !cfg.paper_scale && obj > out.trace.back(); ++h) {
      step *= 0.5;
      trial = x;
      axpy(trial, -step, g);
      rt = residual(op, geo, trial, yn, mask);
      obj = objective(rt, trial);
    }
    if (cfg.paper_scale || !(obj > out.trace.back())) {
      x = std::move(trial);
      r = std::move(rt);
      out.trace.push_back(obj);
    } else {
      out.trace.push_back(out.trace.back());
    }
    check_divergence(out.trace, "l1 reconstruction");
  }
  out.image = x * scale;
  return out;
}

SolverResult dc_layer_refine(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
                             const ComplexVolume& x_init, const DCLayerConfig& cfg,
                             std::span<const int> excluded) {
  cfg.validate();
  if (x_init.shape() != op.image_shape()) throw ShapeError("dc layer: x_init does not match the image shape");
  const auto mask = op.point_mask(excluded);
  ComplexVolume ym = y;
  apply_mask(ym, mask);
  const double y1 = norm1(ym);
  const double x1 = norm1(x_init);
  if (!(y1 > 0.0)) throw NumericError("dc layer: no measurements left");
  const double xs = x1 > 0.0 ? x1 : 1.0;
  double ymax = 0.0, xmax = 0.0;
  for (const auto& v : ym.values()) ymax = std::max(ymax, std::abs(v));
  for (const auto& v : x_init.values()) xmax = std::max(xmax, std::abs(v));
  const double eps_r = 1e-6 * ymax;
  const double eps_x = 1e-6 * (xmax > 0.0 ? xmax : 1.0);

  const auto geo = op.geometry(m, false);
  auto objective = [&](const ComplexVolume& r, const ComplexVolume& x) {
    double prox = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) prox += std::abs(x[i] - x_init[i]);
    return norm1(r) / y1 + cfg.lambda * prox / xs;
  };
  auto smooth_sign = [](cplx z, double eps) { return z / std::sqrt(std::norm(z) + eps * eps); };

  ComplexVolume x = x_init;
  auto r = residual(op, geo, x, ym, mask);
  SolverResult out;
  out.trace.push_back(objective(r, x));
  ComplexVolume best = x;
  double best_obj = out.trace.back();
  const double step0 = cfg.relative_step * (x1 > 0.0 ? norm2(x_init) : 1.0);
  for (int it = 0; it < cfg.steps; ++it) {
    ComplexVolume s = r;
    for (auto& v : s.values()) v = smooth_sign(v, eps_r);
    auto g = op.adjoint(s, geo) * (1.0 / y1);
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += cfg.lambda / xs * smooth_sign(x[i] - x_init[i], eps_x);
    const double gn = norm2(g);
    if (!(gn > 0.0)) break;
    axpy(x, -step0 / std::sqrt(double(it + 1)) / gn, g);
    r = residual(op, geo, x, ym, mask);
    out.trace.push_back(objective(r, x));
    check_divergence(out.trace, "dc layer");
    if (out.trace.back() < best_obj) {
      best_obj = out.trace.back();
      best = x;
    }
  }
  out.image = std::move(best);
  return out;
}

AltOptResult altopt(const MotionOperator& op, const ComplexVolume& y, const AltOptConfig& cfg) {
  cfg.validate();
  const double scale = cfg.paper_scale ? 1.0 : norm2(y);
  if (!(scale > 0.0)) throw NumericError("altopt: measurements are zero");
  const ComplexVolume yn = y * (1.0 / scale);
  const double count = double(y.size());

  AltOptResult out;
  out.motion = op.zero_motion();
  ComplexVolume x = op.corrected_zf(yn, out.motion);
  auto mse = [&](const ComplexVolume& r) { return sum_abs2(r.data()) / count; };
  {
    const auto geo = op.geometry(out.motion, false);
    out.trace.push_back(mse(residual(op, geo, x, yn, {})));
  }
  if (cfg.max_iters == 0) {
    out.image = x * scale;
    return out;
  }

  const double lr_x = cfg.paper_scale ? cfg.recon_lr : 0.5 / operator_norm_sq(op, out.motion, {});
  const std::size_t per = out.motion.params_per_state();
  const std::size_t ns = out.motion.size();
  const auto& pstate = op.point_state();
  const std::size_t np = op.num_points();

  for (int round = 0; round < cfg.max_iters; ++round) {
    auto geo = op.geometry(out.motion, false);
    for (int s = 0; s < cfg.recon_steps_per_round; ++s) {
      const auto r = residual(op, geo, x, yn, {});
      auto g = op.adjoint(r, geo) * 2.0;
      if (cfg.recon_lambda > 0.0) axpy(g, cfg.recon_lambda, haar_l1_subgrad(x, cfg.levels));
      axpy(x, -lr_x, g);
    }

    // Gauss-Newton diagonal: one perturbation per parameter type covers all
    // states, because states occupy disjoint samples.
    std::vector<double> curv(ns * per, 0.0);
    if (!cfg.paper_scale && cfg.motion_step > 0.0 && cfg.motion_steps_per_round > 0) {
      const auto base = op.forward(x, geo);
      const double delta = 1e-3;
      for (std::size_t q = 0; q < per; ++q) {
        MotionTrajectory mp = out.motion;
        for (std::size_t st = 0; st < ns; ++st) mp.param(st, q) += delta;
        const auto moved = op.forward(x, mp);
        for (std::size_t i = 0; i < moved.size(); ++i)
          curv[std::size_t(pstate[i % np]) * per + q] += std::norm(moved[i] - base[i]);
      }
      for (auto& c : curv) c = 2.0 * c / (delta * delta);
    }

    for (int s = 0; s < cfg.motion_steps_per_round; ++s) {
      const auto r = residual(op, geo, x, yn, {});
      const auto grad = op.forward_grad_motion(x, out.motion, geo, r * 2.0);
      auto p = out.motion.params();
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (cfg.fix_first_state && i < per) continue;
        if (cfg.paper_scale) p[i] -= cfg.motion_lr * grad[i] / count;
        else if (curv[i] > 0.0) p[i] -= cfg.motion_step * grad[i] / curv[i];
      }
      out.motion.set_params(p);
      geo = op.geometry(out.motion, false);
    }

    out.trace.push_back(mse(residual(op, geo, x, yn, {})));
    check_divergence(out.trace, "altopt");
    if (out.trace.back() < cfg.early_stop_fraction * out.trace.front()) break;
  }
  out.image = x * scale;
  return out;
}

SolverResult threshold_and_reconstruct(const MotionOperator& op, const ComplexVolume& y,
                                       const MotionTrajectory& m, const DCReport& report, const L1Config& cfg) {
  return l1_reconstruct(op, y, m, cfg, report.flagged);
}

nlohmann::json to_json(const L1Config& c) {
  return {{"steps", c.steps}, {"lambda", c.lambda}, {"levels", c.levels}, {"paper_scale", c.paper_scale},
          {"lr", c.lr}};
}

void from_json(const nlohmann::json& j, L1Config& c) {
  if (!j.is_object()) throw Error("l1 config must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "steps") c.steps = v.get<int>();
    else if (k == "lambda") c.lambda = v.get<double>();
    else if (k == "levels") c.levels = v.get<int>();
    else if (k == "paper_scale") c.paper_scale = v.get<bool>();
    else if (k == "lr") c.lr = v.get<double>();
    else throw Error("unknown key 'solver.l1." + k + "'");
  }
  c.validate();
}

nlohmann::json to_json(const AltOptConfig& c) {
  return {{"recon_steps_per_round", c.recon_steps_per_round},
          {"motion_steps_per_round", c.motion_steps_per_round},
          {"recon_lambda", c.recon_lambda},
          {"levels", c.levels},
          {"motion_step", c.motion_step},
          {"max_iters", c.max_iters},
          {"early_stop_fraction", c.early_stop_fraction},
          {"paper_scale", c.paper_scale},
          {"recon_lr", c.recon_lr},
          {"motion_lr", c.motion_lr},
          {"fix_first_state", c.fix_first_state}};
}

void from_json(const nlohmann::json& j, AltOptConfig& c) {
  if (!j.is_object()) throw Error("altopt config must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "recon_steps_per_round") c.recon_steps_per_round = v.get<int>();
    else if (k == "motion_steps_per_round") c.motion_steps_per_round = v.get<int>();
    else if (k == "recon_lambda") c.recon_lambda = v.get<double>();
    else if (k == "levels") c.levels = v.get<int>();
    else if (k == "motion_step") c.motion_step = v.get<double>();
    else if (k == "max_iters") c.max_iters = v.get<int>();
    else if (k == "early_stop_fraction") c.early_stop_fraction = v.get<double>();
    else if (k == "paper_scale") c.paper_scale = v.get<bool>();
    else if (k == "recon_lr") c.recon_lr = v.get<double>();
    else if (k == "motion_lr") c.motion_lr = v.get<double>();
    else if (k == "fix_first_state") c.fix_first_state = v.get<bool>();
    else throw Error("unknown key 'solver.altopt." + k + "'");
  }
  c.validate();
}

nlohmann::json to_json(const DCLayerConfig& c) {
  return {{"lambda", c.lambda}, {"steps", c.steps}, {"relative_step", c.relative_step}};
}

void from_json(const nlohmann::json& j, DCLayerConfig& c) {
  if (!j.is_object()) throw Error("dc layer config must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "lambda") c.lambda = v.get<double>();
    else if (k == "steps") c.steps = v.get<int>();
    else if (k == "relative_step") c.relative_step = v.get<double>();
    else throw Error("unknown key 'solver.dc_layer." + k + "'");
  }
  c.validate();
}

}  // namespace mttt
