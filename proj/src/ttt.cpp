#include "mttt/ttt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "mttt/csv.hpp"

namespace mttt {

double schedule_lr(const PhaseSchedule& s, int iter) {
  double lr = s.lr;
  for (int at : s.decay_at)
    if (iter >= at) lr /= s.decay_factor;
  return lr;
}

void TTTConfig::validate() const {
  for (const auto* p : {&phase1, &phase2, &phase3}) {
    if (p->iters < 0) throw Error("ttt config: iteration counts must be non-negative");
    if (!(p->lr > 0.0)) throw Error("ttt config: learning rates must be positive");
    if (!(p->decay_factor > 0.0)) throw Error("ttt config: decay factor must be positive");
    for (std::size_t i = 0; i < p->decay_at.size(); ++i) {
      if (i > 0 && p->decay_at[i] <= p->decay_at[i - 1]) throw Error("ttt config: decay_at must increase");
      if (p->decay_at[i] >= p->iters && p->iters > 0) throw Error("ttt config: decay_at beyond phase length");
    }
  }
  if (clamp_bounds.size() != clamp_until.size()) throw Error("ttt config: clamp arrays differ in length");
  for (std::size_t i = 1; i < clamp_until.size(); ++i)
    if (clamp_until[i] <= clamp_until[i - 1]) throw Error("ttt config: clamp steps must increase");
  if (n_splits < 1) throw Error("ttt config: n_splits must be at least 1");
  if (extra_converge_iters < 0 || extra_converge_decay_after < 0 || rot_only_warmup_steps < 0 ||
      grad_slice_count < 0)
    throw Error("ttt config: counts must be non-negative");
  if (!(dc_threshold >= 0.0)) throw Error("ttt config: threshold must be non-negative");
}

double clamp_bound(const TTTConfig& cfg, int step) {
  for (std::size_t i = 0; i < cfg.clamp_until.size(); ++i)
    if (step < cfg.clamp_until[i]) return cfg.clamp_bounds[i];
  return std::numeric_limits<double>::infinity();
}

DCReport DCReport::from_losses(std::vector<double> losses, double threshold) {
  DCReport r;
  r.per_state_loss = std::move(losses);
  r.threshold = threshold;
  for (std::size_t i = 0; i < r.per_state_loss.size(); ++i)
    if (r.per_state_loss[i] > threshold) r.flagged.push_back(int(i));
  return r;
}

namespace {

double y_norm1(const ComplexVolume& y) {
  const double n = norm1(y);
  if (!(n > 0.0)) throw NumericError("dc loss: measured data is identically zero");
  return n;
}

void mask_slices(ComplexVolume& v, const SliceSelection& sel) {
  if (sel.indices.empty()) return;
  if (v.rank() != 3 || sel.axis > 2) throw ShapeError("slice selection needs a 3D volume");
  std::vector<std::uint8_t> keep(v.extent(sel.axis), 0);
  for (auto i : sel.indices) keep.at(i) = 1;
  std::size_t stride = 1;
  for (std::size_t a = sel.axis + 1; a < 3; ++a) stride *= v.extent(a);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!keep[(i / stride) % v.extent(sel.axis)]) v[i] = 0.0;
}

}  // namespace

DCEvaluation dc_loss_and_grad(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
                              const Reconstructor& recon, bool density_compensation,
                              const SliceSelection* slices) {
  const double ny = y_norm1(y);
  const auto geo = op.geometry(m, density_compensation);
  DCEvaluation ev;
  ev.zero_filled = op.corrected_zf(y, geo);
  ev.reconstruction = recon.apply(ev.zero_filled);
  ev.prediction = op.forward(ev.reconstruction, geo);
  ComplexVolume cot(y.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const cplx r = ev.prediction[i] - y[i];
    const double a = std::abs(r);
    sum += a;
    if (a > 0.0) cot[i] = r / (a * ny);
  }
  ev.loss = sum / ny;
  ev.grad = op.forward_grad_motion(ev.reconstruction, m, geo, cot);
  if (recon.differentiable()) {
    const auto gx = op.adjoint(cot, geo);
    auto gz = recon.vjp(ev.zero_filled, gx);
    if (slices) mask_slices(gz, *slices);
    const auto g2 = op.zf_grad_motion(y, m, geo, gz);
    for (std::size_t i = 0; i < ev.grad.size(); ++i) ev.grad[i] += g2[i];
  }
  return ev;
}

double dc_loss(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
               const Reconstructor& recon, bool density_compensation) {
  const double ny = y_norm1(y);
  const auto geo = op.geometry(m, density_compensation);
  const auto pred = op.forward(recon.apply(op.corrected_zf(y, geo)), geo);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(pred[i] - y[i]);
  return sum / ny;
}

double masked_dc_loss(const ComplexVolume& prediction, const ComplexVolume& y, std::span<const double> mask) {
  require_same_shape(prediction, y, "masked_dc_loss");
  const std::size_t M = mask.size();
  if (M == 0 || M != y.size() / y.extent(0)) throw ShapeError("masked_dc_loss: mask length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (mask[i % M] == 0.0) continue;
    num += std::abs(prediction[i] - y[i]);
    den += std::abs(y[i]);
  }
  return den > 0.0 ? num / den : 0.0;
}

DCReport report_from_prediction(const MotionOperator& op, const ComplexVolume& prediction,
                                const ComplexVolume& y, double threshold) {
  require_same_shape(prediction, y, "dc report");
  const std::size_t S = op.num_states();
  const std::size_t M = op.num_points();
  std::vector<double> num(S, 0.0), den(S, 0.0);
  const auto& ps = op.point_state();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto s = std::size_t(ps[i % M]);
    num[s] += std::abs(prediction[i] - y[i]);
    den[s] += std::abs(y[i]);
  }
  std::vector<double> losses(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) losses[s] = den[s] > 0.0 ? num[s] / den[s] : 0.0;
  return DCReport::from_losses(std::move(losses), threshold);
}

DCReport dc_loss_per_state(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
                           const Reconstructor& recon, double threshold, bool density_compensation) {
  y_norm1(y);
  const auto geo = op.geometry(m, density_compensation);
  const auto pred = op.forward(recon.apply(op.corrected_zf(y, geo)), geo);
  return report_from_prediction(op, pred, y, threshold);
}

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad, double lr,
                const std::vector<std::uint8_t>& mask) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double mh = m_[i] / c1;
    const double vh = v_[i] / c2;
    params[i] -= lr * mh / (std::sqrt(vh) + eps_);
  }
}

namespace {

struct Optimizer {
  const MotionOperator& op;
  const ComplexVolume& y;
  const Reconstructor& recon;
  const TTTConfig& cfg;
  std::mt19937_64 rng;
  int global_step = 0;
  std::vector<TraceRow> trace;

  SliceSelection draw_slices() {
    SliceSelection sel;
    if (op.dim() != 3 || cfg.grad_slice_count == 0) return sel;
    sel.axis = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
    const std::size_t n = op.image_shape()[sel.axis];
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(n, std::size_t(cfg.grad_slice_count)));
    std::sort(idx.begin(), idx.end());
    sel.indices = std::move(idx);
    return sel;
  }

  // Runs `iters` Adam steps on the states with trainable[s] != 0.
  void run(const MotionOperator& phase_op, MotionTrajectory& m, const std::vector<std::uint8_t>& trainable,
           int iters, const std::function<double(int)>& lr_at, const std::string& name) {
    const std::size_t P = m.params_per_state();
    auto params = m.params();
    Adam adam(params.size());
    std::vector<std::uint8_t> mask(params.size()), rot_mask(params.size());
    for (std::size_t s = 0; s < m.size(); ++s)
      for (std::size_t q = 0; q < P; ++q) {
        const bool on = trainable[s] && !(cfg.fix_first_state && s == 0);
        mask[s * P + q] = on;
        rot_mask[s * P + q] = on && is_rotation_param(m.dim, q);
      }
    for (int it = 0; it < iters; ++it) {
      const auto sel = draw_slices();
      const auto ev = dc_loss_and_grad(phase_op, y, m, recon, cfg.density_compensation,
                                       sel.indices.empty() ? nullptr : &sel);
      if (!std::isfinite(ev.loss)) throw NumericError("ttt: loss became non-finite");
      const double lr = lr_at(it);
      trace.push_back({name, it, global_step, ev.loss, lr});
      adam.step(params, ev.grad, lr, global_step < cfg.rot_only_warmup_steps ? rot_mask : mask);
      const double bound = clamp_bound(cfg, global_step);
      if (std::isfinite(bound))
        for (auto& v : params) v = std::clamp(v, -bound, bound);
      if (cfg.fix_first_state)
        for (std::size_t q = 0; q < P; ++q) params[q] = 0.0;
      m.set_params(params);
      ++global_step;
    }
  }
};

}  // namespace

PhaseOutcome run_phase1(const MotionOperator& op, const ComplexVolume& y, const Reconstructor& recon,
                        const TTTConfig& cfg) {
  cfg.validate();
  Optimizer opt{op, y, recon, cfg, std::mt19937_64(cfg.seed), 0, {}};
  MotionTrajectory m = op.zero_motion();
  std::vector<std::uint8_t> all(m.size(), 1);
  opt.run(op, m, all, cfg.phase1.iters, [&](int it) { return schedule_lr(cfg.phase1, it); }, "phase1");
  return {m, opt.trace};
}

ResetOutcome reset_and_split(const MotionTrajectory& m, const DCReport& report, const SamplingTrajectory& traj,
                             const TTTConfig& cfg, bool intra) {
  const std::size_t S = m.size();
  if (report.per_state_loss.size() != S || std::size_t(traj.num_states) != S)
    throw ShapeError("reset_and_split: report, motion and trajectory disagree on the state count");
  std::vector<std::uint8_t> flagged(S, 0);
  for (int s : report.flagged) flagged.at(std::size_t(s)) = 1;
  if (cfg.fix_first_state && S > 0) flagged[0] = 0;
  if (std::all_of(flagged.begin(), flagged.end(), [](auto f) { return f != 0; }))
    throw Error("reset_and_split: every state is flagged; nothing to anchor the reset");

  MotionTrajectory reset = m;
  const std::size_t P = m.params_per_state();
  for (std::size_t s = 0; s < S; ++s) {
    if (!flagged[s]) continue;
    int prev = -1, next = -1;
    for (std::size_t j = s; j-- > 0;)
      if (!flagged[j]) {
        prev = int(j);
        break;
      }
    for (std::size_t j = s + 1; j < S; ++j)
      if (!flagged[j]) {
        next = int(j);
        break;
      }
    for (std::size_t q = 0; q < P; ++q) {
      double v = 0.0;
      int n = 0;
      if (prev >= 0) v += m.param(std::size_t(prev), q), ++n;
      if (next >= 0) v += m.param(std::size_t(next), q), ++n;
      reset.param(s, q) = v / n;
    }
  }

  ResetOutcome out;
  if (!intra) {
    out.motion = reset;
    out.trajectory = traj;
    for (std::size_t s = 0; s < S; ++s)
      if (flagged[s]) out.trainable.push_back(int(s));
    return out;
  }

  // Lines of each state in acquisition order.
  std::vector<std::vector<std::size_t>> state_lines(S);
  for (const auto& shot : traj.shots)
    for (auto l : shot) state_lines[std::size_t(traj.line_to_state[l])].push_back(l);

  out.trajectory = traj;
  out.motion = MotionTrajectory(m.dim, 0);
  int next_state = 0;
  for (std::size_t s = 0; s < S; ++s) {
    if (!flagged[s]) {
      for (auto l : state_lines[s]) out.trajectory.line_to_state[l] = next_state;
      out.motion.states.push_back(reset.states[s]);
      ++next_state;
      continue;
    }
    const std::size_t n = state_lines[s].size();
    const std::size_t groups = std::min<std::size_t>(n, std::size_t(cfg.n_splits));
    std::size_t pos = 0;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t len = n / groups + (g < n % groups ? 1 : 0);
      for (std::size_t i = 0; i < len; ++i) out.trajectory.line_to_state[state_lines[s][pos + i]] = next_state;
      pos += len;
      out.motion.states.push_back(reset.states[s]);
      out.trainable.push_back(next_state);
      ++next_state;
    }
  }
  out.trajectory.num_states = next_state;
  out.trajectory.validate();
  return out;
}

TTTResult run_full(const MotionOperator& op, const ComplexVolume& y, const Reconstructor& recon,
                   const TTTConfig& cfg) {
  cfg.validate();
  Optimizer opt{op, y, recon, cfg, std::mt19937_64(cfg.seed), 0, {}};
  TTTResult res;
  MotionTrajectory m = op.zero_motion();
  std::vector<std::uint8_t> all(m.size(), 1);
  opt.run(op, m, all, cfg.phase1.iters, [&](int it) { return schedule_lr(cfg.phase1, it); }, "phase1");
  res.phase1_motion = m;
  res.phase1_report = dc_loss_per_state(op, y, m, recon, cfg.dc_threshold, cfg.density_compensation);

  const auto reset = reset_and_split(m, res.phase1_report, op.trajectory(), cfg, cfg.intra_shot);
  const MotionOperator phase_op = op.with_trajectory(reset.trajectory);
  m = reset.motion;
  res.trainable = reset.trainable;

  if (!reset.trainable.empty()) {
    std::vector<std::uint8_t> mask(m.size(), 0);
    for (int s : reset.trainable) mask[std::size_t(s)] = 1;
    opt.run(phase_op, m, mask, cfg.phase2.iters, [&](int it) { return schedule_lr(cfg.phase2, it); },
            "phase2");
  } else {
    const double base = cfg.phase1.iters > 0 ? schedule_lr(cfg.phase1, cfg.phase1.iters - 1) : cfg.phase1.lr;
    std::vector<std::uint8_t> mask(m.size(), 1);
    opt.run(phase_op, m, mask, cfg.extra_converge_iters,
            [&](int it) { return it >= cfg.extra_converge_decay_after ? base / cfg.phase1.decay_factor : base; },
            "extra");
  }

  std::vector<std::uint8_t> every(m.size(), 1);
  opt.run(phase_op, m, every, cfg.phase3.iters, [&](int it) { return schedule_lr(cfg.phase3, it); }, "phase3");

  res.motion = m;
  res.trajectory = reset.trajectory;
  res.report = dc_loss_per_state(phase_op, y, m, recon, cfg.dc_threshold, cfg.density_compensation);
  res.trace = std::move(opt.trace);
  return res;
}

PhaseOutcome refine_states(const MotionOperator& op, const ComplexVolume& y, const Reconstructor& recon,
                           const TTTConfig& cfg, MotionTrajectory m, const std::vector<int>& trainable) {
  cfg.validate();
  if (m.size() != op.num_states()) throw ShapeError("refine_states: motion does not match the trajectory");
  Optimizer opt{op, y, recon, cfg, std::mt19937_64(cfg.seed), std::max(cfg.phase1.iters, cfg.rot_only_warmup_steps), {}};
  std::vector<std::uint8_t> mask(m.size(), 0);
  for (int s : trainable) mask.at(std::size_t(s)) = 1;
  opt.run(op, m, mask, cfg.phase2.iters, [&](int it) { return schedule_lr(cfg.phase2, it); }, "phase2");
  opt.run(op, m, mask, cfg.phase3.iters, [&](int it) { return schedule_lr(cfg.phase3, it); }, "phase3");
  return {m, std::move(opt.trace)};
}

void save_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  CsvWriter w({"phase", "iteration", "global_step", "loss", "lr"});
  for (const auto& r : trace)
    w.add_row({r.phase, (long long)r.iteration, (long long)r.global_step, r.loss, r.lr});
  w.save(path);
}

void save_report_csv(const DCReport& report, const std::filesystem::path& path) {
  CsvWriter w({"state", "loss", "flagged"});
  std::set<int> flagged(report.flagged.begin(), report.flagged.end());
  for (std::size_t s = 0; s < report.per_state_loss.size(); ++s)
    w.add_row({(long long)s, report.per_state_loss[s], (long long)(flagged.count(int(s)) ? 1 : 0)});
  w.save(path);
}

namespace {

nlohmann::json schedule_json(const PhaseSchedule& s) {
  return {{"iters", s.iters}, {"lr", s.lr}, {"decay_factor", s.decay_factor}, {"decay_at", s.decay_at}};
}

void schedule_from(const nlohmann::json& j, PhaseSchedule& s, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (k == "iters") s.iters = v.get<int>();
    else if (k == "lr") s.lr = v.get<double>();
    else if (k == "decay_factor") s.decay_factor = v.get<double>();
    else if (k == "decay_at") s.decay_at = v.get<std::vector<int>>();
    else throw Error("unknown key '" + where + "." + k + "'");
  }
}

}  // namespace

TTTConfig desk_ttt_config() {
  TTTConfig c;
  c.phase1.lr = 0.5;
  return c;
}

nlohmann::json to_json(const TTTConfig& c) {
  nlohmann::ordered_json j;
  j["phase1"] = schedule_json(c.phase1);
  j["phase2"] = schedule_json(c.phase2);
  j["phase3"] = schedule_json(c.phase3);
  j["extra_converge"] = {{"iters", c.extra_converge_iters}, {"decay_after", c.extra_converge_decay_after}};
  j["dc_threshold"] = c.dc_threshold;
  j["n_splits"] = c.n_splits;
  j["clamp_bounds"] = c.clamp_bounds;
  j["clamp_until"] = c.clamp_until;
  j["rot_only_warmup_steps"] = c.rot_only_warmup_steps;
  j["grad_slice_count"] = c.grad_slice_count;
  j["fix_first_state"] = c.fix_first_state;
  j["intra_shot"] = c.intra_shot;
  j["density_compensation"] = c.density_compensation;
  j["seed"] = c.seed;
  return j;
}

void from_json(const nlohmann::json& j, TTTConfig& c) {
  if (!j.is_object()) throw Error("ttt config must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "phase1") schedule_from(v, c.phase1, "ttt.phase1");
    else if (k == "phase2") schedule_from(v, c.phase2, "ttt.phase2");
    else if (k == "phase3") schedule_from(v, c.phase3, "ttt.phase3");
    else if (k == "extra_converge") {
      for (const auto& [k2, v2] : v.items()) {
        if (k2 == "iters") c.extra_converge_iters = v2.get<int>();
        else if (k2 == "decay_after") c.extra_converge_decay_after = v2.get<int>();
        else throw Error("unknown key 'ttt.extra_converge." + k2 + "'");
      }
    } else if (k == "dc_threshold") c.dc_threshold = v.get<double>();
    else if (k == "n_splits") c.n_splits = v.get<int>();
    else if (k == "clamp_bounds") c.clamp_bounds = v.get<std::vector<double>>();
    else if (k == "clamp_until") c.clamp_until = v.get<std::vector<int>>();
    else if (k == "rot_only_warmup_steps") c.rot_only_warmup_steps = v.get<int>();
    else if (k == "grad_slice_count") c.grad_slice_count = v.get<int>();
    else if (k == "fix_first_state") c.fix_first_state = v.get<bool>();
    else if (k == "intra_shot") c.intra_shot = v.get<bool>();
    else if (k == "density_compensation") c.density_compensation = v.get<bool>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else throw Error("unknown key 'ttt." + k + "'");
  }
  c.validate();
}

}  // namespace mttt
