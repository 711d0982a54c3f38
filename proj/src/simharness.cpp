#include "mttt/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>

#include "mttt/csv.hpp"
#include "mttt/metrics.hpp"
#include "mttt/reconstructor.hpp"

namespace mttt {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

MotionState draw_state(std::size_t dim, double m_max, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-m_max, m_max);
  MotionTrajectory tmp(dim, 1);
  for (std::size_t q = 0; q < params_per_state(dim); ++q) tmp.param(0, q) = m_max > 0.0 ? u(rng) : 0.0;
  return tmp.states[0];
}

struct Events {
  std::vector<std::size_t> shots;     // sorted first shots after each event
  std::vector<MotionState> per_shot;  // inter-shot value of every shot
};

Events draw_events(std::size_t num_shots, std::size_t dim, const SeverityLevel& level, std::mt19937_64& rng) {
  if (level.n_events < 0 || !(level.m_max >= 0.0)) throw Error("severity: negative level");
  if (std::size_t(level.n_events) >= num_shots)
    throw Error("severity: " + std::to_string(level.n_events) + " events need more than " +
                std::to_string(num_shots) + " shots");
  std::vector<std::size_t> gaps(num_shots - 1);
  for (std::size_t i = 0; i < gaps.size(); ++i) gaps[i] = i + 1;
  std::shuffle(gaps.begin(), gaps.end(), rng);
  Events ev;
  ev.shots.assign(gaps.begin(), gaps.begin() + level.n_events);
  std::sort(ev.shots.begin(), ev.shots.end());
  ev.per_shot.assign(num_shots, MotionState{});
  MotionState cur{};
  std::size_t next = 0;
  for (std::size_t s = 0; s < num_shots; ++s) {
    if (next < ev.shots.size() && ev.shots[next] == s) {
      cur = draw_state(dim, level.m_max, rng);
      ++next;
    }
    ev.per_shot[s] = cur;
  }
  return ev;
}

SimulatedScenario build(const SamplingTrajectory& traj, std::size_t dim, const Events& ev,
                        const std::vector<std::size_t>& intra, const SeverityLevel& level, std::mt19937_64& rng,
                        std::uint64_t seed) {
  SimulatedScenario sc;
  sc.shot_trajectory = traj;
  sc.event_shots = ev.shots;
  sc.intra_shots = intra;
  sc.seed = seed;
  sc.trajectory = traj;
  sc.motion = MotionTrajectory(dim, 0);
  const std::size_t P = params_per_state(dim);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> amp(-level.m_max, level.m_max);
  std::uniform_int_distribution<int> peaks(0, 2);
  int state = 0;
  for (std::size_t s = 0; s < traj.shots.size(); ++s) {
    if (!std::binary_search(intra.begin(), intra.end(), s)) {
      for (auto l : traj.shots[s]) sc.trajectory.line_to_state[l] = state;
      sc.motion.states.push_back(ev.per_shot[s]);
      ++state;
      continue;
    }
    // Knots (u, parameters) from the previous shot's state to the new one.
    MotionTrajectory knots(dim, 2);
    knots.states[0] = ev.per_shot[s - 1];
    knots.states[1] = ev.per_shot[s];
    std::vector<double> u{0.0, 1.0};
    const int np = peaks(rng);
    std::vector<double> pos;
    for (int p = 0; p < np; ++p) pos.push_back(unit(rng));
    std::sort(pos.begin(), pos.end());
    for (double p : pos) {
      MotionTrajectory tmp(dim, 1);
      for (std::size_t q = 0; q < P; ++q) tmp.param(0, q) = level.m_max > 0.0 ? amp(rng) : 0.0;
      knots.states.insert(knots.states.end() - 1, tmp.states[0]);
      u.insert(u.end() - 1, p);
    }
    const auto& lines = traj.shots[s];
    const std::size_t L = lines.size();
    for (std::size_t j = 0; j < L; ++j) {
      const double t = L > 1 ? double(j) / double(L - 1) : 1.0;
      std::size_t seg = 0;
      while (seg + 2 < u.size() && t > u[seg + 1]) ++seg;
      const double span = u[seg + 1] - u[seg];
      const double w = span > 0.0 ? (t - u[seg]) / span : 1.0;
      MotionTrajectory one(dim, 1);
      for (std::size_t q = 0; q < P; ++q)
        one.param(0, q) = (1.0 - w) * knots.param(seg, q) + w * knots.param(seg + 1, q);
      sc.trajectory.line_to_state[lines[j]] = state;
      sc.motion.states.push_back(one.states[0]);
      ++state;
    }
  }
  sc.trajectory.num_states = state;
  sc.trajectory.validate();
  return sc;
}

}  // namespace

std::string SeverityLevel::label() const {
  std::ostringstream os;
  os << "(" << n_events << "," << m_max << ")";
  return os.str();
}

const std::vector<SeverityLevel>& canonical_levels() {
  static const std::vector<SeverityLevel> levels{{0, 0},  {1, 2},  {5, 2},  {10, 2}, {1, 5},
                                                 {1, 10}, {5, 5},  {10, 5}, {5, 10}, {10, 10}};
  return levels;
}

SeverityLevel parse_level(const std::string& s) {
  std::string t;
  for (char ch : s)
    if (ch != '(' && ch != ')' && ch != ' ') t.push_back(ch);
  const auto comma = t.find(',');
  if (comma == std::string::npos) throw Error("severity level must look like N_e,M_max: " + s);
  try {
    std::size_t used = 0;
    SeverityLevel l;
    l.n_events = std::stoi(t.substr(0, comma), &used);
    if (used != comma) throw Error("bad");
    const std::string rest = t.substr(comma + 1);
    l.m_max = std::stod(rest, &used);
    if (used != rest.size()) throw Error("bad");
    if (l.n_events < 0 || l.m_max < 0) throw Error("bad");
    return l;
  } catch (const std::exception&) {
    throw Error("severity level must look like N_e,M_max: " + s);
  }
}

SimulatedScenario simulate_inter_shot(const SamplingTrajectory& traj, std::size_t dim, const SeverityLevel& level,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto ev = draw_events(traj.shots.size(), dim, level, rng);
  return build(traj, dim, ev, {}, level, rng, seed);
}

SimulatedScenario simulate_intra_shot(const SamplingTrajectory& traj, std::size_t dim, const SeverityLevel& level,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto ev = draw_events(traj.shots.size(), dim, level, rng);
  std::vector<std::size_t> intra = ev.shots;
  std::shuffle(intra.begin(), intra.end(), rng);
  intra.resize((intra.size() + 1) / 2);
  std::sort(intra.begin(), intra.end());
  return build(traj, dim, ev, intra, level, rng, seed);
}

MotionError motion_error(const MotionTrajectory& estimate, const SamplingTrajectory& estimate_traj,
                         const MotionTrajectory& truth, const SamplingTrajectory& truth_traj) {
  if (estimate.dim != truth.dim) throw ShapeError("motion_error: dimension mismatch");
  const auto lines = truth_traj.lines();
  if (lines != estimate_traj.lines()) throw ShapeError("motion_error: trajectories cover different lines");
  const std::size_t P = truth.params_per_state();
  MotionError err;
  for (auto l : lines) {
    const auto se = std::size_t(estimate_traj.line_to_state[l]);
    const auto st = std::size_t(truth_traj.line_to_state[l]);
    for (std::size_t q = 0; q < P; ++q) {
      const double d = std::abs(estimate.param(se, q) - truth.param(st, q));
      err.mae += d;
      err.max_abs = std::max(err.max_abs, d);
    }
  }
  if (!lines.empty()) err.mae /= double(lines.size() * P);
  return err;
}

Discretized discretize_intra(const SimulatedScenario& sc, int n_splits) {
  if (n_splits < 1) throw Error("n_splits must be >= 1");
  const auto& shots = sc.shot_trajectory.shots;
  const std::size_t P = sc.motion.params_per_state();
  Discretized out;
  out.trajectory = sc.trajectory;
  out.motion = MotionTrajectory(sc.motion.dim, 0);
  int state = 0;
  for (std::size_t s = 0; s < shots.size(); ++s) {
    const auto& lines = shots[s];
    const bool intra = std::binary_search(sc.intra_shots.begin(), sc.intra_shots.end(), s);
    const std::size_t groups = intra ? std::min<std::size_t>(lines.size(), std::size_t(n_splits)) : 1;
    std::size_t pos = 0;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t len = lines.size() / groups + (g < lines.size() % groups ? 1 : 0);
      MotionTrajectory mean(sc.motion.dim, 1);
      const auto first = std::size_t(sc.trajectory.line_to_state[lines[pos]]);
      std::vector<double> dev(P, 0.0);
      for (std::size_t i = 0; i < len; ++i) {
        const auto l = lines[pos + i];
        const auto ts = std::size_t(sc.trajectory.line_to_state[l]);
        for (std::size_t q = 0; q < P; ++q) dev[q] += sc.motion.param(ts, q) - sc.motion.param(first, q);
        out.trajectory.line_to_state[l] = state;
      }
      for (std::size_t q = 0; q < P; ++q) mean.param(0, q) = sc.motion.param(first, q) + dev[q] / double(len);
      pos += len;
      out.motion.states.push_back(mean.states[0]);
      if (intra) out.split_states.push_back(state);
      ++state;
    }
  }
  out.trajectory.num_states = state;
  out.trajectory.validate();
  return out;
}

Method parse_method(const std::string& s) {
  if (s == "ttt") return Method::Ttt;
  if (s == "ttt+th") return Method::TttTh;
  if (s == "altopt") return Method::AltOpt;
  if (s == "altopt+th") return Method::AltOptTh;
  if (s == "known") return Method::Known;
  if (s == "none") return Method::None;
  throw Error("unknown method: " + s);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Ttt: return "ttt";
    case Method::TttTh: return "ttt+th";
    case Method::AltOpt: return "altopt";
    case Method::AltOptTh: return "altopt+th";
    case Method::Known: return "known";
    case Method::None: return "none";
  }
  return "?";
}

ReconKind parse_recon_kind(const std::string& s) {
  if (s == "l1") return ReconKind::L1;
  if (s == "dclayer" || s == "dc-layer") return ReconKind::DCLayer;
  throw Error("unknown reconstruction: " + s);
}

std::string to_string(ReconKind r) { return r == ReconKind::L1 ? "l1" : "dclayer"; }

Trial make_trial(const ExperimentSpec& spec, const SeverityLevel& level, std::uint64_t seed) {
  const auto plane = plane_for(spec.shape);
  const auto mask = make_mask(plane, spec.acceleration, spec.mask, mix(seed, 1));
  const auto traj = make_trajectory(mask, spec.shots, spec.order, mix(seed, 2));
  Trial t;
  t.coils = make_coils(spec.shape, spec.coils, mix(seed, 3));
  t.basis = smooth_basis(spec.shape, spec.subspace_dim, spec.smoothness, mix(seed, 4));
  PhantomParams pp;
  pp.basis = &t.basis;
  t.image = make_phantom(spec.shape, spec.phantom, pp, mix(seed, 5));
  const std::size_t dim = spec.shape.size();
  t.scenario = spec.intra_shot ? simulate_intra_shot(traj, dim, level, mix(seed, 6))
                               : simulate_inter_shot(traj, dim, level, mix(seed, 6));
  const MotionOperator op(spec.shape, t.coils, t.scenario.trajectory);
  t.kspace = op.forward(t.image, t.scenario.motion);
  return t;
}

namespace {

ComplexVolume reconstruct(const MotionOperator& op, const ComplexVolume& y, const MotionTrajectory& m,
                          std::span<const int> excluded, ReconKind kind, const ExperimentSpec& spec,
                          const Reconstructor& prior) {
  if (kind == ReconKind::L1) return l1_reconstruct(op, y, m, spec.l1, excluded).image;
  ComplexVolume ym = y;
  const auto mask = op.point_mask(excluded);
  for (std::size_t i = 0; i < ym.size(); ++i) ym[i] *= mask[i % mask.size()];
  const auto x0 = prior.apply(op.corrected_zf(ym, m));
  return dc_layer_refine(op, y, m, x0, spec.dc_layer, excluded).image;
}

// Flagged states to exclude; when every state is flagged the best-fitting
// one is kept so that the data term is never empty.
std::vector<int> exclusion(const DCReport& report) {
  std::vector<int> ex = report.flagged;
  if (!report.per_state_loss.empty() && ex.size() == report.per_state_loss.size()) {
    const auto best = std::min_element(report.per_state_loss.begin(), report.per_state_loss.end());
    ex.erase(std::find(ex.begin(), ex.end(), int(best - report.per_state_loss.begin())));
  }
  return ex;
}

}  // namespace

std::vector<ExperimentRow> run_experiment(const ExperimentSpec& spec, const SeverityLevel& level,
                                          const std::vector<Method>& methods, ReconKind recon,
                                          const std::vector<std::uint64_t>& seeds) {
  std::vector<ExperimentRow> rows;
  for (auto seed : seeds) {
    const Trial t = make_trial(spec, level, seed);
    const auto& sc = t.scenario;
    const MotionOperator op(spec.shape, t.coils, sc.shot_trajectory);
    const SubspaceProjector prior(t.basis, spec.shape, double(op.num_points()));
    TTTConfig tcfg = spec.ttt;
    tcfg.intra_shot = spec.intra_shot;
    tcfg.seed = mix(seed, 7);

    std::optional<TTTResult> ttt;
    std::optional<AltOptResult> alt;
    std::optional<DCReport> alt_report;
    for (auto method : methods) {
      ExperimentRow row{level, to_string(method), seed, 0.0, 0.0, 0};
      ComplexVolume img;
      switch (method) {
        case Method::Known: {
          const MotionOperator true_op = op.with_trajectory(sc.trajectory);
          img = reconstruct(true_op, t.kspace, sc.motion, {}, recon, spec, prior);
          break;
        }
        case Method::None: {
          const auto zero = op.zero_motion();
          img = reconstruct(op, t.kspace, zero, {}, recon, spec, prior);
          row.motion_mae = motion_error(zero, sc.shot_trajectory, sc.motion, sc.trajectory).mae;
          break;
        }
        case Method::Ttt:
        case Method::TttTh: {
          if (!ttt) ttt = run_full(op, t.kspace, prior, tcfg);
          const MotionOperator est_op = op.with_trajectory(ttt->trajectory);
          const auto excl = method == Method::TttTh ? exclusion(ttt->report) : std::vector<int>{};
          img = reconstruct(est_op, t.kspace, ttt->motion, excl, recon, spec, prior);
          row.motion_mae = motion_error(ttt->motion, ttt->trajectory, sc.motion, sc.trajectory).mae;
          row.flagged_count = ttt->report.flagged.size();
          break;
        }
        case Method::AltOpt:
        case Method::AltOptTh: {
          if (!alt) {
            alt = altopt(op, t.kspace, spec.altopt);
            alt_report = dc_loss_per_state(op, t.kspace, alt->motion, prior, tcfg.dc_threshold,
                                           tcfg.density_compensation);
          }
          const auto excl = method == Method::AltOptTh ? exclusion(*alt_report) : std::vector<int>{};
          img = reconstruct(op, t.kspace, alt->motion, excl, recon, spec, prior);
          row.motion_mae = motion_error(alt->motion, sc.shot_trajectory, sc.motion, sc.trajectory).mae;
          row.flagged_count = alt_report->flagged.size();
          break;
        }
      }
      row.psnr = psnr(t.image, img);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string experiment_csv(const std::vector<ExperimentRow>& rows) {
  CsvWriter w({"level", "method", "seed", "psnr", "motion_mae", "flagged_count"});
  for (const auto& r : rows)
    w.add_row({r.level.label(), r.method, (long long)r.seed, r.psnr, r.motion_mae, (long long)r.flagged_count});
  return w.str();
}

std::vector<SplitRow> sweep_nsplits(const ExperimentSpec& spec, const std::vector<SeverityLevel>& levels,
                                    const std::vector<int>& n_splits, const std::vector<std::uint64_t>& seeds,
                                    bool estimate) {
  ExperimentSpec s = spec;
  s.intra_shot = true;
  std::vector<SplitRow> rows;
  for (const auto& level : levels)
    for (auto seed : seeds) {
      const Trial t = make_trial(s, level, seed);
      const auto& sc = t.scenario;
      const MotionOperator shot_op(s.shape, t.coils, sc.shot_trajectory);
      const SubspaceProjector prior(t.basis, s.shape, double(shot_op.num_points()));
      for (int ns : n_splits) {
        const auto disc = discretize_intra(sc, ns);
        const MotionOperator op = shot_op.with_trajectory(disc.trajectory);
        SplitRow row{level, ns, seed, 0.0, 0.0, 0.0};
        row.psnr_known = psnr(t.image, l1_reconstruct(op, t.kspace, disc.motion, s.l1).image);
        if (estimate && !disc.split_states.empty()) {
          // Split states start from the state preceding their shot.
          MotionTrajectory init = disc.motion;
          for (int st : disc.split_states) {
            int prev = st - 1;
            while (prev >= 0 && std::find(disc.split_states.begin(), disc.split_states.end(), prev) !=
                                    disc.split_states.end())
              --prev;
            init.states[std::size_t(st)] = prev >= 0 ? disc.motion.states[std::size_t(prev)] : MotionState{};
          }
          TTTConfig cfg = s.ttt;
          cfg.seed = mix(seed, 8);
          const auto est = refine_states(op, t.kspace, prior, cfg, init, disc.split_states);
          row.psnr_ttt = psnr(t.image, l1_reconstruct(op, t.kspace, est.motion, s.l1).image);
          row.motion_mae = motion_error(est.motion, disc.trajectory, sc.motion, sc.trajectory).mae;
        } else {
          row.psnr_ttt = row.psnr_known;
          row.motion_mae = motion_error(disc.motion, disc.trajectory, sc.motion, sc.trajectory).mae;
        }
        rows.push_back(row);
      }
    }
  return rows;
}

std::string nsplits_csv(const std::vector<SplitRow>& rows) {
  CsvWriter w({"level", "n_splits", "seed", "psnr_known", "psnr_ttt", "motion_mae"});
  for (const auto& r : rows)
    w.add_row({r.level.label(), (long long)r.n_splits, (long long)r.seed, r.psnr_known, r.psnr_ttt, r.motion_mae});
  return w.str();
}

}  // namespace mttt
