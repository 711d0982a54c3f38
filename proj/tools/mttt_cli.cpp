// mttt: simulate, estimate and correct rigid motion in multi-shot MRI.
#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mttt/array_io.hpp"
#include "mttt/csv.hpp"
#include "mttt/metrics.hpp"
#include "mttt/run_config.hpp"
#include "mttt/simharness.hpp"
#include "mttt/solvers.hpp"
#include "mttt/theory.hpp"
#include "mttt/ttt.hpp"

namespace fs = std::filesystem;
using namespace mttt;
using Json = nlohmann::ordered_json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open", p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write", p);
  out << text;
  if (!out) throw IoError("write failed", p);
}

std::string sha256_file(const fs::path& p) {
  const std::string data = read_file(p);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed for " + p.string());
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  if (fs::is_directory(dir)) return;
  if (!fs::create_directory(dir, ec) || ec) throw IoError("cannot create output directory", dir);
}

void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                    const std::vector<std::string>& files) {
  Json j;
  j["command"] = command;
  j["seed"] = seed;
  Json hashes = Json::object();
  for (const auto& f : files) hashes[f] = sha256_file(dir / f);
  j["files"] = hashes;
  write_file(dir / "manifest.json", j.dump(2) + "\n");
}

void verify_manifest(const fs::path& dir) {
  const auto j = nlohmann::json::parse(read_file(dir / "manifest.json"), nullptr, false);
  if (j.is_discarded() || !j.contains("files")) throw ConfigError("malformed manifest in " + dir.string());
  for (const auto& [name, hash] : j["files"].items()) {
    if (!fs::exists(dir / name)) throw IoError("manifest lists a missing file", dir / name);
    if (sha256_file(dir / name) != hash.get<std::string>())
      throw ConfigError("hash mismatch for " + (dir / name).string());
  }
}

void save_json(const fs::path& p, const nlohmann::json& j) { write_file(p, j.dump(2) + "\n"); }

SamplingTrajectory load_trajectory(const fs::path& p) {
  const auto j = nlohmann::json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw IoError("trajectory is not valid JSON", p);
  auto t = SamplingTrajectory::from_json(j);
  t.validate();
  return t;
}

ComplexVolume basis_volume(const SubspaceBasis& b) {
  ComplexVolume v({b.d, b.n});
  for (std::size_t i = 0; i < b.u.size(); ++i) v[i] = b.u[i];
  return v;
}

SubspaceBasis basis_from_volume(const ComplexVolume& v) {
  if (v.rank() != 2) throw ShapeError("basis array must have two axes");
  SubspaceBasis b{v.extent(1), v.extent(0), std::vector<double>(v.size())};
  for (std::size_t i = 0; i < v.size(); ++i) b.u[i] = v[i].real();
  return b;
}

Shape image_shape_of_coils(const CoilSensitivities& c) { return c.shape(); }

struct SimInputs {
  CoilSensitivities coils;
  SamplingTrajectory trajectory;
  SamplingTrajectory true_trajectory;
  MotionTrajectory true_motion;
  SubspaceBasis basis;
  ComplexVolume phantom;
  ComplexVolume kspace;
};

SimInputs load_sim(const fs::path& dir) {
  verify_manifest(dir);
  SimInputs s;
  s.coils = CoilSensitivities::from_stacked(read_array(dir / "coils.mtta"));
  s.trajectory = load_trajectory(dir / "trajectory.json");
  s.true_trajectory = load_trajectory(dir / "true_trajectory.json");
  s.true_motion = MotionTrajectory::load_csv(dir / "motion_true.csv");
  s.basis = basis_from_volume(read_array(dir / "basis.mtta"));
  s.phantom = read_array(dir / "phantom.mtta");
  s.kspace = read_array(dir / "kspace.mtta");
  return s;
}

// Without --config, commands reading a simulate directory inherit its stored config.
RunConfig load_config(const std::string& path, const std::string& in_dir, const std::optional<std::uint64_t>& seed) {
  RunConfig cfg;
  if (!path.empty())
    cfg = RunConfig::load(path);
  else if (!in_dir.empty() && fs::exists(fs::path(in_dir) / "config.json"))
    cfg = RunConfig::load(fs::path(in_dir) / "config.json");
  if (seed) cfg.seed = *seed;
  return cfg;
}

int cmd_simulate(const RunConfig& cfg, const fs::path& out) {
  make_out_dir(out);
  const Trial t = make_trial(cfg.spec, cfg.level, cfg.seed);
  const auto& sc = t.scenario;
  save_json(out / "config.json", cfg.to_json());
  write_array(t.image, out / "phantom.mtta");
  write_array(t.coils.stacked(), out / "coils.mtta");
  UndersamplingMask mask;
  mask.plane = sc.shot_trajectory.plane;
  mask.acceleration = cfg.spec.acceleration;
  mask.grid.assign(mask.plane.size(), 0);
  for (auto l : sc.shot_trajectory.lines()) mask.grid[l] = 1;
  write_array(mask.to_volume(), out / "mask.mtta");
  write_array(basis_volume(t.basis), out / "basis.mtta");
  save_json(out / "trajectory.json", sc.shot_trajectory.to_json());
  save_json(out / "true_trajectory.json", sc.trajectory.to_json());
  sc.motion.save_csv(out / "motion_true.csv");
  write_array(t.kspace, out / "kspace.mtta", {"coil", "line", "readout"});
  write_manifest(out, "simulate", cfg.seed,
                 {"config.json", "phantom.mtta", "coils.mtta", "mask.mtta", "basis.mtta", "trajectory.json",
                  "true_trajectory.json", "motion_true.csv", "kspace.mtta"});
  return 0;
}

int cmd_estimate(const RunConfig& cfg, const fs::path& in, const fs::path& out, const std::string& method) {
  const SimInputs s = load_sim(in);
  make_out_dir(out);
  const Shape shape = image_shape_of_coils(s.coils);
  const MotionOperator op(shape, s.coils, s.trajectory);
  const auto recon = make_reconstructor(cfg.reconstructor, s.basis, shape, double(op.num_points()));
  TTTConfig tcfg = cfg.spec.ttt;
  tcfg.intra_shot = cfg.spec.intra_shot;
  save_json(out / "config.json", cfg.to_json());

  if (method == "ttt") {
    const auto res = run_full(op, s.kspace, *recon, tcfg);
    res.motion.save_csv(out / "motion_est.csv");
    save_json(out / "trajectory_est.json", res.trajectory.to_json());
    save_report_csv(res.report, out / "dc_report.csv");
    save_trace_csv(res.trace, out / "loss_trace.csv");
  } else {
    const auto res = altopt(op, s.kspace, cfg.spec.altopt);
    const auto report = dc_loss_per_state(op, s.kspace, res.motion, *recon, tcfg.dc_threshold, tcfg.density_compensation);
    res.motion.save_csv(out / "motion_est.csv");
    save_json(out / "trajectory_est.json", s.trajectory.to_json());
    save_report_csv(report, out / "dc_report.csv");
    std::vector<TraceRow> trace;
    for (std::size_t i = 0; i < res.trace.size(); ++i) trace.push_back({"altopt", int(i), int(i), res.trace[i], 0.0});
    save_trace_csv(trace, out / "loss_trace.csv");
  }
  write_manifest(out, "estimate", tcfg.seed,
                 {"config.json", "motion_est.csv", "trajectory_est.json", "dc_report.csv", "loss_trace.csv"});
  return 0;
}

int cmd_reconstruct(const RunConfig& cfg, const fs::path& in, const std::string& estimate_dir, const fs::path& out,
                    bool known, bool no_correction, bool threshold) {
  const SimInputs s = load_sim(in);
  const Shape shape = image_shape_of_coils(s.coils);
  SamplingTrajectory traj = s.trajectory;
  MotionTrajectory motion;
  std::vector<int> excluded;
  std::string source;
  if (known) {
    traj = s.true_trajectory;
    motion = s.true_motion;
    source = "known";
  } else if (no_correction) {
    motion = MotionTrajectory(shape.size(), std::size_t(traj.num_states));
    source = "none";
  } else {
    if (estimate_dir.empty()) throw ConfigError("reconstruct needs --estimate, --known-motion or --no-correction");
    const fs::path est(estimate_dir);
    verify_manifest(est);
    traj = load_trajectory(est / "trajectory_est.json");
    motion = MotionTrajectory::load_csv(est / "motion_est.csv");
    source = "estimated";
    if (threshold) {
      const auto table = read_csv(est / "dc_report.csv");
      const auto cs = table.column("state"), cf = table.column("flagged");
      for (const auto& row : table.rows)
        if (row.at(cf) == "1") excluded.push_back(std::stoi(row.at(cs)));
    }
  }
  if (threshold && source != "estimated") throw ConfigError("--threshold needs estimated motion");
  if (traj.lines() != s.trajectory.lines()) throw ShapeError("trajectory does not cover the measured lines");
  make_out_dir(out);
  const MotionOperator op(shape, s.coils, traj);
  if (motion.size() != op.num_states()) throw ShapeError("motion CSV does not match the trajectory");

  ComplexVolume image;
  const auto kind = parse_recon_kind(cfg.solver_method);
  if (kind == ReconKind::L1) {
    image = l1_reconstruct(op, s.kspace, motion, cfg.spec.l1, excluded).image;
  } else {
    const auto prior = make_reconstructor(cfg.reconstructor, s.basis, shape, double(op.num_points()));
    ComplexVolume ym = s.kspace;
    const auto mask = op.point_mask(excluded);
    for (std::size_t i = 0; i < ym.size(); ++i) ym[i] *= mask[i % mask.size()];
    const auto x0 = prior->apply(op.corrected_zf(ym, motion));
    image = dc_layer_refine(op, s.kspace, motion, x0, cfg.spec.dc_layer, excluded).image;
  }
  save_json(out / "config.json", cfg.to_json());
  write_array(image, out / "recon.mtta");
  Json metrics;
  metrics["psnr"] = psnr(s.phantom, image);
  metrics["motion"] = source;
  metrics["threshold"] = threshold;
  metrics["flagged_count"] = excluded.size();
  metrics["solver"] = cfg.solver_method;
  write_file(out / "metrics.json", metrics.dump(2) + "\n");
  write_manifest(out, "reconstruct", cfg.seed, {"config.json", "recon.mtta", "metrics.json"});
  return 0;
}

std::vector<long long> theory_grid(const TheoryConfig& t) {
  std::vector<long long> g;
  for (long long v = t.grid_min; v <= t.grid_max; ++v) g.push_back(v);
  return g;
}

int cmd_theory_landscape(const RunConfig& cfg, const fs::path& out) {
  make_out_dir(out);
  const auto& t = cfg.theory;
  const auto grid = theory_grid(t);
  std::vector<LandscapeSweep> mean;
  for (int draw = 0; draw < t.draws; ++draw) {
    const auto model = make_subspace_model(t.params, cfg.seed + std::uint64_t(draw));
    const auto y = simulate_measurements(model);
    for (std::size_t a = 0; a < t.params.b; ++a) {
      auto sw = sweep_landscape(model, y, grid, a);
      if (draw == 0) {
        mean.push_back(std::move(sw));
        continue;
      }
      for (std::size_t i = 0; i < grid.size(); ++i) mean[a].losses[i] += sw.losses[i];
    }
  }
  for (auto& sw : mean)
    for (auto& v : sw.losses) v /= double(t.draws);
  save_json(out / "config.json", cfg.to_json());
  write_file(out / "landscape.csv", landscape_csv(mean));
  write_manifest(out, "theory landscape", cfg.seed, {"config.json", "landscape.csv"});
  return 0;
}

int cmd_theory_verify(const RunConfig& cfg, const fs::path& out) {
  make_out_dir(out);
  const auto& t = cfg.theory;
  Json draws = Json::array();
  int at_truth = 0, within = 0;
  double ordered = 0.0;
  for (int draw = 0; draw < t.draws; ++draw) {
    const auto model = make_subspace_model(t.params, cfg.seed + std::uint64_t(draw));
    const auto y = simulate_measurements(model);
    const auto rep = theorem1_check(model, y, t.c_diag, t.random_draws, cfg.seed + 7919u * std::uint64_t(draw + 1));
    at_truth += rep.argmin_at_truth;
    within += rep.within_bound;
    ordered += rep.ordered_fraction;
    draws.push_back(Json::parse(rep.to_json().dump()));
  }
  Json j;
  j["draws"] = t.draws;
  j["global_min_fraction"] = double(at_truth) / t.draws;
  j["within_bound_fraction"] = double(within) / t.draws;
  j["mean_ordered_fraction"] = ordered / t.draws;
  j["per_draw"] = draws;
  save_json(out / "config.json", cfg.to_json());
  write_file(out / "theorem1.json", j.dump(2) + "\n");
  write_manifest(out, "theory verify", cfg.seed, {"config.json", "theorem1.json"});
  return 0;
}

int cmd_baseline(const RunConfig& cfg, const fs::path& out) {
  make_out_dir(out);
  std::vector<Method> methods;
  for (const auto& m : cfg.experiment.methods) methods.push_back(parse_method(m));
  std::vector<ExperimentRow> rows;
  for (const auto& level : cfg.experiment.levels) {
    auto r = run_experiment(cfg.spec, level, methods, parse_recon_kind(cfg.solver_method), cfg.experiment.seeds);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  save_json(out / "config.json", cfg.to_json());
  write_file(out / "results.csv", experiment_csv(rows));
  write_manifest(out, "baseline", cfg.seed, {"config.json", "results.csv"});
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const fs::path& out) {
  make_out_dir(out);
  const auto rows = sweep_nsplits(cfg.spec, cfg.experiment.levels, cfg.experiment.n_splits, cfg.experiment.seeds);
  save_json(out / "config.json", cfg.to_json());
  write_file(out / "nsplits.csv", nsplits_csv(rows));
  write_manifest(out, "sweep", cfg.seed, {"config.json", "nsplits.csv"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion estimation and correction for multi-shot MRI"};
  app.require_subcommand(1);
  std::string config_path, out_dir, in_dir, estimate_dir, method = "ttt";
  std::optional<std::uint64_t> seed;
  bool known = false, no_correction = false, threshold = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--seed", seed, "Seed overriding data.seed");
  };
  auto* simulate = app.add_subcommand("simulate", "Simulate a motion-corrupted acquisition");
  common(simulate);
  auto* estimate = app.add_subcommand("estimate", "Estimate motion from simulated k-space");
  common(estimate);
  estimate->add_option("--in", in_dir, "Directory written by simulate")->required();
  estimate->add_option("--method", method, "ttt or altopt")->check(CLI::IsMember({"ttt", "altopt"}));
  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct an image from k-space and motion");
  common(reconstruct);
  reconstruct->add_option("--in", in_dir, "Directory written by simulate")->required();
  reconstruct->add_option("--estimate", estimate_dir, "Directory written by estimate");
  auto* k_opt = reconstruct->add_flag("--known-motion", known, "Use the ground-truth motion");
  auto* n_opt = reconstruct->add_flag("--no-correction", no_correction, "Assume no motion");
  k_opt->excludes(n_opt);
  n_opt->excludes(k_opt);
  reconstruct->add_flag("--threshold", threshold, "Drop states flagged by the DC report");
  auto* theory = app.add_subcommand("theory", "Subspace shift model experiments");
  theory->require_subcommand(1);
  auto* landscape = theory->add_subcommand("landscape", "Loss landscape over the first shift");
  common(landscape);
  auto* verify = theory->add_subcommand("verify", "Empirical global-minimum check");
  common(verify);
  auto* baseline = app.add_subcommand("baseline", "Compare correction methods over severity levels");
  common(baseline);
  auto* sweep = app.add_subcommand("sweep", "Intra-shot split-count sweep");
  common(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const RunConfig cfg = load_config(config_path, in_dir, seed);
    const fs::path out(out_dir);
    if (simulate->parsed()) return cmd_simulate(cfg, out);
    if (estimate->parsed()) return cmd_estimate(cfg, in_dir, out, method);
    if (reconstruct->parsed())
      return cmd_reconstruct(cfg, in_dir, estimate_dir, out, known, no_correction, threshold);
    if (landscape->parsed()) return cmd_theory_landscape(cfg, out);
    if (verify->parsed()) return cmd_theory_verify(cfg, out);
    if (baseline->parsed()) return cmd_baseline(cfg, out);
    if (sweep->parsed()) return cmd_sweep(cfg, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ArrayFormatError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ExternalError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
