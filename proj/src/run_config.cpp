#include "mttt/run_config.hpp"

#include <fstream>
#include <sstream>

#include "mttt/array_io.hpp"

namespace mttt {

namespace {

using Json = nlohmann::json;

void reject_unknown(const Json& j, const std::string& section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError("unknown key '" + section + "." + k + "'");
  }
}

std::string phantom_name(PhantomKind k) { return k == PhantomKind::Ellipses ? "ellipses" : "subspace"; }

Json level_json(const SeverityLevel& l) { return Json::array({l.n_events, l.m_max}); }

SeverityLevel level_from(const Json& j) {
  if (j.is_string()) return parse_level(j.get<std::string>());
  if (j.is_array() && j.size() == 2) {
    SeverityLevel l{j[0].get<int>(), j[1].get<double>()};
    if (l.n_events < 0 || l.m_max < 0) throw ConfigError("severity level must be non-negative");
    return l;
  }
  throw ConfigError("severity level must be [n_events, m_max] or \"n_events,m_max\"");
}

}  // namespace

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["data"] = {{"shape", spec.shape},
               {"coils", spec.coils},
               {"phantom", phantom_name(spec.phantom)},
               {"subspace_dim", spec.subspace_dim},
               {"smoothness", spec.smoothness},
               {"seed", seed}};
  j["mask"] = {{"kind", to_string(spec.mask)}, {"acceleration", spec.acceleration}};
  j["trajectory"] = {{"shots", spec.shots}, {"order", to_string(spec.order)}};
  j["motion"] = {{"level", level_json(level)}, {"intra_shot", spec.intra_shot}};
  j["reconstructor"] = {{"kind", reconstructor.kind},
                        {"tau", reconstructor.tau},
                        {"levels", reconstructor.levels},
                        {"slice_wise", reconstructor.slice_wise},
                        {"slice_axis", reconstructor.slice_axis},
                        {"command", reconstructor.command},
                        {"timeout_ms", reconstructor.timeout_ms}};
  j["ttt"] = mttt::to_json(spec.ttt);
  j["solver"] = {{"method", solver_method},
                 {"l1", mttt::to_json(spec.l1)},
                 {"dc_layer", mttt::to_json(spec.dc_layer)},
                 {"altopt", mttt::to_json(spec.altopt)}};
  j["theory"] = {{"n", theory.params.n},
                 {"d", theory.params.d},
                 {"b", theory.params.b},
                 {"k", theory.params.k},
                 {"random_shifts", theory.params.random_shifts},
                 {"draws", theory.draws},
                 {"grid_min", theory.grid_min},
                 {"grid_max", theory.grid_max},
                 {"c_diag", theory.c_diag},
                 {"random_draws", theory.random_draws}};
  Json levels = Json::array();
  for (const auto& l : experiment.levels) levels.push_back(level_json(l));
  j["experiment"] = {{"levels", levels},
                     {"methods", experiment.methods},
                     {"seeds", experiment.seeds},
                     {"n_splits", experiment.n_splits}};
  j["output"] = Json::object();
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    reject_unknown(j, "config",
                   {"data", "mask", "trajectory", "motion", "reconstructor", "ttt", "solver", "theory", "experiment",
                    "output"});
    if (j.contains("data")) {
      const auto& d = j["data"];
      reject_unknown(d, "data", {"shape", "coils", "phantom", "subspace_dim", "smoothness", "seed"});
      if (d.contains("shape")) c.spec.shape = d["shape"].get<Shape>();
      if (d.contains("coils")) c.spec.coils = d["coils"].get<std::size_t>();
      if (d.contains("phantom")) c.spec.phantom = parse_phantom_kind(d["phantom"].get<std::string>());
      if (d.contains("subspace_dim")) c.spec.subspace_dim = d["subspace_dim"].get<std::size_t>();
      if (d.contains("smoothness")) c.spec.smoothness = d["smoothness"].get<double>();
      if (d.contains("seed")) c.seed = d["seed"].get<std::uint64_t>();
      if (c.spec.shape.size() < 2 || c.spec.shape.size() > 3) throw ConfigError("data.shape must have 2 or 3 axes");
      validate_shape(c.spec.shape);
      if (c.spec.coils == 0) throw ConfigError("data.coils must be positive");
    }
    if (j.contains("mask")) {
      const auto& m = j["mask"];
      reject_unknown(m, "mask", {"kind", "acceleration"});
      if (m.contains("kind")) c.spec.mask = parse_mask_kind(m["kind"].get<std::string>());
      if (m.contains("acceleration")) c.spec.acceleration = m["acceleration"].get<double>();
      if (!(c.spec.acceleration >= 1.0)) throw ConfigError("mask.acceleration must be >= 1");
    }
    if (j.contains("trajectory")) {
      const auto& t = j["trajectory"];
      reject_unknown(t, "trajectory", {"shots", "order"});
      if (t.contains("shots")) c.spec.shots = t["shots"].get<std::size_t>();
      if (t.contains("order")) c.spec.order = parse_trajectory_order(t["order"].get<std::string>());
      if (c.spec.shots == 0) throw ConfigError("trajectory.shots must be positive");
    }
    if (j.contains("motion")) {
      const auto& m = j["motion"];
      reject_unknown(m, "motion", {"level", "intra_shot"});
      if (m.contains("level")) c.level = level_from(m["level"]);
      if (m.contains("intra_shot")) c.spec.intra_shot = m["intra_shot"].get<bool>();
    }
    if (j.contains("reconstructor")) {
      const auto& r = j["reconstructor"];
      reject_unknown(r, "reconstructor", {"kind", "tau", "levels", "slice_wise", "slice_axis", "command", "timeout_ms"});
      auto& rc = c.reconstructor;
      if (r.contains("kind")) rc.kind = r["kind"].get<std::string>();
      if (r.contains("tau")) rc.tau = r["tau"].get<double>();
      if (r.contains("levels")) rc.levels = r["levels"].get<int>();
      if (r.contains("slice_wise")) rc.slice_wise = r["slice_wise"].get<bool>();
      if (r.contains("slice_axis")) rc.slice_axis = r["slice_axis"].get<std::size_t>();
      if (r.contains("command")) rc.command = r["command"].get<std::vector<std::string>>();
      if (r.contains("timeout_ms")) rc.timeout_ms = r["timeout_ms"].get<int>();
      if (rc.kind != "subspace" && rc.kind != "wavelet" && rc.kind != "identity" && rc.kind != "external")
        throw ConfigError("reconstructor.kind must be subspace, wavelet, identity or external");
      if (rc.kind == "external" && rc.command.empty()) throw ConfigError("reconstructor.command is required");
      if (rc.timeout_ms <= 0) throw ConfigError("reconstructor.timeout_ms must be positive");
    }
    if (j.contains("ttt")) mttt::from_json(j["ttt"], c.spec.ttt);
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      reject_unknown(s, "solver", {"method", "l1", "dc_layer", "altopt"});
      if (s.contains("method")) c.solver_method = s["method"].get<std::string>();
      parse_recon_kind(c.solver_method);
      if (s.contains("l1")) mttt::from_json(s["l1"], c.spec.l1);
      if (s.contains("dc_layer")) mttt::from_json(s["dc_layer"], c.spec.dc_layer);
      if (s.contains("altopt")) mttt::from_json(s["altopt"], c.spec.altopt);
    }
    if (j.contains("theory")) {
      const auto& t = j["theory"];
      reject_unknown(t, "theory",
                     {"n", "d", "b", "k", "random_shifts", "draws", "grid_min", "grid_max", "c_diag", "random_draws"});
      auto& tc = c.theory;
      if (t.contains("n")) tc.params.n = t["n"].get<std::size_t>();
      if (t.contains("d")) tc.params.d = t["d"].get<std::size_t>();
      if (t.contains("b")) tc.params.b = t["b"].get<std::size_t>();
      if (t.contains("k")) tc.params.k = t["k"].get<double>();
      if (t.contains("random_shifts")) tc.params.random_shifts = t["random_shifts"].get<bool>();
      if (t.contains("draws")) tc.draws = t["draws"].get<int>();
      if (t.contains("grid_min")) tc.grid_min = t["grid_min"].get<long long>();
      if (t.contains("grid_max")) tc.grid_max = t["grid_max"].get<long long>();
      if (t.contains("c_diag")) tc.c_diag = t["c_diag"].get<double>();
      if (t.contains("random_draws")) tc.random_draws = t["random_draws"].get<std::size_t>();
      if (tc.draws < 1) throw ConfigError("theory.draws must be >= 1");
      if (tc.grid_min > tc.grid_max) throw ConfigError("theory.grid_min must not exceed grid_max");
      if (tc.params.n == 0 || tc.params.d == 0 || tc.params.b == 0 || tc.params.d > tc.params.n ||
          !(tc.params.k > 0.0) || tc.params.k > double(tc.params.n))
        throw ConfigError("theory: need n, d, b > 0, d <= n and 0 < k <= n");
    }
    if (j.contains("experiment")) {
      const auto& e = j["experiment"];
      reject_unknown(e, "experiment", {"levels", "methods", "seeds", "n_splits"});
      auto& ec = c.experiment;
      if (e.contains("levels")) {
        ec.levels.clear();
        for (const auto& l : e["levels"]) ec.levels.push_back(level_from(l));
      }
      if (e.contains("methods")) ec.methods = e["methods"].get<std::vector<std::string>>();
      for (const auto& m : ec.methods) parse_method(m);
      if (e.contains("seeds")) ec.seeds = e["seeds"].get<std::vector<std::uint64_t>>();
      if (e.contains("n_splits")) ec.n_splits = e["n_splits"].get<std::vector<int>>();
      for (int n : ec.n_splits)
        if (n < 1) throw ConfigError("experiment.n_splits entries must be >= 1");
    }
    if (j.contains("output")) reject_unknown(j["output"], "output", {});
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config", path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
  return from_json(j);
}

std::unique_ptr<Reconstructor> make_reconstructor(const ReconstructorConfig& cfg, const SubspaceBasis& basis,
                                                  const Shape& shape, double sampled) {
  if (cfg.kind == "subspace") return std::make_unique<SubspaceProjector>(basis, shape, sampled);
  if (cfg.kind == "wavelet")
    return std::make_unique<HaarDenoiser>(cfg.tau, cfg.levels,
                                          cfg.slice_wise ? HaarDenoiser::Mode::SliceWise : HaarDenoiser::Mode::Native,
                                          cfg.slice_axis);
  if (cfg.kind == "identity") return std::make_unique<IdentityReconstructor>();
  if (cfg.kind == "external")
    return std::make_unique<ExternalReconstructor>(cfg.command, shape, std::chrono::milliseconds(cfg.timeout_ms));
  throw ConfigError("unknown reconstructor kind: " + cfg.kind);
}

}  // namespace mttt
