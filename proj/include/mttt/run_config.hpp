#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mttt/reconstructor.hpp"
#include "mttt/simharness.hpp"
#include "mttt/theory.hpp"

namespace mttt {

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ReconstructorConfig {
  std::string kind = "subspace";  // subspace | wavelet | identity | external
  double tau = 0.05;
  int levels = 2;
  bool slice_wise = false;
  std::size_t slice_axis = 2;
  std::vector<std::string> command;
  int timeout_ms = 30000;
};

struct TheoryConfig {
  TheoryParams params;
  int draws = 1;
  long long grid_min = -40;
  long long grid_max = 40;
  double c_diag = 1.0;
  std::size_t random_draws = 100;
};

struct ExperimentConfig {
  std::vector<SeverityLevel> levels{{1, 2}};
  std::vector<std::string> methods{"known", "none", "ttt", "ttt+th", "altopt", "altopt+th"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<int> n_splits{5, 10, 20};
};

/// Declarative configuration shared by every CLI command. Sections: data,
/// mask, trajectory, motion, reconstructor, ttt, solver, theory, experiment,
/// output. Every field has a default; unknown keys are rejected.
struct RunConfig {
  ExperimentSpec spec;
  SeverityLevel level{1, 2};
  std::uint64_t seed = 0;
  ReconstructorConfig reconstructor;
  std::string solver_method = "l1";
  TheoryConfig theory;
  ExperimentConfig experiment;

  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

std::unique_ptr<Reconstructor> make_reconstructor(const ReconstructorConfig& cfg, const SubspaceBasis& basis,
                                                  const Shape& shape, double sampled);

}  // namespace mttt
