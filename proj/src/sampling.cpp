#include "mttt/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace mttt {

bool PhaseEncodePlane::in_center_block(std::size_t line) const {
  const auto dx = static_cast<long>(kx(line)) - static_cast<long>(nx / 2);
  const auto dy = static_cast<long>(ky(line)) - static_cast<long>(ny / 2);
  return std::abs(dx) <= 1 && std::abs(dy) <= 1;
}

double PhaseEncodePlane::center_distance(std::size_t line) const {
  const double dx = double(kx(line)) - double(nx / 2);
  const double dy = double(ky(line)) - double(ny / 2);
  return std::hypot(dx, dy);
}

PhaseEncodePlane plane_for(const Shape& image_shape) {
  if (image_shape.size() == 2) return {image_shape[0], image_shape[1]};
  if (image_shape.size() == 3) return {image_shape[0], image_shape[1]};
  throw ShapeError("image must be 2D or 3D, got " + shape_string(image_shape));
}

std::size_t readout_length(const Shape& image_shape) {
  return image_shape.size() == 3 ? image_shape[2] : 1;
}

MaskKind parse_mask_kind(const std::string& s) {
  if (s == "interleaved-columns") return MaskKind::InterleavedColumns;
  if (s == "uniform-random") return MaskKind::UniformRandom;
  throw Error("unknown mask kind: " + s);
}

std::string to_string(MaskKind k) {
  return k == MaskKind::InterleavedColumns ? "interleaved-columns" : "uniform-random";
}

std::size_t UndersamplingMask::count() const {
  return static_cast<std::size_t>(std::count(grid.begin(), grid.end(), std::uint8_t{1}));
}

std::vector<std::size_t> UndersamplingMask::lines() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i]) out.push_back(i);
  return out;
}

ComplexVolume UndersamplingMask::to_volume() const {
  ComplexVolume v(Shape{plane.nx, plane.ny});
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = grid[i] ? 1.0 : 0.0;
  return v;
}

UndersamplingMask UndersamplingMask::from_volume(const ComplexVolume& v, double acceleration) {
  if (v.rank() != 2) throw ShapeError("mask volume must be 2D");
  UndersamplingMask m;
  m.plane = {v.extent(0), v.extent(1)};
  m.acceleration = acceleration;
  m.grid.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) m.grid[i] = std::abs(v[i]) > 0.5 ? 1 : 0;
  return m;
}

UndersamplingMask make_mask(const PhaseEncodePlane& plane, double acceleration, MaskKind kind,
                            std::uint64_t seed) {
  if (!(acceleration >= 1.0)) throw Error("make_mask: acceleration must be >= 1");
  if (plane.size() == 0) throw ShapeError("make_mask: empty plane");
  UndersamplingMask mask;
  mask.plane = plane;
  mask.acceleration = acceleration;
  mask.grid.assign(plane.size(), 0);
  const double total = double(plane.size());
  const auto target = static_cast<std::size_t>(std::llround(total / acceleration));
  if (target == 0) throw Error("make_mask: acceleration too large for the grid");

  if (acceleration == 1.0) {
    std::fill(mask.grid.begin(), mask.grid.end(), 1);
    return mask;
  }
  for (std::size_t i = 0; i < plane.size(); ++i)
    if (plane.in_center_block(i)) mask.grid[i] = 1;

  if (kind == MaskKind::UniformRandom) {
    const std::size_t forced = mask.count();
    if (forced > target) throw Error("make_mask: acceleration too large for the forced center block");
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < plane.size(); ++i)
      if (!mask.grid[i]) rest.push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(rest.begin(), rest.end(), rng);
    for (std::size_t i = 0; i < target - forced; ++i) mask.grid[rest[i]] = 1;
  } else {
    const auto step = static_cast<std::size_t>(std::llround(acceleration));
    const std::size_t cy = plane.ny / 2;
    for (std::size_t kx = 0; kx < plane.nx; ++kx)
      for (std::size_t ky = 0; ky < plane.ny; ++ky)
        if ((ky + step * plane.ny - cy) % step == 0) mask.grid[plane.flat(kx, ky)] = 1;
  }

  const double fraction = mask.sampled_fraction();
  const double nominal = 1.0 / acceleration;
  if (std::abs(fraction - nominal) > 0.1 * nominal + 1e-12)
    throw Error("make_mask: acceleration " + std::to_string(acceleration) +
                " not attainable on this grid (sampled fraction " + std::to_string(fraction) + ")");
  return mask;
}

TrajectoryOrder parse_trajectory_order(const std::string& s) {
  if (s == "interleaved") return TrajectoryOrder::Interleaved;
  if (s == "random") return TrajectoryOrder::Random;
  if (s == "linear") return TrajectoryOrder::Linear;
  if (s == "deterministic-radius" || s == "deterministic") return TrajectoryOrder::DeterministicRadius;
  throw Error("unknown trajectory order: " + s);
}

std::string to_string(TrajectoryOrder o) {
  switch (o) {
    case TrajectoryOrder::Interleaved: return "interleaved";
    case TrajectoryOrder::Random: return "random";
    case TrajectoryOrder::Linear: return "linear";
    case TrajectoryOrder::DeterministicRadius: return "deterministic-radius";
  }
  return "?";
}

std::vector<std::size_t> SamplingTrajectory::lines() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < line_to_state.size(); ++i)
    if (line_to_state[i] >= 0) out.push_back(i);
  return out;
}

std::vector<int> SamplingTrajectory::states_of_lines() const {
  std::vector<int> out;
  for (int s : line_to_state)
    if (s >= 0) out.push_back(s);
  return out;
}

std::size_t SamplingTrajectory::line_count() const {
  return static_cast<std::size_t>(
      std::count_if(line_to_state.begin(), line_to_state.end(), [](int s) { return s >= 0; }));
}

std::vector<std::size_t> SamplingTrajectory::state_line_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_states, 0)), 0);
  for (int s : line_to_state)
    if (s >= 0 && s < num_states) ++counts[static_cast<std::size_t>(s)];
  return counts;
}

void SamplingTrajectory::validate() const {
  if (line_to_state.size() != plane.size()) throw Error("trajectory: line_to_state size mismatch");
  std::vector<std::uint8_t> seen(plane.size(), 0);
  std::size_t in_shots = 0;
  for (const auto& shot : shots) {
    for (auto line : shot) {
      if (line >= plane.size()) throw Error("trajectory: line index out of range");
      if (seen[line]) throw Error("trajectory: line " + std::to_string(line) + " in two shots");
      seen[line] = 1;
      ++in_shots;
      if (line_to_state[line] < 0) throw Error("trajectory: line without motion state");
    }
  }
  if (in_shots != line_count()) throw Error("trajectory: state assigned to a line outside all shots");
  std::vector<std::uint8_t> used(static_cast<std::size_t>(std::max(num_states, 0)), 0);
  for (int s : line_to_state) {
    if (s >= num_states) throw Error("trajectory: state index out of range");
    if (s >= 0) used[static_cast<std::size_t>(s)] = 1;
  }
  for (std::size_t s = 0; s < used.size(); ++s)
    if (!used[s]) throw Error("trajectory: state " + std::to_string(s) + " has no lines");
}

void SamplingTrajectory::validate_against(const UndersamplingMask& mask) const {
  validate();
  if (!(mask.plane == plane)) throw Error("trajectory: plane differs from mask");
  for (std::size_t i = 0; i < plane.size(); ++i)
    if ((line_to_state[i] >= 0) != (mask.grid[i] != 0))
      throw Error("trajectory: shots do not cover the mask support exactly");
}

nlohmann::json SamplingTrajectory::to_json() const {
  nlohmann::ordered_json j;
  j["plane"] = {plane.nx, plane.ny};
  j["num_states"] = num_states;
  j["shots"] = shots;
  nlohmann::ordered_json map = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < line_to_state.size(); ++i)
    if (line_to_state[i] >= 0) map[std::to_string(i)] = line_to_state[i];
  j["line_to_state"] = map;
  return j;
}

SamplingTrajectory SamplingTrajectory::from_json(const nlohmann::json& j) {
  SamplingTrajectory t;
  const auto plane = j.at("plane").get<std::vector<std::size_t>>();
  if (plane.size() != 2) throw Error("trajectory json: plane must have two extents");
  t.plane = {plane[0], plane[1]};
  t.num_states = j.at("num_states").get<int>();
  t.shots = j.at("shots").get<std::vector<std::vector<std::size_t>>>();
  t.line_to_state.assign(t.plane.size(), -1);
  for (const auto& [key, value] : j.at("line_to_state").items()) {
    const auto line = static_cast<std::size_t>(std::stoull(key));
    if (line >= t.plane.size()) throw Error("trajectory json: line out of range");
    t.line_to_state[line] = value.get<int>();
  }
  t.validate();
  return t;
}

namespace {

std::vector<std::vector<std::size_t>> split_contiguous(const std::vector<std::size_t>& order,
                                                       std::size_t num_shots) {
  std::vector<std::vector<std::size_t>> shots(num_shots);
  const std::size_t base = order.size() / num_shots;
  const std::size_t extra = order.size() % num_shots;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < num_shots; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    shots[s].assign(order.begin() + long(pos), order.begin() + long(pos + len));
    pos += len;
  }
  return shots;
}

// Greedy order that keeps the mean center distance of consecutive lines close
// to the global mean, so a far line tends to be followed by a near one.
std::vector<std::size_t> radius_balanced_order(const PhaseEncodePlane& plane,
                                               std::vector<std::size_t> head,
                                               std::vector<std::size_t> rest) {
  double mean = 0.0;
  for (auto l : rest) mean += plane.center_distance(l);
  if (!rest.empty()) mean /= double(rest.size());
  std::vector<std::size_t> order = std::move(head);
  std::vector<double> dist(rest.size());
  for (std::size_t i = 0; i < rest.size(); ++i) dist[i] = plane.center_distance(rest[i]);
  std::vector<std::uint8_t> taken(rest.size(), 0);
  double prev = order.empty() ? mean : plane.center_distance(order.back());
  for (std::size_t step = 0; step < rest.size(); ++step) {
    std::size_t best = rest.size();
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rest.size(); ++i) {
      if (taken[i]) continue;
      const double cost = std::abs(0.5 * (prev + dist[i]) - mean);
      if (cost < best_cost) {
        best_cost = cost;
        best = i;
      }
    }
    taken[best] = 1;
    order.push_back(rest[best]);
    prev = dist[best];
  }
  return order;
}

}  // namespace

SamplingTrajectory make_trajectory(const UndersamplingMask& mask, std::size_t num_shots,
                                   TrajectoryOrder order, std::uint64_t seed, bool center_first) {
  if (num_shots == 0) throw Error("make_trajectory: shot count must be positive");
  const auto lines = mask.lines();
  if (num_shots > lines.size())
    throw Error("make_trajectory: more shots than sampled lines");
  const auto& plane = mask.plane;

  std::vector<std::size_t> center, rest;
  for (auto l : lines) {
    if (center_first && order != TrajectoryOrder::Linear && plane.in_center_block(l))
      center.push_back(l);
    else
      rest.push_back(l);
  }

  SamplingTrajectory traj;
  traj.plane = plane;
  switch (order) {
    case TrajectoryOrder::Interleaved: {
      traj.shots.assign(num_shots, {});
      traj.shots[0] = center;
      for (std::size_t j = 0; j < lines.size(); ++j) {
        if (center_first && plane.in_center_block(lines[j])) continue;
        traj.shots[j % num_shots].push_back(lines[j]);
      }
      break;
    }
    case TrajectoryOrder::Random: {
      std::mt19937_64 rng(seed);
      std::shuffle(rest.begin(), rest.end(), rng);
      std::vector<std::size_t> all = center;
      all.insert(all.end(), rest.begin(), rest.end());
      traj.shots = split_contiguous(all, num_shots);
      break;
    }
    case TrajectoryOrder::Linear: {
      std::vector<std::size_t> all = lines;
      std::stable_sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) {
        return std::make_pair(plane.ky(a), plane.kx(a)) < std::make_pair(plane.ky(b), plane.kx(b));
      });
      traj.shots = split_contiguous(all, num_shots);
      break;
    }
    case TrajectoryOrder::DeterministicRadius: {
      traj.shots = split_contiguous(radius_balanced_order(plane, center, rest), num_shots);
      break;
    }
  }
  for (const auto& shot : traj.shots)
    if (shot.empty()) throw Error("make_trajectory: empty shot; reduce the shot count");

  traj.line_to_state.assign(plane.size(), -1);
  for (std::size_t s = 0; s < traj.shots.size(); ++s)
    for (auto l : traj.shots[s]) traj.line_to_state[l] = static_cast<int>(s);
  traj.num_states = static_cast<int>(num_shots);
  traj.validate_against(mask);
  return traj;
}

}  // namespace mttt
