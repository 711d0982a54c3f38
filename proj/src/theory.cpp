#include "mttt/theory.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "mttt/csv.hpp"
#include "mttt/fft.hpp"

namespace mttt {

namespace {

long long wrap(long long v, std::size_t n) {
  const auto nn = static_cast<long long>(n);
  return ((v % nn) + nn) % nn;
}

cplx shift_phase(long long m, std::size_t j, std::size_t n) {
  const long long e = (wrap(m, n) * static_cast<long long>(j)) % static_cast<long long>(n);
  const double ang = 2.0 * std::numbers::pi * double(e) / double(n);
  return {std::cos(ang), std::sin(ang)};
}

std::vector<cplx> unitary_dft(std::vector<cplx> v, FftDirection dir) {
  const std::size_t n = v.size();
  fft_inplace(v, {n}, dir);
  const double s = 1.0 / std::sqrt(double(n));
  for (auto& z : v) z *= s;
  return v;
}

void check_shifts(const SubspaceModel& model, const std::vector<long long>& m) {
  if (m.size() != model.b)
    throw ShapeError("theory: expected " + std::to_string(model.b) + " shifts, got " + std::to_string(m.size()));
}

void check_measurements(const SubspaceModel& model, const BlockMeasurements& y) {
  if (y.size() != model.b) throw ShapeError("theory: measurement block count mismatch");
  for (std::size_t l = 0; l < model.b; ++l)
    if (y[l].size() != model.blocks[l].size()) throw ShapeError("theory: measurement block size mismatch");
}

}  // namespace

std::vector<double> SubspaceModel::signal() const { return basis.synthesize(c); }

SubspaceModel make_subspace_model(const TheoryParams& p, std::uint64_t seed) {
  if (p.n == 0 || p.d == 0 || p.b == 0) throw Error("theory: n, d and b must be positive");
  if (p.d > p.n) throw Error("theory: d must not exceed n");
  if (!(p.k > 0.0) || p.k > double(p.n)) throw Error("theory: k must lie in (0, n]");
  SubspaceModel m;
  m.n = p.n;
  m.d = p.d;
  m.b = p.b;
  m.k = p.k;
  std::mt19937_64 rng(seed);
  m.basis = gaussian_basis(p.n, p.d, rng());
  std::normal_distribution<double> coef(0.0, 1.0 / std::sqrt(double(p.d)));
  m.c.resize(p.d);
  for (auto& v : m.c) v = coef(rng);
  std::uniform_int_distribution<long long> shift(0, static_cast<long long>(p.n) - 1);
  m.m_star.assign(p.b, 0);
  if (p.random_shifts)
    for (auto& s : m.m_star) s = shift(rng);
  std::bernoulli_distribution keep(p.k / double(p.n));
  m.blocks.resize(p.b);
  for (auto& blk : m.blocks)
    for (std::size_t j = 0; j < p.n; ++j)
      if (keep(rng)) blk.push_back(j);
  return m;
}

BlockMeasurements simulate_measurements(const SubspaceModel& model) {
  const auto x = model.signal();
  std::vector<cplx> xc(x.begin(), x.end());
  const auto spec = unitary_dft(std::move(xc), FftDirection::Forward);
  BlockMeasurements y(model.b);
  for (std::size_t l = 0; l < model.b; ++l) {
    y[l].reserve(model.blocks[l].size());
    for (auto j : model.blocks[l]) y[l].push_back(shift_phase(model.m_star[l], j, model.n) * spec[j]);
  }
  return y;
}

std::vector<cplx> theory_reconstruct(const SubspaceModel& model, const BlockMeasurements& y,
                                     const std::vector<long long>& m) {
  check_shifts(model, m);
  check_measurements(model, y);
  std::vector<cplx> spec(model.n);
  for (std::size_t l = 0; l < model.b; ++l)
    for (std::size_t i = 0; i < model.blocks[l].size(); ++i) {
      const auto j = model.blocks[l][i];
      spec[j] += std::conj(shift_phase(m[l], j, model.n)) * y[l][i];
    }
  const auto z = unitary_dft(std::move(spec), FftDirection::Inverse);
  std::vector<double> re(model.n), im(model.n);
  for (std::size_t i = 0; i < model.n; ++i) {
    re[i] = z[i].real();
    im[i] = z[i].imag();
  }
  const auto pr = model.basis.synthesize(model.basis.project(re));
  const auto pi = model.basis.synthesize(model.basis.project(im));
  const double s = model.scale();
  std::vector<cplx> out(model.n);
  for (std::size_t i = 0; i < model.n; ++i) out[i] = s * cplx(pr[i], pi[i]);
  return out;
}

double theory_loss(const SubspaceModel& model, const BlockMeasurements& y, const std::vector<long long>& m) {
  const auto spec = unitary_dft(theory_reconstruct(model, y, m), FftDirection::Forward);
  double loss = 0.0;
  for (std::size_t l = 0; l < model.b; ++l)
    for (std::size_t i = 0; i < model.blocks[l].size(); ++i) {
      const auto j = model.blocks[l][i];
      loss += std::norm(shift_phase(m[l], j, model.n) * spec[j] - y[l][i]);
    }
  return loss;
}

std::size_t corruption_count(const SubspaceModel& model, const std::vector<long long>& m) {
  check_shifts(model, m);
  std::size_t a = 0;
  for (std::size_t l = 0; l < model.b; ++l)
    if (wrap(m[l], model.n) != wrap(model.m_star[l], model.n)) ++a;
  return a;
}

LandscapeSweep sweep_landscape(const SubspaceModel& model, const BlockMeasurements& y,
                               const std::vector<long long>& grid, std::size_t a, long long offset) {
  if (a + 1 > model.b) throw Error("sweep_landscape: a must be at most b - 1");
  if (offset < 0) offset = static_cast<long long>(model.n / 4);
  std::vector<long long> m = model.m_star;
  for (std::size_t l = 1; l <= a; ++l) m[l] = wrap(model.m_star[l] + offset, model.n);
  LandscapeSweep out;
  out.a = a;
  out.m1 = grid;
  for (long long v : grid) {
    m[0] = v;
    out.losses.push_back(theory_loss(model, y, m));
  }
  return out;
}

std::string landscape_csv(const std::vector<LandscapeSweep>& sweeps) {
  if (sweeps.empty()) throw Error("landscape_csv: no sweeps");
  std::vector<std::string> header{"m1"};
  for (const auto& s : sweeps) {
    if (s.m1 != sweeps.front().m1) throw Error("landscape_csv: sweeps use different grids");
    header.push_back("loss_a" + std::to_string(s.a));
  }
  CsvWriter w(header);
  for (std::size_t i = 0; i < sweeps.front().m1.size(); ++i) {
    std::vector<CsvWriter::Cell> row{sweeps.front().m1[i]};
    for (const auto& s : sweeps) row.emplace_back(s.losses[i]);
    w.add_row(row);
  }
  return w.str();
}

Theorem1Report theorem1_check(const SubspaceModel& model, const BlockMeasurements& y, double c_diag,
                              std::size_t random_draws, std::uint64_t seed) {
  const double n = double(model.n), b = double(model.b), d = double(model.d), k = model.k;
  const double rhs_sampling = c_diag * b * b * std::pow(std::log(n), 2) * (b + d) / n * n * n / (k * k * b * b);
  const double rhs_subspace = c_diag * std::sqrt(d / (b * k));

  Theorem1Report rep;
  rep.loss_truth = theory_loss(model, y, model.m_star);
  rep.bound_truth = 12.0 * std::sqrt(d / (b * k)) * (b * k / n);
  rep.within_bound = rep.loss_truth <= rep.bound_truth;

  auto add = [&](const std::vector<long long>& m) {
    Theorem1Entry e;
    e.m = m;
    e.a = corruption_count(model, m);
    e.lhs = std::pow(1.0 - double(e.a) / b, 2);
    e.rhs_sampling = rhs_sampling;
    e.rhs_subspace = rhs_subspace;
    e.loss = e.a == 0 ? rep.loss_truth : theory_loss(model, y, m);
    e.above_truth = e.loss > rep.loss_truth;
    rep.entries.push_back(std::move(e));
  };

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < model.n; ++s) {
    auto m = model.m_star;
    m[0] = static_cast<long long>(s);
    add(m);
    if (rep.entries.back().loss < best) {
      best = rep.entries.back().loss;
      rep.argmin_m1 = m[0];
    }
  }
  rep.argmin_at_truth = rep.argmin_m1 == wrap(model.m_star[0], model.n);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<long long> shift(0, static_cast<long long>(model.n) - 1);
  for (std::size_t r = 0; r < random_draws; ++r) {
    std::vector<long long> m(model.b);
    for (auto& v : m) v = shift(rng);
    add(m);
  }

  std::size_t off = 0, ordered = 0;
  for (const auto& e : rep.entries)
    if (e.a > 0) {
      ++off;
      if (e.above_truth) ++ordered;
    }
  rep.ordered_fraction = off ? double(ordered) / double(off) : 1.0;
  return rep;
}

nlohmann::json Theorem1Report::to_json() const {
  std::size_t by_a_total[8] = {}, by_a_ordered[8] = {};
  for (const auto& e : entries) {
    const std::size_t slot = std::min<std::size_t>(e.a, 7);
    ++by_a_total[slot];
    if (e.above_truth) ++by_a_ordered[slot];
  }
  nlohmann::json per_a = nlohmann::json::array();
  for (std::size_t a = 0; a < 8; ++a)
    if (by_a_total[a])
      per_a.push_back({{"a", a},
                       {"count", by_a_total[a]},
                       {"above_truth", by_a_ordered[a]},
                       {"lhs", std::pow(1.0 - double(a) / double(entries.empty() ? 1 : entries[0].m.size()), 2)}});
  return {{"loss_truth", loss_truth},
          {"bound_truth", bound_truth},
          {"within_bound", within_bound},
          {"argmin_m1", argmin_m1},
          {"argmin_at_truth", argmin_at_truth},
          {"ordered_fraction", ordered_fraction},
          {"rhs_sampling", entries.empty() ? 0.0 : entries[0].rhs_sampling},
          {"rhs_subspace", entries.empty() ? 0.0 : entries[0].rhs_subspace},
          {"sampled", entries.size()},
          {"by_corruption", per_a}};
}

}  // namespace mttt
