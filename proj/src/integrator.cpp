#include "qpns/integrator.hpp"

#include <cmath>

#include "qpns/error.hpp"
#include "qpns/numeric.hpp"
#include "qpns/parallel.hpp"
#include "qpns/rng.hpp"

namespace qpns {

void SimConfig::validate() const {
  if (!(nu > 0.0)) throw InvalidArgument("viscosity must be positive");
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!lattice) throw InvalidArgument("simulation lattice missing");
  if (scheme != "exp-euler") throw InvalidArgument("unknown integration scheme '" + scheme + "'");
}

double SimConfig::stiffness() const {
  const double n = lattice ? lattice->truncation() : 0.0;
  return dt * nu * n * n;
}

double WienerPath::xi(std::int64_t step, std::size_t direction) const {
  const CounterRng rng(seed_);
  const std::int64_t g = step + shift_;
  if (g >= 0)
    return rng.normal(StreamTag::kForwardIncrements, trajectory_, static_cast<std::uint64_t>(g),
                      static_cast<std::uint32_t>(direction));
  return rng.normal(StreamTag::kBackwardIncrements, trajectory_, static_cast<std::uint64_t>(-(g + 1)),
                    static_cast<std::uint32_t>(direction));
}

double WienerPath::value(std::int64_t n, std::size_t direction, double dt) const {
  double s = 0.0;
  if (n >= 0) {
    for (std::int64_t g = 0; g < n; ++g) s += xi(g, direction);
  } else {
    for (std::int64_t g = n; g < 0; ++g) s -= xi(g, direction);
  }
  return std::sqrt(dt) * s;
}

// ------------------------------------------------------------------ model

Model::Model(SimConfig config, QuasiPeriodicForce force, NoiseConfig noise)
    : config_(std::move(config)), force_(std::move(force)), noise_(std::move(noise)) {
  config_.validate();
  const auto& lat = *config_.lattice;
  if (!force_.lattice() || force_.lattice()->truncation() != lat.truncation())
    throw InvalidArgument("force lattice does not match the simulation lattice");
  noise_.validate(config_.lattice);
  const std::size_t m = lat.size();
  decay_.resize(m);
  weight_.resize(m);
  std::vector<double> ou_scale(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double lambda = config_.nu * lat.wavenumber_sq(i);
    const double x = lambda * config_.dt;
    decay_[i] = std::exp(-x);
    weight_[i] = -std::expm1(-x) / lambda;
    ou_scale[i] = std::sqrt(-std::expm1(-2.0 * x) / (2.0 * lambda));
  }
  noise_entries_.resize(noise_.count());
  for (std::size_t d = 0; d < noise_.count(); ++d) {
    const auto& g = noise_.directions[d];
    for (std::size_t i = 0; i < m; ++i)
      if (g[i] != Complex{}) noise_entries_[d].push_back({i, g[i] * ou_scale[i]});
  }
  forced_ = !force_.terms().empty();
  force_constant_ = force_.is_constant();
  if (forced_ && force_constant_) constant_force_ = force_.eval(TorusPoint::zero(force_.frequency().dim()));
}

std::int64_t Model::step_index(double t) const {
  const double q = t / config_.dt;
  const auto n = static_cast<std::int64_t>(std::llround(q));
  if (std::abs(q - static_cast<double>(n)) > 1e-7) throw InvalidArgument("time is not on the integration grid");
  return n;
}

void Model::step(SpectralVorticity& w, std::int64_t n, const TorusPoint& h, const WienerPath& path,
                 PseudoSpectral& workspace) const {
  const double t = time_of(n);
  std::optional<SpectralVorticity> f;
  if (forced_) f = force_constant_ ? constant_force_ : force_.eval(rotate(h, force_.frequency(), t));
  std::optional<SpectralVorticity> b;
  if (config_.nonlinear) b = workspace.advection(w);
  for (std::size_t i = 0; i < w.size(); ++i) {
    Complex drive{};
    if (f) drive += (*f)[i];
    if (b) drive -= (*b)[i];
    w[i] = decay_[i] * w[i] + weight_[i] * drive;
  }
  for (std::size_t d = 0; d < noise_entries_.size(); ++d) {
    const double xi = path.xi(n, d);
    for (const auto& e : noise_entries_[d]) w[e.mode] += xi * e.amplitude;
  }
  for (const auto& c : w.coeffs())
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) throw BlowUpError(time_of(n + 1), "non-finite vorticity");
}

Model Model::linearized() const {
  SimConfig cfg = config_;
  cfg.nonlinear = false;
  return Model(cfg, force_, noise_);
}

Model Model::without_noise() const { return Model(config_, force_, NoiseConfig{{}, noise_.seed}); }

Model Model::with_force(QuasiPeriodicForce force) const { return Model(config_, std::move(force), noise_); }

std::vector<std::pair<double, double>> Model::ou_stationary_variance() const {
  const auto& lat = *config_.lattice;
  std::vector<std::pair<double, double>> v(lat.size(), {0.0, 0.0});
  for (const auto& g : noise_.directions) {
    for (std::size_t i = 0; i < lat.size(); ++i) {
      const double two_lambda = 2.0 * config_.nu * lat.wavenumber_sq(i);
      v[i].first += g[i].real() * g[i].real() / two_lambda;
      v[i].second += g[i].imag() * g[i].imag() / two_lambda;
    }
  }
  return v;
}

SpectralVorticity step(const SpectralVorticity& w, const Model& model, const WienerPath& path, double t,
                       const TorusPoint& h) {
  PseudoSpectral ws(model.lattice());
  SpectralVorticity out = w;
  model.step(out, model.step_index(t), h, path, ws);
  return out;
}

// ------------------------------------------------------------- trajectories

Trajectory simulate(double s, double t, const TorusPoint& h, const SpectralVorticity& w0, const Model& model,
                    const WienerPath& path, const SimOptions& options) {
  if (!(s <= t)) throw InvalidArgument("simulate needs s <= t");
  if (w0.lattice()->truncation() != model.lattice()->truncation())
    throw InvalidArgument("initial state lattice mismatch");
  const std::int64_t ns = model.step_index(s);
  const std::int64_t nt = model.step_index(t);
  std::int64_t every = 0;
  if (options.sample_interval > 0.0) {
    every = model.step_index(options.sample_interval);
    if (every < 1) throw InvalidArgument("sample interval shorter than the time step");
  }
  Trajectory traj;
  traj.s = s;
  traj.h = h;
  SpectralVorticity w = w0;
  PseudoSpectral ws(model.lattice());
  const double dt = model.dt();
  double enstrophy = 0.0;
  double e_prev = options.track_enstrophy ? std::pow(sobolev_norm(w, {1.0}), 2) : 0.0;
  auto record = [&](std::int64_t n) {
    traj.times.push_back(model.time_of(n));
    traj.states.push_back(w);
    if (options.track_enstrophy) traj.enstrophy_integral.push_back(enstrophy);
  };
  record(ns);
  if (options.observer) options.observer(ns, w);
  for (std::int64_t n = ns; n < nt; ++n) {
    model.step(w, n, h, path, ws);
    if (options.track_enstrophy) {
      const double e = std::pow(sobolev_norm(w, {1.0}), 2);
      enstrophy += 0.5 * dt * (e_prev + e);
      e_prev = e;
    }
    if (options.observer) options.observer(n + 1, w);
    if (n + 1 == nt || (every > 0 && (n + 1 - ns) % every == 0)) record(n + 1);
  }
  return traj;
}

SpectralVorticity evolve(double s, double t, const TorusPoint& h, const SpectralVorticity& w0, const Model& model,
                         const WienerPath& path,
                         const std::function<void(std::int64_t, const SpectralVorticity&)>& observer) {
  if (!(s <= t)) throw InvalidArgument("evolve needs s <= t");
  const std::int64_t ns = model.step_index(s);
  const std::int64_t nt = model.step_index(t);
  SpectralVorticity w = w0;
  PseudoSpectral ws(model.lattice());
  if (observer) observer(ns, w);
  for (std::int64_t n = ns; n < nt; ++n) {
    model.step(w, n, h, path, ws);
    if (observer) observer(n + 1, w);
  }
  return w;
}

SpectralVorticity simulate_pullback(double t_back, const TorusPoint& h, const SpectralVorticity& w0,
                                    const Model& model, const WienerPath& path) {
  if (!(t_back >= 0.0)) throw InvalidArgument("pullback depth must be >= 0");
  return evolve(-t_back, 0.0, h, w0, model, path);
}

Trajectory ou_reference(const Model& model, const WienerPath& path, double s, double t, double sample_interval) {
  SimConfig cfg = model.config();
  cfg.nonlinear = false;
  const Model ou(cfg, QuasiPeriodicForce::zero(model.force().frequency(), model.lattice()), model.noise());
  SimOptions opt;
  opt.sample_interval = sample_interval;
  return simulate(s, t, TorusPoint::zero(model.force().frequency().dim()), SpectralVorticity(model.lattice()), ou,
                  path, opt);
}

// ---------------------------------------------------------------- probe

ProbeTable regularization_probe(const Model& model, double radius, const std::vector<double>& r1_grid, double horizon,
                                const std::vector<SpectralVorticity>& starts, const std::vector<TorusPoint>& symbols,
                                std::size_t samples, std::uint64_t trajectory_base) {
  if (!(radius > 0.0 && horizon > 0.0)) throw InvalidArgument("regularization_probe needs R, T > 0");
  if (starts.empty() || symbols.empty() || samples == 0 || r1_grid.empty())
    throw InvalidArgument("regularization_probe needs starts, symbols, samples and thresholds");
  for (const auto& w0 : starts)
    if (norm(w0) > radius * (1.0 + 1e-12)) throw InvalidArgument("probe start outside the ball of radius R");
  const std::size_t cells = starts.size() * symbols.size();
  // Common random numbers: sample m uses trajectory id base + m for every cell.
  std::vector<double> h1(cells * samples);
  parallel_for(cells * samples, [&](std::size_t job) {
    const std::size_t cell = job / samples;
    const std::size_t m = job % samples;
    const auto& w0 = starts[cell / symbols.size()];
    const auto& h = symbols[cell % symbols.size()];
    const WienerPath path(model.noise().seed, trajectory_base + m);
    h1[job] = sobolev_norm(evolve(0.0, horizon, h, w0, model, path), {1.0});
  });
  ProbeTable table;
  table.samples = samples;
  for (double r1 : r1_grid) {
    ProbeRow row{r1, 2.0, 0.0, 1.0, 0, 0};
    std::size_t worst_hits = 0;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      std::size_t hits = 0;
      for (std::size_t m = 0; m < samples; ++m) hits += h1[cell * samples + m] <= r1 ? 1 : 0;
      const double p = static_cast<double>(hits) / static_cast<double>(samples);
      if (p < row.p_min) {
        row.p_min = p;
        row.worst_start = cell / symbols.size();
        row.worst_symbol = cell % symbols.size();
        worst_hits = hits;
      }
    }
    std::tie(row.ci_lo, row.ci_hi) = wilson_interval(worst_hits, samples);
    table.rows.push_back(row);
  }
  return table;
}

std::vector<SpectralVorticity> default_probe_starts(const LatticePtr& lattice, double radius, std::uint64_t seed) {
  std::vector<SpectralVorticity> dirs{SpectralVorticity::cos_mode(lattice, 1, 0),
                                      SpectralVorticity::sin_mode(lattice, 1, 1)};
  const CounterRng rng(seed);
  SpectralVorticity r(lattice);
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = Complex(rng.normal(StreamTag::kInitialState, 0, i, 0), rng.normal(StreamTag::kInitialState, 0, i, 1));
  dirs.push_back(r);
  std::vector<SpectralVorticity> starts{SpectralVorticity(lattice)};
  for (const auto& d : dirs) {
    const double s = radius / norm(d);
    starts.push_back(s * d);
    starts.push_back(-s * d);
  }
  return starts;
}

}  // namespace qpns
