#include "qpns/attractor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <nlohmann/json.hpp>

#include "qpns/error.hpp"
#include "qpns/parallel.hpp"
#include "qpns/rng.hpp"

namespace qpns {

namespace {

SpectralVorticity zero_if_empty(const SpectralVorticity& w, const Model& model) {
  return w.empty() ? SpectralVorticity(model.lattice()) : w;
}

// Unit-norm Gaussian direction m.
SpectralVorticity perturbation(const LatticePtr& lat, std::uint64_t seed, std::uint64_t m) {
  const CounterRng rng(seed);
  SpectralVorticity u(lat);
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] = Complex(rng.normal(StreamTag::kPerturbation, m, i, 0), rng.normal(StreamTag::kPerturbation, m, i, 1));
  return (1.0 / norm(u)) * u;
}

}  // namespace

LaminarThresholds thresholds(double nu, double f_sup, double B0, double c0, std::size_t n, double eta_bar,
                             double gamma) {
  if (!(nu > 0.0)) throw InvalidArgument("thresholds need nu > 0");
  if (!(f_sup >= 0.0 && B0 >= 0.0 && c0 > 0.0 && eta_bar >= 0.0))
    throw InvalidArgument("thresholds need nonnegative |f|, B0, eta_bar and positive c0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("thresholds need gamma in (0, 1]");
  LaminarThresholds t;
  t.c0 = c0;
  t.G = std::sqrt(f_sup * f_sup / std::pow(nu, 4) + B0 / std::pow(nu, 3));
  t.delta0 = nu - c0 * c0 / (nu * nu) * (f_sup * f_sup / nu + B0);
  t.grashof_ok = t.G * c0 <= std::sqrt(0.5);
  t.viscosity_ok = std::pow(nu, 3) > 8.0 * (static_cast<double>(n) + eta_bar) * c0 * c0 * B0 / gamma;
  t.status = t.pass() ? ThresholdStatus::kPassSubjectToC0 : ThresholdStatus::kCertifiedFail;
  return t;
}

double force_grid_sup(const QuasiPeriodicForce& force, std::size_t grid) {
  if (force.terms().empty()) return 0.0;
  const std::size_t dim = force.frequency().dim();
  const double total = std::pow(static_cast<double>(grid), static_cast<double>(dim));
  if (grid < 1 || total > 16777216.0) throw InvalidArgument("force grid too large");
  double best = 0.0;
  std::vector<double> h(dim);
  for (std::size_t idx = 0; idx < static_cast<std::size_t>(total); ++idx) {
    std::size_t r = idx;
    for (std::size_t d = 0; d < dim; ++d) {
      h[d] = 2.0 * std::numbers::pi * static_cast<double>(r % grid) / static_cast<double>(grid);
      r /= grid;
    }
    best = std::max(best, norm(force.eval(TorusPoint(h))));
  }
  return best;
}

// ------------------------------------------------------------------ pullback

bool PullbackSolution::converged() const {
  return std::all_of(entries.begin(), entries.end(), [](const PullbackEntry& e) { return e.converged; });
}

RateFit PullbackSolution::depth_rate() const {
  std::vector<double> t, y;
  for (const auto& e : entries) {
    std::size_t usable = 0;
    for (double d : e.deltas) usable += d > 1e-300 ? 1 : 0;
    if (usable < 3) continue;
    for (std::size_t k = 0; k < e.deltas.size(); ++k) {
      if (!(e.deltas[k] > 1e-300)) continue;
      t.push_back(e.depths[k]);
      y.push_back(e.deltas[k] * e.deltas[k]);
    }
  }
  return fit_exponential(t, y, {});
}

PullbackSolution compute_pullback_solution(const Model& model, const std::vector<TorusPoint>& points,
                                           const std::vector<std::uint64_t>& seeds, const PullbackOptions& opt) {
  if (points.empty() || seeds.empty()) throw InvalidArgument("pullback needs torus points and seeds");
  if (!(opt.initial_depth > 0.0)) throw InvalidArgument("pullback depth must be positive");
  model.step_index(opt.initial_depth);
  const auto start = zero_if_empty(opt.start, model);
  PullbackSolution sol;
  sol.points = points;
  sol.seeds = seeds;
  sol.entries.resize(points.size() * seeds.size());
  parallel_for(sol.entries.size(), [&](std::size_t job) {
    const auto& h = points[job / seeds.size()];
    const WienerPath path(model.noise().seed, seeds[job % seeds.size()]);
    PullbackEntry e;
    double depth = opt.initial_depth;
    for (std::size_t k = 0; k <= opt.doublings; ++k, depth *= 2.0) {
      auto q = simulate_pullback(depth, h, start, model, path);
      e.depths.push_back(depth);
      if (k > 0) {
        const double d = norm(q - e.value);
        e.deltas.push_back(d);
        e.value = std::move(q);
        if (d < opt.tolerance) {
          e.converged = true;
          break;
        }
      } else {
        e.value = std::move(q);
      }
    }
    e.depth = e.depths.back();
    sol.entries[job] = std::move(e);
  });
  return sol;
}

double stationary_residual(const Model& model, const SpectralVorticity& w, const TorusPoint& h) {
  const auto& lat = *model.lattice();
  const auto f = model.force().eval(h);
  PseudoSpectral ws(model.lattice());
  const auto b = ws.advection(w);
  SpectralVorticity r(model.lattice());
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = -model.config().nu * lat.wavenumber_sq(i) * w[i] + f[i] - (model.config().nonlinear ? b[i] : Complex{});
  return norm(r) / std::max(norm(f), 1e-300);
}

double forward_invariance_delta(const Model& model, const PullbackSolution& sol, std::size_t point,
                                std::size_t seed, double shift, const PullbackOptions& opt) {
  const std::int64_t n = model.step_index(shift);
  if (n < 0) throw InvalidArgument("forward shift must be nonnegative");
  const auto& h = sol.points.at(point);
  const WienerPath path(model.noise().seed, sol.seeds.at(seed));
  const auto moved = evolve(0.0, shift, h, sol.at(point, seed).value, model, path);
  const TorusPoint h_shift = rotate(h, model.force().frequency(), shift);
  const auto target =
      simulate_pullback(sol.at(point, seed).depth, h_shift, zero_if_empty(opt.start, model), model, path.shifted(n));
  return norm(moved - target);
}

// ---------------------------------------------------------------- attraction

AttractionReport attraction_test(const Model& model, const TorusPoint& h, std::uint64_t seed,
                                 const SpectralVorticity& w_star, const AttractionOptions& opt) {
  if (!(opt.radius >= 0.0)) throw InvalidArgument("attraction radius must be nonnegative");
  if (!(opt.horizon > 0.0) || opt.samples < 3 || opt.starts < 1)
    throw InvalidArgument("attraction test needs a horizon, >= 3 samples and >= 1 start");
  const std::int64_t total = model.step_index(opt.horizon);
  std::vector<std::int64_t> idx;
  for (std::size_t k = 0; k <= opt.samples; ++k) {
    const auto n = static_cast<std::int64_t>(
        std::llround(static_cast<double>(k) * static_cast<double>(total) / static_cast<double>(opt.samples)));
    if (idx.empty() || n > idx.back()) idx.push_back(n);
  }
  AttractionReport rep;
  for (auto n : idx) rep.times.push_back(model.time_of(n));
  const std::size_t K = idx.size();
  const WienerPath path(model.noise().seed, seed);
  const double r = opt.radius;
  std::vector<double> d2(opt.starts * K, 0.0);
  if (r > 0.0) {
    if (opt.direction == AttractionDirection::kForward) {
      parallel_for(opt.starts, [&](std::size_t m) {
        SpectralVorticity a = w_star;
        SpectralVorticity b = w_star + r * perturbation(model.lattice(), opt.perturbation_seed, m);
        PseudoSpectral ws(model.lattice());
        std::size_t next = 0;
        for (std::int64_t n = 0;; ++n) {
          while (next < K && idx[next] == n) d2[m * K + next++] = norm_sq(a - b);
          if (next == K) break;
          model.step(a, n, h, path, ws);
          model.step(b, n, h, path, ws);
        }
      });
    } else {
      const double D = opt.pullback_depth;
      model.step_index(D);
      parallel_for(opt.starts * K, [&](std::size_t job) {
        const std::size_t m = job / K;
        const std::size_t k = job % K;
        const double T = rep.times[k];
        const auto base = evolve(-T - D, -T, h, SpectralVorticity(model.lattice()), model, path);
        const auto a = evolve(-T, 0.0, h, base, model, path);
        const auto b =
            evolve(-T, 0.0, h, base + r * perturbation(model.lattice(), opt.perturbation_seed, m), model, path);
        d2[job] = norm_sq(a - b);
      });
    }
  }
  rep.sup_sq.assign(K, 0.0);
  for (std::size_t m = 0; m < opt.starts; ++m)
    for (std::size_t k = 0; k < K; ++k) rep.sup_sq[k] = std::max(rep.sup_sq[k], d2[m * K + k]);
  if (r == 0.0) {
    rep.fit.note = "radius 0: distances identically zero";
    return rep;
  }
  // Asymptotic regime: second half of the horizon, above the roundoff floor.
  std::vector<double> floor(K);
  const double level = 1e-26 * std::max(r * r, norm_sq(w_star));
  for (std::size_t k = 0; k < K; ++k)
    floor[k] = rep.times[k] < 0.5 * opt.horizon ? std::numeric_limits<double>::infinity() : level;
  rep.fit = fit_exponential(rep.times, rep.sup_sq, floor);
  rep.regime_flag = !rep.fit.fitted || !(rep.fit.exponent > 0.0);
  if (!rep.regime_flag) {
    std::size_t onset = K;
    for (std::size_t k = K; k-- > 0;) {
      if (rep.sup_sq[k] <= r * r * std::exp(-rep.fit.exponent * rep.times[k]) * (1.0 + 1e-9)) onset = k;
      else break;
    }
    rep.envelope_holds = onset < K && rep.times[onset] <= 0.5 * opt.horizon;
    rep.onset = onset < K ? rep.times[onset] : opt.horizon;
  }
  rep.pass = !rep.regime_flag && rep.fit.ci_lo > 0.0 && rep.envelope_holds;
  return rep;
}

// ------------------------------------------------------------------ Holder

std::vector<TorusPoint> holder_points(const TorusPoint& h0, const std::vector<double>& direction,
                                      const std::vector<double>& separations) {
  if (direction.size() != h0.dim()) throw InvalidArgument("direction dimension mismatch");
  double len = 0.0;
  for (double x : direction) len += x * x;
  len = std::sqrt(len);
  if (!(len > 0.0)) throw InvalidArgument("direction must be nonzero");
  std::vector<TorusPoint> pts{h0};
  for (double s : separations) {
    std::vector<double> h(h0.dim());
    for (std::size_t d = 0; d < h.size(); ++d) h[d] = h0[d] + s * direction[d] / len;
    pts.emplace_back(h);
  }
  return pts;
}

HolderFieldReport holder_field_test(const PullbackSolution& sol, std::size_t p,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double gamma) {
  if (p < 1) throw InvalidArgument("Holder field test needs p >= 1");
  HolderFieldReport rep;
  rep.target = static_cast<double>(p) * gamma - 0.2;
  struct Scale {
    double sep;
    std::vector<double> values;
  };
  std::vector<Scale> scales;
  for (const auto& [i, j] : pairs) {
    if (i >= sol.points.size() || j >= sol.points.size()) throw InvalidArgument("pair index out of range");
    const double s = torus_distance(sol.points[i], sol.points[j]);
    if (!(s > 0.0)) throw InvalidArgument("pair points coincide");
    auto it = std::find_if(scales.begin(), scales.end(), [&](const Scale& c) { return std::abs(c.sep - s) <= 1e-9 * s; });
    if (it == scales.end()) {
      scales.push_back({s, {}});
      it = scales.end() - 1;
    }
    for (std::size_t w = 0; w < sol.seeds.size(); ++w)
      it->values.push_back(std::pow(norm(sol.at(i, w).value - sol.at(j, w).value), 2.0 * static_cast<double>(p)));
  }
  if (scales.size() < 4) throw InvalidArgument("Holder field test needs at least 4 separations");
  std::sort(scales.begin(), scales.end(), [](const Scale& a, const Scale& b) { return a.sep < b.sep; });
  for (const auto& c : scales) {
    rep.separations.push_back(c.sep);
    rep.moments.push_back(pairwise_sum(c.values) / static_cast<double>(c.values.size()));
  }
  rep.zero = std::all_of(rep.moments.begin(), rep.moments.end(), [](double m) { return m == 0.0; });
  if (rep.zero) {
    rep.fit.note = "differences identically zero";
    rep.pass = true;
    return rep;
  }
  rep.fit = fit_power(rep.separations, rep.moments);
  rep.pass = rep.fit.fitted && rep.fit.slope >= rep.target;
  return rep;
}

// ------------------------------------------------------------ serialization

void save_pullback(const std::string& dir, const PullbackSolution& sol, const std::string& extra_json) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json man;
  man["format"] = "qpns-pullback";
  man["version"] = 1;
  man["truncation"] = sol.entries.empty() ? 0 : sol.entries.front().value.lattice()->truncation();
  auto& pts = man["points"] = nlohmann::ordered_json::array();
  for (const auto& h : sol.points) pts.push_back(std::vector<double>(h.values().begin(), h.values().end()));
  man["seeds"] = sol.seeds;
  auto& entries = man["entries"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < sol.entries.size(); ++k) {
    const auto& e = sol.entries[k];
    const std::string file = "q_" + std::to_string(k / sol.seeds.size()) + "_" + std::to_string(k % sol.seeds.size()) + ".bin";
    save_snapshot((fs::path(dir) / file).string(), e.value);
    nlohmann::ordered_json j;
    j["point"] = k / sol.seeds.size();
    j["seed"] = k % sol.seeds.size();
    j["file"] = file;
    j["depth"] = e.depth;
    j["converged"] = e.converged;
    j["depths"] = e.depths;
    j["deltas"] = e.deltas;
    entries.push_back(j);
  }
  man["extra"] = nlohmann::ordered_json::parse(extra_json);
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw Error("cannot write pullback manifest in " + dir);
  out << man.dump(2) << "\n";
}

PullbackSolution load_pullback(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw Error("cannot read pullback manifest in " + dir);
  const auto man = nlohmann::json::parse(in);
  if (man.value("format", "") != "qpns-pullback") throw Error("not a pullback manifest: " + dir);
  PullbackSolution sol;
  for (const auto& p : man.at("points")) sol.points.emplace_back(p.get<std::vector<double>>());
  sol.seeds = man.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& j : man.at("entries")) {
    PullbackEntry e;
    e.value = load_snapshot((fs::path(dir) / j.at("file").get<std::string>()).string());
    e.depth = j.at("depth").get<double>();
    e.converged = j.at("converged").get<bool>();
    e.depths = j.at("depths").get<std::vector<double>>();
    e.deltas = j.at("deltas").get<std::vector<double>>();
    sol.entries.push_back(std::move(e));
  }
  if (sol.entries.size() != sol.points.size() * sol.seeds.size()) throw Error("pullback manifest is incomplete: " + dir);
  return sol;
}

}  // namespace qpns
