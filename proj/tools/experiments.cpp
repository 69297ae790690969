#include <algorithm>
#include <cmath>

#include "app.hpp"
#include "qpns/attractor.hpp"
#include "qpns/hormander.hpp"
#include "qpns/rng.hpp"
#include "qpns/stats.hpp"
#include "qpns/transport.hpp"

namespace qpns::cli {

namespace {

using J = nlohmann::ordered_json;

// Stream salts for the trajectory bases of each pipeline.
enum Salt : std::uint64_t {
  kSaltStart = 2,
  kSaltSimulate = 10,
  kSaltInvariant = 11,
  kSaltMixing = 12,
  kSaltSlln = 13,
  kSaltClt = 14,
  kSaltAttractor = 15,
  kSaltLyapunov = 16,
  kSaltLemmas = 17,
  kSaltLadyzhenskaya = 18,
};

std::uint64_t base_of(const RunConfig& cfg, Salt s) { return derive_seed(cfg.seed, s) >> 16; }

// Gaussian field on |k|_inf <= 2 scaled to H norm `radius`; zero when radius is 0.
SpectralVorticity start_field(const LatticePtr& lat, std::uint64_t seed, std::uint64_t id, double radius) {
  SpectralVorticity w(lat);
  if (radius == 0.0) return w;
  const CounterRng rng(seed);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto [k1, k2] = lat->mode(i);
    if (std::abs(k1) > 2 || std::abs(k2) > 2) continue;
    w[i] = Complex(rng.normal(StreamTag::kInitialState, id, i, 0), rng.normal(StreamTag::kInitialState, id, i, 1));
  }
  return (radius / norm(w)) * w;
}

std::vector<double> grid_times(const Model& model, double horizon, std::size_t samples) {
  const std::int64_t total = std::llround(horizon / model.dt());
  std::vector<double> t;
  std::int64_t last = -1;
  for (std::size_t k = 0; k <= samples; ++k) {
    const auto n = static_cast<std::int64_t>(
        std::llround(static_cast<double>(k) * static_cast<double>(total) / static_cast<double>(samples)));
    if (n > last) t.push_back(model.time_of(last = n));
  }
  return t;
}

InvariantOptions invariant_options(const RunConfig& cfg) {
  InvariantOptions o;
  o.particles = cfg.invariant.particles;
  o.t_back = cfg.invariant.t_back;
  o.trajectory_base = base_of(cfg, kSaltInvariant);
  o.stabilization_tol = cfg.invariant.stabilization_tol;
  o.symmetrize = cfg.invariant.symmetrize;
  o.cost.eta = cfg.invariant.cost_eta;
  return o;
}

J json_of(const RateFit& f) {
  return {{"rate", f.exponent}, {"prefactor", f.prefactor}, {"r2", f.r2},       {"ci_lo", f.ci_lo},
          {"ci_hi", f.ci_hi},   {"decades", f.decades},     {"used", f.used},   {"censored", f.censored},
          {"fitted", f.fitted}, {"note", f.note}};
}

J json_of(const PowerFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"ci_lo", f.ci_lo},
          {"ci_hi", f.ci_hi}, {"fitted", f.fitted},       {"note", f.note}};
}

Observable observable_of(const std::string& text, const std::string& field) {
  try {
    return parse_observable(text);
  } catch (const InvalidArgument& e) {
    throw ConfigError("field '" + field + "': " + e.what());
  }
}

TorusPoint origin_for(const Model& model) { return TorusPoint::zero(model.force().frequency().dim()); }

// ------------------------------------------------------------------ pipelines

ExperimentResult simulate_pipeline(const RunConfig& cfg, const Model& model, OutputDir& out) {
  ExperimentResult r;
  const auto base = base_of(cfg, kSaltSimulate);
  const auto w0 = start_field(model.lattice(), derive_seed(cfg.seed, kSaltStart), 0, cfg.simulate.start_radius);
  SimOptions opt;
  opt.sample_interval = cfg.simulate.sample_interval;
  opt.track_enstrophy = true;
  r.report["seeds"] = {{"trajectory", base}};
  try {
    const auto traj = simulate(0.0, cfg.simulate.horizon, origin_for(model), w0, model, WienerPath(model.noise().seed, base), opt);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      const auto& w = traj.states[i];
      rows.push_back({traj.times[i], norm_sq(w), std::pow(sobolev_norm(w, {1.0}), 2.0),
                      traj.enstrophy_integral.empty() ? 0.0 : traj.enstrophy_integral[i]});
    }
    out.write_csv("trajectory.csv", {"t", "norm_sq", "enstrophy", "enstrophy_integral"}, rows);
    save_snapshot(out.path("final.bin"), traj.states.back());
    out.record_file("final.bin");
    r.report["final_norm"] = norm(traj.states.back());
    r.checks["finite"] = true;
  } catch (const BlowUpError& e) {
    r.report["error"] = e.what();
    r.checks["finite"] = false;
  }
  r.report["stiffness"] = model.config().stiffness();
  r.report["accuracy_warning"] = model.config().accuracy_warning();
  return r;
}

ExperimentResult invariant_pipeline(const RunConfig& cfg, const Model& model, OutputDir& out) {
  ExperimentResult r;
  const auto opt = invariant_options(cfg);
  const auto est = estimate_invariant_measure(model, origin_for(model), opt);
  save_measure(out.path("measure"), est.measure, J{{"t_back", opt.t_back}, {"config_hash", config_hash(cfg)}}.dump());
  out.record_tree("measure");
  const auto& lat = *model.lattice();
  const auto ou = model.ou_stationary_variance();
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const auto [k1, k2] = lat.mode(i);
    if (std::abs(k1) > 2 || std::abs(k2) > 2) continue;
    std::vector<double> re, im;
    for (const auto& p : est.measure.particles) {
      re.push_back(p[i].real());
      im.push_back(p[i].imag());
    }
    auto moments = [&](const std::vector<double>& v) {
      double m = 0.0, s = 0.0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      for (double x : v) s += (x - m) * (x - m);
      return std::pair{m, s / static_cast<double>(v.size() - 1)};
    };
    const auto [mr, vr] = moments(re);
    const auto [mi, vi] = moments(im);
    rows.push_back({double(k1), double(k2), mr, vr, mi, vi, ou[i].first, ou[i].second});
  }
  out.write_csv("mode_statistics.csv", {"k1", "k2", "mean_re", "var_re", "mean_im", "var_im", "ou_var_re", "ou_var_im"},
                rows);
  r.report["seeds"] = {{"trajectory_base", opt.trajectory_base}};
  r.report["particles"] = est.measure.size();
  r.report["doubling_shift"] = est.doubling_shift;
  r.checks["stable"] = est.stable;
  return r;
}

ExperimentResult mixing_pipeline(const RunConfig& cfg, const Model& model, OutputDir& out) {
  ExperimentResult r;
  const auto& s = cfg.mixing;
  const auto w = start_field(model.lattice(), derive_seed(cfg.seed, kSaltStart), 1, s.start_radius);
  MixingOptions opt;
  opt.particles = s.particles;
  opt.times = grid_times(model, s.horizon, s.samples);
  opt.trajectory_base = base_of(cfg, kSaltMixing);
  opt.cost.eta = s.cost_eta;
  const auto rep =
      mixing_rate(model, EmpiricalMeasure::dirac(w), EmpiricalMeasure::dirac(-1.0 * w), origin_for(model), 0.0, opt);
  std::vector<std::vector<double>> rows, sync;
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    rows.push_back({rep.times[k], rep.distance[k], std::max(0.0, rep.distance[k] - rep.floor[k]),
                    rep.distance[k] + rep.floor[k]});
    sync.push_back({rep.times[k], rep.synchronous[k]});
  }
  out.write_csv("mixing.csv", {"t", "distance", "ci_lo", "ci_hi"}, rows);
  out.write_csv("synchronous.csv", {"t", "distance"}, sync);
  r.report["seeds"] = {{"trajectory_base", opt.trajectory_base}};
  r.report["fit"] = json_of(rep.fit);
  r.report["synchronous_fit"] = json_of(rep.synchronous_fit);
  r.checks["fitted"] = rep.fit.fitted;
  r.checks["r2"] = rep.fit.fitted && rep.fit.r2 >= s.min_r2;
  r.checks["decades"] = rep.fit.fitted && rep.fit.decades >= s.min_decades;
  r.checks["rate_ci_excludes_zero"] = rep.fit.fitted && rep.fit.ci_lo > 0.0;
  return r;
}

ExperimentResult slln_pipeline(const RunConfig& cfg, const Model& model, OutputDir& out) {
  ExperimentResult r;
  const auto phi = observable_of(cfg.slln.observable, "slln.observable");
  const auto gamma = build_measure_path(model, cfg.invariant.resolution, invariant_options(cfg));
  const auto centered = center(phi, gamma);
  SllnOptions opt;
  opt.horizons = cfg.slln.horizons;
  opt.paths = cfg.slln.paths;
  opt.trajectory_base = base_of(cfg, kSaltSlln);
  const auto rep = slln_run(model, centered, SpectralVorticity(model.lattice()), origin_for(model), opt);
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < rep.horizons.size(); ++k)
    rows.push_back({rep.horizons[k], rep.mean_abs[k], rep.mean_abs[k] - 1.96 * rep.se_abs[k],
                    rep.mean_abs[k] + 1.96 * rep.se_abs[k]});
  out.write_csv("slln.csv", {"t", "mean_abs", "ci_lo", "ci_hi"}, rows);
  r.report["seeds"] = {{"measure_base", invariant_options(cfg).trajectory_base}, {"trajectory_base", opt.trajectory_base}};
  r.report["observable"] = phi.name();
  r.report["fit"] = json_of(rep.fit);
  r.checks["slope_in_range"] =
      rep.fit.fitted && rep.fit.slope >= cfg.slln.slope_min && rep.fit.slope <= cfg.slln.slope_max;
  std::vector<std::vector<double>> mrows;
  J moments = J::array();
  for (auto p : cfg.slln.moments) {
    const std::string key = "moment_p" + std::to_string(p);
    try {
      const auto m = moment_rate_check(rep, p);
      for (std::size_t k = 0; k < rep.horizons.size(); ++k)
        mrows.push_back({double(p), rep.horizons[k], m.moment[k], m.se[k]});
      moments.push_back({{"p", p}, {"fit", json_of(m.fit)}, {"pass", m.pass}});
      r.checks[key] = m.pass;
    } catch (const ConvergenceError& e) {
      moments.push_back({{"p", p}, {"error", e.what()}});
      r.checks[key] = false;
    }
  }
  out.write_csv("moments.csv", {"p", "t", "moment", "se"}, mrows);
  r.report["moments"] = moments;
  return r;
}

ExperimentResult clt_pipeline(const RunConfig& cfg, const Model& model, OutputDir& out) {
  ExperimentResult r;
  const auto& s = cfg.clt;
  const auto phi = observable_of(s.observable, "clt.observable");
  const auto gamma = build_measure_path(model, cfg.invariant.resolution, invariant_options(cfg));
  const auto centered = center(phi, gamma);
  Sigma2CorrectorOptions sopt;
  sopt.corrector.t_chi = s.t_chi;
  sopt.corrector.paths = s.corrector_paths;
  sopt.corrector.trajectory_base = base_of(cfg, kSaltClt);
  sopt.max_particles = s.max_particles;
  const auto sigma = estimate_sigma2_corrector(model, centered, gamma, sopt);
  CltOptions opt;
  opt.horizon = s.horizon;
  opt.sweep = s.sweep;
  opt.paths = s.paths;
  opt.trajectory_base = derive_seed(base_of(cfg, kSaltClt), 1) >> 16;
  const auto rep = clt_run(model, centered, SpectralVorticity(model.lattice()), origin_for(model),
                           sigma.corrector_route.value, opt);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < rep.samples.size(); ++i) rows.push_back({double(i), rep.samples[i]});
  out.write_csv("clt_samples.csv", {"index", "sample"}, rows);
  std::vector<std::vector<double>> sweep;
  for (std::size_t k = 0; k < rep.sweep_horizons.size(); ++k) sweep.push_back({rep.sweep_horizons[k], rep.sweep_ks[k]});
  out.write_csv("clt_sweep.csv", {"t", "ks"}, sweep);
  r.report["seeds"] = {{"measure_base", invariant_options(cfg).trajectory_base},
                       {"corrector_base", sopt.corrector.trajectory_base},
                       {"trajectory_base", opt.trajectory_base}};
  r.report["observable"] = phi.name();
  r.report["sigma2_corrector"] = {{"value", sigma.corrector_route.value}, {"se", sigma.corrector_route.se}};
  r.report["flagged_correctors"] = sigma.flagged_correctors;
  r.report["warning"] = sigma.warning;
  r.report["sigma2_hat"] = {{"value", rep.sigma2_hat}, {"se", rep.sigma2_se}};
  r.report["degenerate"] = rep.degenerate;
  r.report["ks"] = rep.ks;
  r.checks["ks"] = rep.ks <= s.ks_tolerance;
  return r;
}

ExperimentResult hormander_pipeline(const RunConfig& cfg, const Model& model, OutputDir& out) {
  ExperimentResult r;
  const auto lat = cfg.hormander.truncation > 0 ? ModeLattice::make(cfg.hormander.truncation) : model.lattice();
  const auto noise = model.noise().on_lattice(lat);
  if (noise.directions.empty()) throw ConfigError("hormander-check needs noise directions");
  const auto basis = bracket_closure(noise.directions, lat, cfg.hormander.max_generations, cfg.hormander.tolerance);
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < basis.rank_history.size(); ++k)
    rows.push_back({double(k + 1), double(basis.rank_history[k]), double(basis.dim)});
  out.write_csv("ranks.csv", {"generation", "rank", "dim"}, rows);
  r.report["truncation"] = lat->truncation();
  r.report["rank"] = basis.rank();
  r.report["dim"] = basis.dim;
  r.report["stalled"] = basis.stalled;
  r.checks["saturated"] = basis.saturated;
  return r;
}

ExperimentResult attractor_pipeline(const RunConfig& cfg, const Model& model, OutputDir& out) {
  ExperimentResult r;
  const auto& s = cfg.attractor;
  const auto lat = model.lattice();
  const double c0 =
      s.c0 > 0.0 ? s.c0 : estimate_ladyzhenskaya(lat, 400, derive_seed(cfg.seed, kSaltLadyzhenskaya));
  const double f_sup = force_grid_sup(model.force(), 64);
  const auto th = thresholds(model.config().nu, f_sup, model.noise().energy_input(), c0,
                             model.force().frequency().dim(), 0.0, model.force().holder_gamma());
  r.report["thresholds"] = {{"G", th.G},
                            {"delta0", th.delta0},
                            {"c0", th.c0},
                            {"c0_estimated", !(s.c0 > 0.0)},
                            {"f_sup", f_sup},
                            {"grashof_ok", th.grashof_ok},
                            {"viscosity_ok", th.viscosity_ok},
                            {"status", th.status == ThresholdStatus::kPassSubjectToC0 ? "pass subject to c0"
                                                                                     : "certified fail"}};
  r.checks["laminar_thresholds"] = th.pass();

  std::vector<double> dir(s.h0.size(), 0.0);
  dir[0] = 1.0;
  if (dir.size() > 1) dir[1] = 0.5;
  const auto pts = holder_points(TorusPoint(s.h0), dir, s.separations);
  const auto base = base_of(cfg, kSaltAttractor);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < s.seeds; ++i) seeds.push_back(base + i);
  PullbackOptions popt;
  popt.initial_depth = s.initial_depth;
  popt.doublings = s.doublings;
  popt.tolerance = s.tolerance;
  const auto sol = compute_pullback_solution(model, pts, seeds, popt);
  save_pullback(out.path("pullback"), sol, J{{"config_hash", config_hash(cfg)}}.dump());
  out.record_tree("pullback");
  r.checks["pullback_converged"] = sol.converged();
  r.report["seeds"] = {{"trajectory_base", base}, {"count", s.seeds}};

  double start_gap = 0.0;
  for (std::uint64_t k = 1; k <= 2; ++k) {
    PullbackOptions o = popt;
    o.start = start_field(lat, derive_seed(cfg.seed, kSaltStart), 10 + k, 3.0 * (norm(sol.at(0, 0).value) + 1.0));
    const auto other = compute_pullback_solution(model, {pts[0]}, {seeds[0]}, o);
    start_gap = std::max(start_gap, norm(other.at(0, 0).value - sol.at(0, 0).value));
  }
  r.report["start_gap"] = start_gap;
  r.checks["start_independent"] = start_gap <= 100.0 * s.tolerance;

  double invariance = 0.0;
  for (std::size_t w = 0; w < seeds.size(); ++w)
    invariance = std::max(invariance, forward_invariance_delta(model, sol, 0, w, s.shift, popt));
  r.report["forward_invariance_delta"] = invariance;
  r.checks["forward_invariant"] = invariance <= 100.0 * s.tolerance;

  AttractionOptions aopt;
  aopt.radius = s.radius;
  aopt.horizon = s.horizon;
  aopt.samples = s.samples;
  aopt.starts = s.starts;
  aopt.perturbation_seed = derive_seed(cfg.seed, kSaltStart);
  const auto att = attraction_test(model, pts[0], seeds[0], sol.at(0, 0).value, aopt);
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < att.times.size(); ++k)
    rows.push_back({att.times[k], att.sup_sq[k], s.radius * s.radius * std::exp(-att.fit.exponent * att.times[k])});
  out.write_csv("attraction.csv", {"t", "sup_sq", "envelope"}, rows);
  r.report["attraction"] = {{"fit", json_of(att.fit)},
                            {"onset", att.onset},
                            {"envelope_holds", att.envelope_holds},
                            {"regime_flag", att.regime_flag}};
  r.checks["attraction"] = att.pass;

  if (model.noise().count() == 0 && model.force().is_constant()) {
    const double res = stationary_residual(model, sol.at(0, 0).value, pts[0]);
    r.report["stationary_residual"] = res;
    r.checks["stationary_residual"] = res <= 1e-6;
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k = 1; k < pts.size(); ++k) pairs.emplace_back(0, k);
  const auto hol = holder_field_test(sol, s.p, pairs, model.force().holder_gamma());
  std::vector<std::vector<double>> hrows;
  for (std::size_t k = 0; k < hol.separations.size(); ++k) hrows.push_back({hol.separations[k], hol.moments[k]});
  out.write_csv("holder.csv", {"separation", "moment"}, hrows);
  r.report["holder"] = {{"p", s.p}, {"fit", json_of(hol.fit)}, {"target", hol.target}, {"zero", hol.zero}};
  r.checks["holder_slope"] = hol.pass;
  return r;
}

ExperimentResult lyapunov_pipeline(const RunConfig& cfg, const Model& model, OutputDir& out) {
  ExperimentResult r;
  const auto& s = cfg.lyapunov;
  const auto probe = lyapunov_constants(model, {1.0, s.kappa, s.a, s.c});
  if (!std::isfinite(probe.eta0)) throw ConfigError("lyapunov-check needs noise (eta0 is infinite)");
  const LyapunovConfig lc{s.eta_fraction * probe.eta0, s.kappa, s.a, s.c};
  LyapunovOptions opt;
  opt.times = grid_times(model, s.horizon, s.samples);
  opt.paths = s.paths;
  opt.trajectory_base = base_of(cfg, kSaltLyapunov);
  const auto w0 = start_field(model.lattice(), derive_seed(cfg.seed, kSaltStart), 2, s.start_radius);
  const auto rep = lyapunov_check(model, lc, w0, origin_for(model), opt);
  std::vector<std::vector<double>> rows;
  for (const auto& b : rep.exp_moment) rows.push_back({b.t, b.lhs, b.se, b.log_rhs});
  out.write_csv("lyapunov.csv", {"t", "lhs", "se", "log_rhs"}, rows);
  r.report["seeds"] = {{"trajectory_base", opt.trajectory_base}};
  r.report["eta"] = lc.eta;
  r.report["eta0"] = probe.eta0;
  r.report["log_C"] = rep.constants.log_C_moment;
  r.report["min_ess"] = rep.min_ess;
  r.report["enstrophy"] = {{"lhs", rep.enstrophy.lhs}, {"se", rep.enstrophy.se}, {"log_rhs", rep.enstrophy.log_rhs}};
  bool exp_moment = !rep.exp_moment.empty();
  for (const auto& b : rep.exp_moment) exp_moment = exp_moment && b.pass;
  r.checks["exp_moment"] = exp_moment;
  r.checks["enstrophy"] = rep.enstrophy.pass;
  return r;
}

ExperimentResult diophantine_pipeline(const RunConfig& cfg, const Model&, OutputDir& out) {
  ExperimentResult r;
  const auto& s = cfg.diophantine;
  const Frequency alpha{s.alpha.empty() ? std::vector<double>{(std::sqrt(5.0) - 1.0) / 2.0} : s.alpha};
  const auto d = diophantine_check(alpha, {s.K, s.A}, s.kmax);
  r.report["diophantine"] = {{"margin", d.margin},
                             {"worst_k", d.worst_k},
                             {"worst_distance", d.worst_distance},
                             {"admissible", d.admissible}};
  r.checks["diophantine"] = d.pass;
  const auto b = birkhoff_rate([](const TorusPoint& h) { return std::cos(h[0]); }, alpha,
                               TorusPoint::zero(alpha.dim()), s.counts, 1.0, s.A, 0.0);
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < b.counts.size(); ++k)
    rows.push_back({double(b.counts[k]), b.averages[k], b.errors[k], b.envelope[k]});
  out.write_csv("birkhoff.csv", {"N", "average", "error", "envelope"}, rows);
  r.report["birkhoff"] = {{"fit", json_of(b.fit)}, {"predicted_exponent", b.predicted_exponent}};
  r.checks["birkhoff_slope"] = b.fit.fitted && b.fit.slope <= s.max_slope;
  return r;
}

ExperimentResult lemmas_pipeline(const RunConfig& cfg, const Model&, OutputDir& out) {
  ExperimentResult r;
  const auto seed = derive_seed(cfg.seed, kSaltLemmas);
  const auto m = multinomial_suite(cfg.lemmas.multinomial_draws, seed, cfg.lemmas.multinomial_tolerance);
  const auto h = holder_suite(cfg.lemmas.holder_draws, derive_seed(seed, 1));
  out.write_csv("lemmas.csv", {"suite", "draws", "failures", "worst"},
                {{1.0, double(m.draws), double(m.failures), m.worst}, {2.0, double(h.draws), double(h.failures), h.worst}});
  r.report["seeds"] = {{"multinomial", seed}, {"holder", derive_seed(seed, 1)}};
  r.report["multinomial"] = {{"draws", m.draws}, {"failures", m.failures}, {"worst_residual", m.worst}};
  r.report["holder"] = {
      {"draws", h.draws}, {"failures", h.failures}, {"worst_margin", h.worst}, {"equality_error", h.equality_error}};
  r.checks["multinomial"] = m.pass;
  r.checks["holder"] = h.pass;
  return r;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"simulate", "invariant-measure", "mixing-rate",     "slln",
                                              "clt",      "hormander-check",   "attractor",       "lyapunov-check",
                                              "diophantine", "lemmas"};
  return names;
}

ExperimentResult run_experiment(const std::string& sub, const RunConfig& cfg, OutputDir& out) {
  const bool needs_model = sub != "diophantine" && sub != "lemmas";
  const Model model = needs_model ? build_model(cfg) : build_model(default_config());
  if (sub == "simulate") return simulate_pipeline(cfg, model, out);
  if (sub == "invariant-measure") return invariant_pipeline(cfg, model, out);
  if (sub == "mixing-rate") return mixing_pipeline(cfg, model, out);
  if (sub == "slln") return slln_pipeline(cfg, model, out);
  if (sub == "clt") return clt_pipeline(cfg, model, out);
  if (sub == "hormander-check") return hormander_pipeline(cfg, model, out);
  if (sub == "attractor") return attractor_pipeline(cfg, model, out);
  if (sub == "lyapunov-check") return lyapunov_pipeline(cfg, model, out);
  if (sub == "diophantine") return diophantine_pipeline(cfg, model, out);
  if (sub == "lemmas") return lemmas_pipeline(cfg, model, out);
  throw ConfigError("unknown subcommand '" + sub + "'");
}

}  // namespace qpns::cli
