// Acceptance suite: one line per criterion, exit status 0 only when all pass.
// Oracles are computed here, independently of the estimators under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "app.hpp"
#include "qpns/error.hpp"
#include "qpns/hormander.hpp"
#include "qpns/numeric.hpp"
#include "qpns/parallel.hpp"
#include "qpns/rng.hpp"
#include "qpns/spectral.hpp"
#include "qpns/stats.hpp"
#include "qpns/transport.hpp"

using namespace qpns;
namespace fs = std::filesystem;
using J = nlohmann::ordered_json;

namespace {

const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;
const Frequency kAlpha{{kGolden, std::numbers::sqrt2 - 1.0}};
const TorusPoint kOrigin = TorusPoint::zero(2);

struct Outcome {
  bool pass = true;
  std::string detail;

  // Records one clause; the outcome passes when every clause does.
  void clause(bool ok, const std::string& text) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += text + (ok ? "" : " [x]");
  }
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

fs::path config_dir() { return fs::path(QPNS_SOURCE_DIR) / "configs"; }

fs::path scratch_root() {
  static const fs::path p = [] {
    auto d = fs::temp_directory_path() / "qpns_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

cli::RunConfig load(const std::string& name) { return cli::load_config((config_dir() / name).string()); }

cli::ExperimentResult experiment(const std::string& sub, const cli::RunConfig& cfg, const std::string& tag) {
  cli::OutputDir out(scratch_root() / tag);
  return cli::run_experiment(sub, cfg, out);
}

SpectralVorticity random_field(const LatticePtr& lat, std::uint64_t seed, std::uint64_t id, int radius = 0) {
  const CounterRng rng(seed);
  SpectralVorticity w(lat);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto [k1, k2] = lat->mode(i);
    if (radius > 0 && (std::abs(k1) > radius || std::abs(k2) > radius)) continue;
    w[i] = Complex(rng.normal(StreamTag::kPerturbation, id, i, 0), rng.normal(StreamTag::kPerturbation, id, i, 1));
  }
  return w;
}

double max_abs_diff(const SpectralVorticity& a, const SpectralVorticity& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const SpectralVorticity& a) {
  double m = 0.0;
  for (const auto& c : a.coeffs()) m = std::max(m, std::abs(c));
  return m;
}

// Linear model on N = 1 with noise cos x1 of amplitude b: x = Re w_(1,0) solves
// dx = -nu x dt + (b / 2) dW.
Model ou_model(double nu, double b, double dt, std::uint64_t seed) {
  const auto lat = ModeLattice::make(1);
  NoiseConfig noise{{SpectralVorticity::cos_mode(lat, 1, 0, b)}, seed};
  return Model(SimConfig{nu, dt, lat, false}, QuasiPeriodicForce::zero(kAlpha, lat), noise);
}

SpectralVorticity ou_state(const LatticePtr& lat, double x) { return SpectralVorticity::cos_mode(lat, 1, 0, 2.0 * x); }

// Exact stationary OU sample cloud: x ~ N(0, b^2 / (8 nu)).
EmpiricalMeasure ou_cloud(const Model& model, std::size_t n, double b, std::uint64_t seed) {
  const CounterRng rng(seed);
  const double sd = b / std::sqrt(8.0 * model.config().nu);
  std::vector<SpectralVorticity> ps;
  for (std::size_t i = 0; i < n; ++i) ps.push_back(ou_state(model.lattice(), sd * rng.normal(StreamTag::kSampling, i, 0, 0)));
  return EmpiricalMeasure::uniform(std::move(ps));
}

// ------------------------------------------------------------------ 1, 2

Outcome spectral_identities() {
  Outcome o;
  double energy = 0.0, divergence = 0.0;
  for (int n : {8, 16}) {
    const auto lat = ModeLattice::make(n);
    PseudoSpectral ps(lat);
    for (std::uint64_t id = 0; id < 1000; ++id) {
      const auto w = random_field(lat, 101 + n, id);
      energy = std::max(energy, std::abs(inner(ps.advection(w), w)) / std::pow(norm(w), 3));
      divergence = std::max(divergence, biot_savart(w).divergence_residual());
    }
  }
  o.clause(energy <= 1e-10, "max |<B(Kw,w),w>|/|w|^3 = " + num(energy));
  o.clause(divergence <= 1e-12, "max div residual = " + num(divergence));
  return o;
}

Outcome nonlinearity_oracle() {
  Outcome o;
  double worst = 0.0;
  for (int n : {2, 4, 6, 8, 12}) {
    const auto lat = ModeLattice::make(n);
    PseudoSpectral ps(lat);
    for (std::uint64_t id = 0; id < 4; ++id) {
      const auto u = random_field(lat, 202, id, n / 2);
      const auto w = random_field(lat, 202, id + 50, n / 2);
      const auto dense = dense_advection(u, w);
      worst = std::max(worst, max_abs_diff(ps.advection(u, w), dense) / max_abs(dense));
    }
  }
  o.clause(worst <= 1e-12, "FFT vs dense relative error " + num(worst));
  const auto lat = ModeLattice::make(4);
  const auto w = SpectralVorticity::cos_mode(lat, 1, 0) + SpectralVorticity::cos_mode(lat, 1, 1);
  const auto hand = SpectralVorticity::cos_mode(lat, 2, 1, 0.25) - SpectralVorticity::cos_mode(lat, 0, 1, 0.25);
  const double ex = std::max(max_abs_diff(nonlinear_term(w), hand), max_abs_diff(dense_advection(w, w), hand));
  o.clause(ex <= 1e-12, "hand example error " + num(ex));
  return o;
}

// ------------------------------------------------------------------ 3

Outcome hormander() {
  Outcome o;
  const auto lat = ModeLattice::make(4);
  const std::vector<SpectralVorticity> four{SpectralVorticity::cos_mode(lat, 1, 0), SpectralVorticity::sin_mode(lat, 1, 0),
                                            SpectralVorticity::cos_mode(lat, 1, 1), SpectralVorticity::sin_mode(lat, 1, 1)};
  const auto within = bracket_closure(four, lat, 6);
  const auto full = bracket_closure(four, lat, 30);
  o.clause(within.saturated, "rank after 6 generations " + std::to_string(within.rank()) + "/" + std::to_string(within.dim));
  o.clause(full.saturated, "saturates at generation " + std::to_string(full.generations));
  const auto line = bracket_closure({four[0], four[1]}, lat, 6);
  o.clause(line.stalled && !line.saturated, "single-line set stalls at rank " + std::to_string(line.rank()));
  return o;
}

// ------------------------------------------------------------------ 4

Outcome lemmas() {
  Outcome o;
  const auto m = multinomial_suite(10000, 404, 1e-9);
  o.clause(m.pass && m.draws == 10000, "multinomial worst residual " + num(m.worst));
  // Independent check of the equality case: both sides equal 2 e^-1 exactly.
  const auto eq = holder_exponent_bound(1.0, 1.0, 1.0, 1.0, std::exp(-2.0));
  const double eq_err = std::max(std::abs(eq.lhs - 2.0 * std::exp(-1.0)), std::abs(eq.rhs - 2.0 * std::exp(-1.0)));
  const auto h = holder_suite(10000, 405);
  o.clause(h.pass && h.draws == 10000, "Holder bound failures " + std::to_string(h.failures) + " of 10^4");
  o.clause(eq_err <= 1e-12 && h.equality_error <= 1e-12, "equality case error " + num(eq_err));
  return o;
}

// ------------------------------------------------------------------ 5

double brute_force_assignment(const std::vector<double>& c, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c[i * n + p[i]];
    best = std::min(best, s / static_cast<double>(n));
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

EmpiricalMeasure cloud(const LatticePtr& lat, std::size_t n, std::uint64_t id0, double scale, double shift) {
  std::vector<SpectralVorticity> ps;
  for (std::size_t i = 0; i < n; ++i) {
    auto w = scale * random_field(lat, 505, id0 + i);
    w[0] += Complex(shift, 0.0);
    ps.push_back(std::move(w));
  }
  return EmpiricalMeasure::uniform(std::move(ps));
}

Outcome transport() {
  Outcome o;
  const auto lat = ModeLattice::make(1);
  const CostSpec spec{0.01, 1.0, 16};
  double perm = 0.0;
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::uint64_t rep = 0; rep < 10; ++rep) {
      const auto a = cloud(lat, n, 1000 * rep, 0.3, 0.0);
      const auto b = cloud(lat, n, 1000 * rep + 500, 0.3, 0.2);
      const double exact = wasserstein_exact(a, b, spec).distance;
      perm = std::max(perm, std::abs(exact - brute_force_assignment(cost_matrix(a, b, spec), n)));
    }
  o.clause(perm <= 1e-9, "max |exact - permutation min| " + num(perm));
  double gap = 0.0;
  for (std::size_t n : {8, 32, 64}) {
    const auto a = cloud(lat, n, 20000 + n, 0.3, 0.0);
    auto b = cloud(lat, n, 30000 + n, 0.3, 0.25);
    const CounterRng rng(506);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += b.weights[i] = 0.05 + rng.uniform(StreamTag::kSampling, n, i, 0);
    for (auto& w : b.weights) w /= s;
    gap = std::max(gap, std::abs(duality_gap(a, b, spec).gap));
  }
  o.clause(gap <= 1e-7, "max duality gap " + num(gap));
  const auto a = cloud(lat, 256, 40000, 0.3, 0.0);
  const auto b = cloud(lat, 256, 50000, 0.3, 0.3);
  const double exact = wasserstein_exact(a, b, spec).distance;
  const auto sk = wasserstein_sinkhorn(a, b, spec, 0.01, 20000, 1e-5);
  const double rel = std::abs(sk.upper - exact) / exact;
  o.clause(rel <= 0.02, "Sinkhorn relative error at 256 points " + num(rel));
  return o;
}

// ------------------------------------------------------------------ 6

Outcome linear_closed_forms() {
  Outcome o;
  {
    // Two directions on different shells: cos x1 (amp 2) and sin(x1 + x2) (amp 1).
    const auto lat = ModeLattice::make(2);
    const double nu = 0.5, t = 20.0;
    NoiseConfig noise{{SpectralVorticity::cos_mode(lat, 1, 0, 2.0), SpectralVorticity::sin_mode(lat, 1, 1, 1.0)}, 61};
    const Model m(SimConfig{nu, 0.05, lat, false}, QuasiPeriodicForce::zero(kAlpha, lat), noise);
    const std::size_t M = 10000;
    const auto i10 = lat->find(1, 0)->index, i11 = lat->find(1, 1)->index;
    std::vector<double> re10(M), im11(M);
    parallel_for(M, [&](std::size_t j) {
      const auto w = evolve(0.0, t, kOrigin, SpectralVorticity(lat), m, WienerPath(61, j));
      re10[j] = w[i10].real() * w[i10].real();
      im11[j] = w[i11].imag() * w[i11].imag();
    });
    // |g(k)|^2 / (2 nu |k|^2) with g(k) the Fourier coefficient, times the transient factor.
    const double v10 = 1.0 / (2.0 * nu * 1.0) * (1.0 - std::exp(-2.0 * nu * t));
    const double v11 = 0.25 / (2.0 * nu * 2.0) * (1.0 - std::exp(-4.0 * nu * t));
    const auto e10 = mean_se(re10), e11 = mean_se(im11);
    o.clause(std::abs(e10.mean - v10) <= 3.0 * e10.se, "Var Re w(1,0) " + num(e10.mean) + " vs " + num(v10));
    o.clause(std::abs(e11.mean - v11) <= 3.0 * e11.se, "Var Im w(1,1) " + num(e11.mean) + " vs " + num(v11));
  }
  const double b = 2.0, lambda = 1.0;
  const double sigma2 = (b / 2.0) * (b / 2.0) / (lambda * lambda);
  {
    const auto m = ou_model(lambda, b, 0.02, 62);
    const auto phi = CenteredObservable::uncentered(Observable::mode_re(1, 0), 2);
    CorrectorOptions opt;
    opt.t_chi = 10.0;
    opt.paths = 400;
    for (double x : {1.5, -0.8}) {
      const auto est = estimate_corrector(m, phi, ou_state(m.lattice(), x), kOrigin, opt);
      o.clause(std::abs(est.value - x / lambda) <= 3.0 * est.se,
               "chi(" + num(x) + ") " + num(est.value) + " +- " + num(est.se));
    }
  }
  {
    // The OU mean 0 is exact, so the uncentered observable is the centered one.
    const auto m = ou_model(lambda, b, 0.02, 63);
    const auto phi = CenteredObservable::uncentered(Observable::mode_re(1, 0), 2);
    const double T = 100.0;
    const auto starts = ou_cloud(m, 400, b, 64);
    const auto direct = estimate_sigma2_direct(m, phi, starts, kOrigin, T, 1500, 65);
    // Stationary start: E (int_0^T x)^2 / T = sigma^2 (1 - (1 - e^{-lambda T}) / (lambda T)).
    const double finite_t = sigma2 * (1.0 - (1.0 - std::exp(-lambda * T)) / (lambda * T));
    o.clause(std::abs(direct.value - finite_t) <= 3.0 * direct.se,
             "sigma2 direct " + num(direct.value) + " +- " + num(direct.se) + " vs " + num(finite_t));
    MeasurePath gamma;
    gamma.dim = 2;
    gamma.resolution = 1;
    gamma.measures.push_back(starts);
    Sigma2CorrectorOptions sopt;
    sopt.corrector.t_chi = 8.0;
    sopt.corrector.paths = 40;
    const auto corr = estimate_sigma2_corrector(m, phi, gamma, sopt);
    o.clause(std::abs(corr.corrector_route.value - sigma2) <= 3.0 * corr.corrector_route.se,
             "sigma2 corrector " + num(corr.corrector_route.value) + " +- " + num(corr.corrector_route.se));
  }
  {
    const double nu = 0.7;
    const auto lat = ModeLattice::make(2);
    NoiseConfig noise{{SpectralVorticity::cos_mode(lat, 1, 0, 1.0)}, 66};
    const Model m(SimConfig{nu, 0.01, lat, false}, QuasiPeriodicForce::zero(kAlpha, lat), noise);
    const auto w1 = SpectralVorticity::cos_mode(lat, 1, 0, 1.5) + SpectralVorticity::sin_mode(lat, 0, 1, 0.5);
    const auto w2 = SpectralVorticity::cos_mode(lat, 1, 0, -1.0);
    MixingOptions opt;
    opt.particles = 48;
    for (int k = 0; k <= 10; ++k) opt.times.push_back(0.4 * k);
    opt.cost = {0.0, 1.0, 16};
    opt.trajectory_base = 67;
    const auto rep = mixing_rate(m, EmpiricalMeasure::dirac(w1), EmpiricalMeasure::dirac(w2), kOrigin, 0.0, opt);
    const double rate = rep.synchronous_fit.exponent;
    o.clause(rep.synchronous_fit.fitted && std::abs(rate - nu) <= 0.02 * nu,
             "shared-noise rate " + num(rate) + " vs nu|k|^2_min " + num(nu));
  }
  return o;
}

// ------------------------------------------------------------------ 7

Outcome lyapunov() {
  Outcome o;
  auto cfg = cli::default_config();
  cfg.lyapunov.horizon = 20.0;
  cfg.lyapunov.paths = 1000;
  const auto r = experiment("lyapunov-check", cfg, "lyapunov");
  o.clause(r.checks.value("exp_moment", false), "exponential moment bound over t in [0, 20] at N = " + std::to_string(cfg.truncation) +
                                             ", eta = " + num(r.report.value("eta", 0.0)) +
                                             ", min ESS " + num(r.report.value("min_ess", 0.0)));
  return o;
}

// ------------------------------------------------------------------ 8

Outcome nonlinear_mixing() {
  Outcome o;
  const auto cfg = cli::default_config();
  const auto r = experiment("mixing-rate", cfg, "mixing");
  const auto& f = r.report["fit"];
  o.clause(r.checks.value("fitted", false) && r.checks.value("r2", false), "R^2 " + num(f.value("r2", 0.0)));
  o.clause(r.checks.value("decades", false), "decades " + num(f.value("decades", 0.0)));
  o.clause(r.checks.value("rate_ci_excludes_zero", false),
           "rate " + num(f.value("rate", 0.0)) + " CI [" + num(f.value("ci_lo", 0.0)) + ", " + num(f.value("ci_hi", 0.0)) + "]");
  return o;
}

// ------------------------------------------------------------------ 9, 10, 11

struct LimitRuns {
  cli::ExperimentResult linear_slln, nonlinear_slln;
  bool done = false;
};

LimitRuns& limit_runs() {
  static LimitRuns runs;
  if (!runs.done) {
    runs.linear_slln = experiment("slln", load("linear.toml"), "slln_linear");
    runs.nonlinear_slln = experiment("slln", load("nonlinear.toml"), "slln_nonlinear");
    runs.done = true;
  }
  return runs;
}

Outcome slln() {
  Outcome o;
  auto& runs = limit_runs();
  for (const auto* r : {&runs.linear_slln, &runs.nonlinear_slln}) {
    const std::string label = r == &runs.linear_slln ? "linear" : "nonlinear N = 8";
    o.clause(r->checks.value("slope_in_range", false), label + " slope " + num(r->report["fit"].value("slope", 0.0)));
  }
  return o;
}

Outcome clt() {
  Outcome o;
  for (const char* name : {"linear.toml", "nonlinear.toml"}) {
    const auto cfg = load(name);
    const auto r = experiment("clt", cfg, std::string("clt_") + name);
    o.clause(r.checks.value("ks", false) && cfg.clt.paths == 2000,
             std::string(name) + " KS " + num(r.report.value("ks", 1.0)) + " <= " + num(cfg.clt.ks_tolerance) +
                 " (sigma2 " + num(r.report["sigma2_corrector"].value("value", 0.0)) + ")");
  }
  const auto m = ou_model(1.0, 2.0, 0.05, 71);
  CltOptions opt;
  opt.horizon = 20.0;
  opt.paths = 2000;
  const auto zero = CenteredObservable::uncentered(Observable::constant(0.0), 2);
  const auto d = clt_run(m, zero, SpectralVorticity(m.lattice()), kOrigin, 0.0, opt);
  o.clause(d.degenerate && d.ks <= 0.05, "degenerate weighted distance " + num(d.ks));
  return o;
}

Outcome martingale() {
  Outcome o;
  // Linear oracle with sin x1 noise: Im w_(1,0) has exact invariant mean 0
  // under the reflection-symmetrized measure estimate.
  const auto lat = ModeLattice::make(1);
  NoiseConfig noise{{SpectralVorticity::sin_mode(lat, 1, 0, 2.0)}, 81};
  const Model m(SimConfig{1.0, 0.02, lat, false}, QuasiPeriodicForce::zero(kAlpha, lat), noise);
  InvariantOptions iopt;
  iopt.particles = 200;
  iopt.t_back = 10.0;
  iopt.trajectory_base = 82;
  iopt.symmetrize = true;
  const auto gamma = build_measure_path(m, 1, iopt);
  const auto phi = center(Observable::mode_im(1, 0), gamma);
  CorrectorOptions copt;
  copt.t_chi = 8.0;
  copt.paths = 40;
  copt.trajectory_base = 83;
  const auto chi = corrector_function(m, phi, copt);
  const auto& starts = gamma.measures[0].particles;
  std::vector<MartingaleDecomposition> ens(300);
  parallel_for(ens.size(), [&](std::size_t j) {
    ens[j] = martingale_decompose(m, starts[j % starts.size()], kOrigin, 6.0, WienerPath(81, 1000 + j), phi, chi);
  });
  const auto good = test_martingale_property(ens);
  o.clause(good.slope_ci.first <= 0.0 && good.slope_ci.second >= 0.0 && good.pass,
           "centered slope CI [" + num(good.slope_ci.first) + ", " + num(good.slope_ci.second) + "]");
  const auto energy = CenteredObservable::uncentered(Observable::energy(), 2);
  const auto zero_chi = [](const SpectralVorticity&, const TorusPoint&) { return 0.0; };
  std::vector<MartingaleDecomposition> bad(300);
  parallel_for(bad.size(), [&](std::size_t j) {
    bad[j] = martingale_decompose(m, starts[j % starts.size()], kOrigin, 6.0, WienerPath(81, 5000 + j), energy, zero_chi);
  });
  const auto control = test_martingale_property(bad);
  o.clause(!control.pass, "uncentered control rejected (intercept CI [" + num(control.intercept_ci.first) + ", " +
                              num(control.intercept_ci.second) + "])");
  auto& runs = limit_runs();
  for (const auto* r : {&runs.linear_slln, &runs.nonlinear_slln}) {
    const std::string label = r == &runs.linear_slln ? "linear" : "nonlinear";
    double slope = 0.0;
    bool fitted = false;
    for (const auto& mo : r->report["moments"])
      if (mo.value("p", 0) == 1 && mo.contains("fit")) {
        slope = mo["fit"].value("slope", 0.0);
        fitted = mo["fit"].value("fitted", false);
      }
    o.clause(fitted && slope <= -0.85, label + " p = 1 moment slope " + num(slope));
  }
  return o;
}

// ------------------------------------------------------------------ 12

Outcome diophantine() {
  Outcome o;
  const Frequency golden{{kGolden}};
  const auto g = diophantine_check(golden, {0.38, 1.0}, 100000);
  o.clause(g.pass, "golden margin " + num(g.margin));
  const auto q = diophantine_check(Frequency{{3.0 / 8.0}}, {0.38, 1.0}, 100000);
  o.clause(!q.pass, "rational 3/8 margin " + num(q.margin));
  const auto b = birkhoff_rate([](const TorusPoint& h) { return std::cos(h[0]); }, golden, TorusPoint::zero(1),
                               {10, 30, 100, 300, 1000, 3000, 10000, 30000, 100000}, 1.0, 1.0, 0.0);
  o.clause(b.fit.fitted && b.fit.slope <= -0.5, "Birkhoff slope " + num(b.fit.slope));
  return o;
}

// ------------------------------------------------------------------ 13

Outcome attractor() {
  Outcome o;
  const auto cfg = load("laminar.toml");
  const auto r = experiment("attractor", cfg, "attractor");
  const auto& th = r.report["thresholds"];
  o.clause(r.checks.value("laminar_thresholds", false), "G c0 = " + num(th.value("G", 0.0) * th.value("c0", 0.0)));
  o.clause(r.checks.value("pullback_converged", false) && r.checks.value("start_independent", false),
           "3-start gap " + num(r.report.value("start_gap", 1.0)));
  o.clause(r.checks.value("forward_invariant", false),
           "forward invariance " + num(r.report.value("forward_invariance_delta", 1.0)));
  const auto& fit = r.report["attraction"]["fit"];
  o.clause(r.checks.value("attraction", false), "attraction rate " + num(fit.value("rate", 0.0)) + " CI lo " +
                                                    num(fit.value("ci_lo", 0.0)));
  const auto& hol = r.report["holder"];
  o.clause(r.checks.value("holder_slope", false), "Holder slope " + num(hol["fit"].value("slope", 0.0)) +
                                                      " target " + num(hol.value("target", 0.0)));
  // Deterministic run: the same field with its symbol frozen, no noise.
  auto steady = cfg;
  steady.noise_kind = "none";
  for (auto& t : steady.force) t.m.assign(t.m.size(), 0);
  const auto d = experiment("attractor", steady, "attractor_steady");
  o.clause(d.checks.value("stationary_residual", false),
           "stationary residual " + num(d.report.value("stationary_residual", 1.0)));
  return o;
}

// ------------------------------------------------------------------ 14

std::map<std::string, std::string> data_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[rel] = ss.str();
  }
  return out;
}

Outcome reproducibility() {
  Outcome o;
  std::vector<std::pair<std::string, cli::RunConfig>> runs;
  {
    auto c = load("nonlinear.toml");
    c.invariant.particles = 16;
    c.invariant.t_back = 2.0;
    runs.emplace_back("invariant-measure", c);
    c.mixing.particles = 16;
    c.mixing.horizon = 2.0;
    c.mixing.samples = 8;
    runs.emplace_back("mixing-rate", c);
  }
  {
    auto c = load("linear.toml");
    c.invariant.particles = 40;
    c.slln.horizons = {2.0, 10.0, 70.0};
    c.slln.paths = 16;
    runs.emplace_back("slln", c);
    c.clt.paths = 500;
    c.clt.horizon = 5.0;
    c.clt.corrector_paths = 10;
    c.clt.max_particles = 10;
    c.clt.t_chi = 4.0;
    runs.emplace_back("clt", c);
  }
  {
    auto c = load("laminar.toml");
    c.attractor.doublings = 4;
    c.attractor.seeds = 2;
    runs.emplace_back("attractor", c);
  }
  const int saved = thread_count();
  std::ostringstream log;
  for (const auto& [sub, cfg] : runs) {
    std::vector<std::map<std::string, std::string>> outputs;
    for (int threads : {1, 2, 1}) {
      set_thread_count(threads);
      const auto dir = scratch_root() / ("repro_" + sub + "_" + std::to_string(outputs.size()));
      cli::run(sub, cfg, dir.string(), log);
      outputs.push_back(data_files(dir));
    }
    const bool same = !outputs[0].empty() && outputs[0] == outputs[1] && outputs[0] == outputs[2];
    o.clause(same, sub + " (" + std::to_string(outputs[0].size()) + " files)");
  }
  set_thread_count(saved);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0: no runtime clause
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> all{
      {1, "spectral identities", 10.0, spectral_identities},
      {2, "nonlinearity oracle", 0.0, nonlinearity_oracle},
      {3, "bracket spanning", 30.0, hormander},
      {4, "exact lemmas", 0.0, lemmas},
      {5, "optimal transport", 0.0, transport},
      {6, "linear closed forms", 300.0, linear_closed_forms},
      {7, "Lyapunov bound", 300.0, lyapunov},
      {8, "nonlinear mixing", 1800.0, nonlinear_mixing},
      {9, "SLLN rate", 1800.0, slln},
      {10, "CLT", 1800.0, clt},
      {11, "martingale property", 0.0, martingale},
      {12, "Diophantine and Birkhoff", 0.0, diophantine},
      {13, "attractor", 1800.0, attractor},
      {14, "reproducibility", 0.0, reproducibility},
  };
  std::size_t passed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.clause(false, std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0.0) o.clause(secs < c.budget_s, "runtime " + num(secs) + " s < " + num(c.budget_s) + " s");
    else o.detail += "; runtime " + num(secs) + " s";
    passed += o.pass ? 1 : 0;
    std::printf("criterion %2d %s  %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", passed, all.size());
  return passed == all.size() ? 0 : 1;
}
