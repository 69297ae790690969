#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "qpns/error.hpp"
#include "qpns/integrator.hpp"
#include "qpns/numeric.hpp"
#include "qpns/parallel.hpp"

using namespace qpns;
using testing_support::max_abs;
using testing_support::max_abs_diff;
using testing_support::random_field;

namespace {
const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;
const Frequency kAlpha{{kGolden, std::numbers::sqrt2 - 1.0}};

Model linear_model(double nu, double dt, double b = 2.0, int n = 2) {
  const auto lat = ModeLattice::make(n);
  SimConfig cfg{nu, dt, lat, false};
  NoiseConfig noise{{SpectralVorticity::cos_mode(lat, 1, 0, b)}, 17};
  return Model(cfg, QuasiPeriodicForce::zero(kAlpha, lat), noise);
}

Model nonlinear_model(int n, double nu, double dt) {
  const auto lat = ModeLattice::make(n);
  SimConfig cfg{nu, dt, lat, true};
  std::vector<ForceTerm> terms{{{1, 0}, SpectralVorticity::cos_mode(lat, 2, 1, 1.5), SpectralVorticity::cos_mode(lat, 1, 2, 0.5)},
                               {{0, 1}, SpectralVorticity::cos_mode(lat, 1, -1, 1.0), SpectralVorticity(lat)}};
  return Model(cfg, QuasiPeriodicForce(kAlpha, lat, terms), canonical_noise(lat, 0.7, 99));
}
}  // namespace

TEST_CASE("wiener path addressing") {
  const WienerPath p(5, 3);
  CHECK(p.xi(10, 1) == p.xi(10, 1));
  CHECK(p.xi(10, 1) != p.xi(10, 0));
  CHECK(p.xi(-1, 0) != p.xi(0, 0));
  CHECK(p.shifted(4).xi(6, 2) == p.xi(10, 2));
  CHECK(p.shifted(-20).xi(5, 0) == p.xi(-15, 0));
  CHECK(WienerPath(5, 4).xi(10, 1) != p.xi(10, 1));
  // Two-sided path: W(t_n) - W(t_m) is the sum of the consumed increments.
  const double dt = 0.1;
  CHECK(p.value(0, 0, dt) == 0.0);
  CHECK(p.value(3, 0, dt) - p.value(-2, 0, dt) ==
        doctest::Approx(std::sqrt(dt) * (p.xi(-2, 0) + p.xi(-1, 0) + p.xi(0, 0) + p.xi(1, 0) + p.xi(2, 0))));
  // Increments over [s, t] have variance t - s.
  double s2 = 0.0;
  const int m = 4000;
  for (int j = 0; j < m; ++j) {
    const WienerPath q(1, j);
    const double inc = q.value(5, 0, dt) - q.value(-5, 0, dt);
    s2 += inc * inc;
  }
  CHECK(s2 / m == doctest::Approx(1.0).epsilon(5 * std::sqrt(2.0 / m)));
}

TEST_CASE("pure linear decay is exact") {
  const auto lat = ModeLattice::make(4);
  const Model m(SimConfig{0.3, 0.05, lat, false}, QuasiPeriodicForce::zero(kAlpha, lat), NoiseConfig{});
  const auto w0 = random_field(lat, 2, 0);
  const auto w1 = step(w0, m, WienerPath(1, 0), 0.0, TorusPoint::zero(2));
  for (std::size_t i = 0; i < lat->size(); ++i)
    CHECK(std::abs(w1[i] - std::exp(-0.3 * lat->wavenumber_sq(i) * 0.05) * w0[i]) <= 1e-15 * std::abs(w0[i]));
  const Model half(SimConfig{0.3, 0.025, lat, false}, QuasiPeriodicForce::zero(kAlpha, lat), NoiseConfig{});
  const auto w2 = evolve(0.0, 0.05, TorusPoint::zero(2), w0, half, WienerPath(1, 0));
  CHECK(max_abs_diff(w1, w2) <= 1e-14 * max_abs(w0));
}

TEST_CASE("simulation bookkeeping") {
  const auto m = nonlinear_model(4, 0.5, 0.01);
  const auto lat = m.lattice();
  const auto w0 = random_field(lat, 3, 1);
  const TorusPoint h({0.5, 1.0});
  const auto same = simulate(1.0, 1.0, h, w0, m, WienerPath(1, 0));
  REQUIRE(same.states.size() == 1);
  CHECK(max_abs_diff(same.states[0], w0) == 0.0);
  SimOptions opt;
  opt.sample_interval = 0.25;
  opt.track_enstrophy = true;
  const auto traj = simulate(0.0, 2.0, h, w0, m, WienerPath(1, 0), opt);
  CHECK(traj.times.size() == 9);
  for (std::size_t i = 1; i < traj.times.size(); ++i) {
    CHECK(traj.times[i] > traj.times[i - 1]);
    CHECK(traj.enstrophy_integral[i] >= traj.enstrophy_integral[i - 1]);
  }
  CHECK_THROWS_AS(simulate(0.0, 0.005, h, w0, m, WienerPath(1, 0)), InvalidArgument);
  CHECK_THROWS_AS(simulate(1.0, 0.0, h, w0, m, WienerPath(1, 0)), InvalidArgument);
}

TEST_CASE("flow property on the step grid") {
  const auto m = nonlinear_model(4, 0.5, 0.01);
  const auto w0 = random_field(m.lattice(), 3, 2);
  const TorusPoint h({2.0, 0.1});
  const WienerPath path(8, 4);
  const auto direct = evolve(-1.0, 2.0, h, w0, m, path);
  const auto mid = evolve(-1.0, 0.5, h, w0, m, path);
  const auto restarted = evolve(0.5, 2.0, h, mid, m, path);
  CHECK(max_abs_diff(direct, restarted) <= 1e-10 * max_abs(direct));
}

TEST_CASE("translation identity") {
  const auto m = nonlinear_model(4, 0.5, 0.01);
  const auto w0 = random_field(m.lattice(), 3, 3);
  const TorusPoint h({2.0, 0.1});
  const WienerPath path(8, 5);
  for (double tau : {0.37, 3.0, -1.25}) {
    const auto a = evolve(1.0 + tau, 2.5 + tau, h, w0, m, path);
    const auto j = m.step_index(tau);
    const auto b = evolve(1.0, 2.5, rotate(h, kAlpha, tau), w0, m, path.shifted(j));
    CHECK(max_abs_diff(a, b) <= 1e-10 * max_abs(a));
  }
}

TEST_CASE("determinism across thread counts") {
  const auto m = nonlinear_model(4, 0.5, 0.01);
  auto run = [&](int threads) {
    set_thread_count(threads);
    return parallel_map<double>(8, [&](std::size_t j) {
      return norm(evolve(0.0, 1.0, TorusPoint::zero(2), SpectralVorticity(m.lattice()), m, WienerPath(3, j)));
    });
  };
  const auto one = run(1);
  CHECK(run(3) == one);
  set_thread_count(1);
}

TEST_CASE("pullback") {
  const auto m = linear_model(1.0, 0.01);
  const auto lat = m.lattice();
  const WienerPath path(2, 0);
  const auto w0 = random_field(lat, 1, 0);
  CHECK(max_abs_diff(simulate_pullback(0.0, TorusPoint::zero(2), w0, m, path), w0) == 0.0);
  // Starts differing along cos x1 (|k| = 1) separate exactly by e^{-nu T}.
  const auto d = SpectralVorticity::cos_mode(lat, 1, 0, 3.0);
  const double t = 2.5;
  const auto a = simulate_pullback(t, TorusPoint::zero(2), w0, m, path);
  const auto b = simulate_pullback(t, TorusPoint::zero(2), w0 + d, m, path);
  CHECK(norm(b - a) == doctest::Approx(std::exp(-t) * norm(d)).epsilon(1e-12));
  // The symbol at time 0 is h: a nonlinear pullback equals the forward run from -T with the same h.
  const auto nm = nonlinear_model(4, 0.5, 0.01);
  const TorusPoint h({1.0, 2.0});
  const auto p = simulate_pullback(1.5, h, SpectralVorticity(nm.lattice()), nm, path);
  const auto q = evolve(0.0, 1.5, rotate(h, kAlpha, -1.5), SpectralVorticity(nm.lattice()), nm, path.shifted(-150));
  CHECK(max_abs_diff(p, q) <= 1e-10 * max_abs(p));
}

TEST_CASE("OU reference matches the closed-form variance") {
  const auto m = linear_model(1.0, 0.05);
  const auto lat = m.lattice();
  CHECK(max_abs(ou_reference(Model(m.config(), m.force(), NoiseConfig{}), WienerPath(1, 0), 0.0, 2.0).states.back()) ==
        0.0);
  const double t = 1.0;
  const int samples = 10000;
  const auto idx = lat->find(1, 0)->index;
  std::vector<double> re(samples);
  for (int j = 0; j < samples; ++j) re[j] = ou_reference(m, WienerPath(6, j), 0.0, t).states.back()[idx].real();
  std::vector<double> sq(samples);
  for (int j = 0; j < samples; ++j) sq[j] = re[j] * re[j];
  const auto est = mean_se(sq);
  const double exact = 1.0 * (1.0 - std::exp(-2.0 * t)) / 2.0;
  CHECK(std::abs(est.mean - exact) <= 3.0 * est.se);
  // Same increments as the linear model from V(0) = 0.
  const auto v = ou_reference(m, WienerPath(6, 0), 0.0, t).states.back();
  const auto w = evolve(0.0, t, TorusPoint::zero(2), SpectralVorticity(lat), m, WienerPath(6, 0));
  CHECK(max_abs_diff(v, w) == 0.0);
}

TEST_CASE("stationary variance and energy balance of the linear system") {
  const auto m = linear_model(1.0, 0.02);
  const auto lat = m.lattice();
  const auto idx = lat->find(1, 0)->index;
  const auto var = m.ou_stationary_variance();
  CHECK(var[idx].first == doctest::Approx(0.5));
  CHECK(var[idx].second == 0.0);
  const int samples = 4000;
  std::vector<double> sq(samples), energy(samples);
  for (int j = 0; j < samples; ++j) {
    const auto w = evolve(0.0, 6.0, TorusPoint::zero(2), SpectralVorticity(lat), m, WienerPath(7, j));
    sq[j] = w[idx].real() * w[idx].real();
    energy[j] = norm_sq(w);
  }
  const auto est = mean_se(sq);
  CHECK(std::abs(est.mean - 0.5 * (1 - std::exp(-12.0))) <= 3.0 * est.se);
  // Stationary energy balance 2 nu E|w|_1^2 = B0, with |w|_1 = |w| on the |k| = 1 mode.
  const auto e = mean_se(energy);
  CHECK(std::abs(2.0 * e.mean - m.noise().energy_input()) <= 3.0 * 2.0 * e.se);
}

TEST_CASE("weak order on the energy observable") {
  const auto lat = ModeLattice::make(4);
  SimConfig cfg{0.5, 0.04, lat, true};
  std::vector<ForceTerm> terms{{{1, 0}, SpectralVorticity::cos_mode(lat, 2, 1, 1.0), SpectralVorticity(lat)}};
  const QuasiPeriodicForce psi(kAlpha, lat, terms);
  const Model coarse(cfg, psi, NoiseConfig{});
  cfg.dt = 0.02;
  const Model mid(cfg, psi, NoiseConfig{});
  cfg.dt = 0.01;
  const Model fine(cfg, psi, NoiseConfig{});
  cfg.dt = 0.00125;
  const Model ref(cfg, psi, NoiseConfig{});
  const auto w0 = 0.3 * random_field(lat, 4, 0, 2);
  const TorusPoint h({0.3, 0.3});
  const double e_ref = norm_sq(evolve(0.0, 2.0, h, w0, ref, WienerPath(1, 0)));
  const double e1 = std::abs(norm_sq(evolve(0.0, 2.0, h, w0, coarse, WienerPath(1, 0))) - e_ref);
  const double e2 = std::abs(norm_sq(evolve(0.0, 2.0, h, w0, mid, WienerPath(1, 0))) - e_ref);
  const double e3 = std::abs(norm_sq(evolve(0.0, 2.0, h, w0, fine, WienerPath(1, 0))) - e_ref);
  // First order: halving dt roughly halves the error.
  CHECK(e2 / e1 == doctest::Approx(0.5).epsilon(0.25));
  CHECK(e3 / e2 == doctest::Approx(0.5).epsilon(0.25));
}

TEST_CASE("blow-up is reported with its time") {
  const auto lat = ModeLattice::make(4);
  const Model m(SimConfig{1e-3, 0.5, lat, true}, QuasiPeriodicForce::zero(kAlpha, lat), NoiseConfig{});
  auto w0 = random_field(lat, 1, 0);
  w0 *= 1e80;
  try {
    evolve(0.0, 50.0, TorusPoint::zero(2), w0, m, WienerPath(1, 0));
    FAIL("expected blow-up");
  } catch (const BlowUpError& e) {
    CHECK(e.time() > 0.0);
    CHECK(e.time() <= 50.0);
  }
}

TEST_CASE("regularization probe") {
  const auto lat = ModeLattice::make(4);
  const Model quiet(SimConfig{1.0, 0.05, lat, true}, QuasiPeriodicForce::zero(kAlpha, lat), NoiseConfig{});
  const auto starts = default_probe_starts(lat, 5.0, 1);
  CHECK(starts.size() == 7);
  for (const auto& s : starts) CHECK(norm(s) <= 5.0 * (1 + 1e-12));
  const std::vector<TorusPoint> symbols{TorusPoint::zero(2)};
  const auto det = regularization_probe(quiet, 5.0, {1e-3}, 20.0, starts, symbols, 4);
  CHECK(det.rows[0].p_min == 1.0);
  const auto noisy = nonlinear_model(4, 0.5, 0.02);
  const std::vector<TorusPoint> grid{TorusPoint::zero(2), TorusPoint({3.0, 3.0})};
  const auto table = regularization_probe(noisy, 5.0, {2.0, 5.0, 10.0, 40.0}, 1.0, starts, grid, 60);
  for (std::size_t i = 1; i < table.rows.size(); ++i) CHECK(table.rows[i].p_min >= table.rows[i - 1].p_min);
  CHECK(table.rows.back().ci_lo > 0.0);
  CHECK_THROWS_AS(regularization_probe(noisy, 1.0, {1.0}, 1.0, starts, grid, 2), InvalidArgument);
}
