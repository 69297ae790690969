#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>

#include "helpers.hpp"
#include "qpns/error.hpp"
#include "qpns/numeric.hpp"
#include "qpns/rng.hpp"
#include "qpns/transport.hpp"

using namespace qpns;
using testing_support::random_field;

namespace {

const Frequency kAlpha{{(std::sqrt(5.0) - 1.0) / 2.0, std::numbers::sqrt2 - 1.0}};

EmpiricalMeasure random_cloud(const LatticePtr& lat, std::size_t n, std::uint64_t id0, double scale, double shift = 0.0) {
  std::vector<SpectralVorticity> ps;
  for (std::size_t i = 0; i < n; ++i) {
    auto w = scale * random_field(lat, 7, id0 + i);
    w[0] += Complex(shift, 0.0);
    ps.push_back(w);
  }
  return EmpiricalMeasure::uniform(std::move(ps));
}

std::vector<double> random_weights(std::size_t n, std::uint64_t id) {
  const CounterRng rng(31);
  std::vector<double> w(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] = 0.05 + rng.uniform(StreamTag::kSampling, id, i, 0);
  for (auto& x : w) x /= s;
  return w;
}

// Composite Simpson rule with many panels.
double simpson_cost(const SpectralVorticity& a, const SpectralVorticity& b, double eta) {
  const int n = 20000;
  const double len = norm(b - a);
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double f = std::exp(eta * norm_sq(a + t * (b - a)));
    s += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return len * s / (3.0 * n);
}

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

Model linear_model(int n, double amp) {
  const auto lat = ModeLattice::make(n);
  SimConfig cfg{1.0, 0.01, lat, false};
  NoiseConfig noise{{SpectralVorticity::cos_mode(lat, 1, 0, amp)}, 23};
  return Model(cfg, QuasiPeriodicForce::zero(kAlpha, lat), noise);
}

}  // namespace

TEST_CASE("weighted cost examples and quadrature") {
  const auto lat = ModeLattice::make(2);
  const auto a = 0.2 * random_field(lat, 1, 0);
  const auto b = 0.2 * random_field(lat, 1, 1);
  const CostSpec spec{0.01, 1.0, 16};
  CHECK(weighted_cost(a, a, spec) == 0.0);
  CHECK(weighted_cost(a, b, spec) == doctest::Approx(weighted_cost(b, a, spec)).epsilon(1e-13));
  CHECK(weighted_cost(a, b, spec) == doctest::Approx(simpson_cost(a, b, 0.01)).epsilon(1e-10));
  const SpectralVorticity zero(lat);
  CHECK(weighted_cost(a, zero, spec) <= norm(a) * std::exp(0.01 * norm_sq(a)) * (1 + 1e-12));
  CHECK(weighted_cost(a, b, spec) > norm(a - b));
  CHECK(weighted_cost(a, b, {1e-9, 1.0, 16}) == doctest::Approx(norm(a - b)).epsilon(1e-7));
  CHECK(weighted_cost(a, b, {0.0, 1.0, 16}) == doctest::Approx(norm(a - b)).epsilon(1e-14));
  // The r-variant uses the weight V^r.
  CHECK(weighted_cost(a, b, {0.02, 0.5, 16}) == doctest::Approx(weighted_cost(a, b, spec)).epsilon(1e-12));
  auto big = 100.0 * a;
  CHECK_THROWS_AS(weighted_cost(big, zero, spec), InvalidArgument);
  CHECK_THROWS_AS(weighted_cost(a, b, {0.01, 1.0, 1}), InvalidArgument);
  CHECK_THROWS_AS(weighted_cost(a, b, {0.01, 1.5, 16}), InvalidArgument);
  CHECK_THROWS_AS(weighted_cost(a, SpectralVorticity(ModeLattice::make(3)), spec), InvalidArgument);
}

TEST_CASE("empirical measure validation") {
  const auto lat = ModeLattice::make(1);
  auto mu = random_cloud(lat, 3, 0, 1.0);
  CHECK_NOTHROW(mu.validate());
  mu.weights[0] += 1e-9;
  CHECK_THROWS_AS(mu.validate(), InvalidArgument);
  mu.weights = {1.5, -0.5, 0.0};
  CHECK_THROWS_AS(mu.validate(), InvalidArgument);
  EmpiricalMeasure mixed = random_cloud(lat, 2, 0, 1.0);
  mixed.particles[1] = SpectralVorticity(ModeLattice::make(2));
  CHECK_THROWS_AS(mixed.validate(), InvalidArgument);
}

TEST_CASE("exact transport equals the permutation minimum on small uniform instances") {
  const auto lat = ModeLattice::make(1);
  const CostSpec spec{0.01, 1.0, 16};
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::uint64_t rep = 0; rep < 6; ++rep) {
      const auto mu = random_cloud(lat, n, 100 * rep, 0.3);
      const auto nu = random_cloud(lat, n, 100 * rep + 50, 0.3, 0.2);
      const auto res = wasserstein_exact(mu, nu, spec);
      const double oracle = brute_force_assignment(cost_matrix(mu, nu, spec), n);
      CHECK(res.distance == doctest::Approx(oracle).epsilon(1e-10));
      CHECK(std::abs(res.distance - oracle) < 1e-9);
    }
  }
}

TEST_CASE("exact transport with general weights matches the dense simplex") {
  const CounterRng rng(5);
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const std::size_t m = 7 + rep, n = 9 + 2 * rep;
    std::vector<double> c(m * n);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = rng.uniform(StreamTag::kSampling, rep, k, 0);
    const auto a = random_weights(m, 2 * rep), b = random_weights(n, 2 * rep + 1);
    const auto ns = solve_transport(c, a, b);
    std::vector<double> A((m + n) * m * n, 0.0), rhs(a);
    rhs.insert(rhs.end(), b.begin(), b.end());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        A[i * m * n + i * n + j] = 1.0;
        A[(m + j) * m * n + i * n + j] = 1.0;
      }
    const auto lp = dense_simplex(A, rhs, c, m + n, m * n);
    CHECK(std::abs(ns.distance - lp.objective) < 1e-9);
    const auto rows = ns.plan.row_marginals(), cols = ns.plan.col_marginals();
    for (std::size_t i = 0; i < m; ++i) CHECK(std::abs(rows[i] - a[i]) < 1e-9);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(cols[j] - b[j]) < 1e-9);
    double total = 0.0;
    for (const auto& e : ns.plan.entries) {
      CHECK(e.mass >= 0.0);
      total += e.mass * c[e.i * n + e.j];
    }
    CHECK(total == doctest::Approx(ns.plan.cost).epsilon(1e-14));
    // Weak duality for the simplex multipliers.
    double dual = 0.0;
    for (std::size_t k = 0; k < m + n; ++k) dual += lp.y[k] * rhs[k];
    CHECK(dual == doctest::Approx(lp.objective).epsilon(1e-10));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(lp.y[i] + lp.y[m + j] <= c[i * n + j] + 1e-10);
  }
}

TEST_CASE("exact transport trivial cases and metric properties") {
  const auto lat = ModeLattice::make(1);
  const CostSpec spec{0.01, 1.0, 16};
  const auto a = 0.3 * random_field(lat, 2, 0), b = 0.3 * random_field(lat, 2, 1);
  CHECK(wasserstein_exact(EmpiricalMeasure::dirac(a), EmpiricalMeasure::dirac(b), spec).distance ==
        doctest::Approx(weighted_cost(a, b, spec)).epsilon(1e-12));
  const auto mu = random_cloud(lat, 40, 0, 0.3);
  CHECK(std::abs(wasserstein_exact(mu, mu, spec).distance) < 1e-12);
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto x = random_cloud(lat, 12, 1000 * rep, 0.3);
    const auto y = random_cloud(lat, 12, 1000 * rep + 100, 0.3, 0.3);
    const auto z = random_cloud(lat, 12, 1000 * rep + 200, 0.3, -0.2);
    const double xy = wasserstein_exact(x, y, spec).distance;
    CHECK(xy == doctest::Approx(wasserstein_exact(y, x, spec).distance).epsilon(1e-12));
    const double xz = wasserstein_exact(x, z, spec).distance;
    const double yz = wasserstein_exact(y, z, spec).distance;
    CHECK(xz <= xy + yz + 1e-9);
    CHECK(xy <= xz + yz + 1e-9);
  }
  CHECK_THROWS_AS(wasserstein_exact(mu, mu, spec, 10), InvalidArgument);
}

TEST_CASE("network simplex handles a larger degenerate instance") {
  const auto lat = ModeLattice::make(1);
  const CostSpec spec{0.0, 1.0, 16};
  const auto mu = random_cloud(lat, 300, 0, 0.3);
  auto shifted = mu;
  for (auto& p : shifted.particles) p[0] += Complex(0.05, 0.0);
  // A pure translation is optimal with the identity coupling.
  const double oracle = 0.05 * real_coordinate_scale();
  const auto res = wasserstein_exact(mu, shifted, spec);
  CHECK(res.distance == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("sinkhorn brackets and tracks the exact value at 256 particles") {
  const auto lat = ModeLattice::make(1);
  const CostSpec spec{0.01, 1.0, 16};
  const auto mu = random_cloud(lat, 256, 0, 0.3);
  const auto nu = random_cloud(lat, 256, 5000, 0.3, 0.3);
  const double exact = wasserstein_exact(mu, nu, spec).distance;
  double width = std::numeric_limits<double>::infinity();
  for (double eps : {0.1, 0.05, 0.02, 0.01}) {
    const auto s = wasserstein_sinkhorn(mu, nu, spec, eps, 20000, 1e-5);
    CHECK(s.lower <= exact + 1e-9);
    CHECK(s.upper >= exact - 1e-9);
    CHECK(s.upper - s.lower < width);
    width = s.upper - s.lower;
    if (eps <= 0.02) CHECK(std::abs(s.upper - exact) / exact < 0.02);
  }
  const auto self = wasserstein_sinkhorn(mu, mu, spec, 0.05, 20000, 1e-5);
  CHECK(std::abs(self.debiased) < 1e-10);
  CHECK_THROWS_AS(wasserstein_sinkhorn(mu, nu, spec, 0.001, 2, 1e-12), ConvergenceError);
  CHECK_THROWS_AS(wasserstein_sinkhorn(mu, nu, spec, 0.0, 10), InvalidArgument);
}

TEST_CASE("duality gap on two-point measures against the closed form") {
  const auto lat = ModeLattice::make(1);
  const CostSpec spec{0.01, 1.0, 16};
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    EmpiricalMeasure mu{{0.3 * random_field(lat, 3, 4 * rep), 0.3 * random_field(lat, 3, 4 * rep + 1)}, random_weights(2, rep)};
    EmpiricalMeasure nu{{0.3 * random_field(lat, 3, 4 * rep + 2), 0.3 * random_field(lat, 3, 4 * rep + 3)},
                        random_weights(2, 100 + rep)};
    const auto rep_ = duality_gap(mu, nu, spec);
    // 2x2 transport: the plan is one-parameter, cost linear in x11.
    const auto c = cost_matrix(mu, nu, spec);
    const double a1 = mu.weights[0], b1 = nu.weights[0], b2 = nu.weights[1];
    auto cost_at = [&](double t) {
      return t * c[0] + (a1 - t) * c[1] + (b1 - t) * c[2] + (b2 - a1 + t) * c[3];
    };
    const double raw = std::min(cost_at(std::max(0.0, a1 - b2)), cost_at(std::min(a1, b1)));
    CHECK(rep_.primal_raw == doctest::Approx(raw).epsilon(1e-12));
    CHECK(rep_.primal <= rep_.primal_raw + 1e-15);
    CHECK(std::abs(rep_.gap) <= 1e-9);
    CHECK(rep_.lipschitz_violation <= 1e-12);
  }
}

TEST_CASE("duality gap on 64-point measures") {
  const auto lat = ModeLattice::make(1);
  const CostSpec spec{0.01, 1.0, 16};
  const auto mu = random_cloud(lat, 64, 0, 0.3);
  auto nu = random_cloud(lat, 64, 900, 0.3, 0.25);
  nu.weights = random_weights(64, 3);
  const auto r = duality_gap(mu, nu, spec);
  CHECK(r.gap >= -1e-9);
  CHECK(r.gap <= 1e-7);
  CHECK(r.lipschitz_violation <= 1e-9);
  // Relabeling leaves the gap unchanged.
  auto mu_p = mu;
  std::reverse(mu_p.particles.begin(), mu_p.particles.end());
  auto nu_p = nu;
  std::rotate(nu_p.particles.begin(), nu_p.particles.begin() + 5, nu_p.particles.end());
  std::rotate(nu_p.weights.begin(), nu_p.weights.begin() + 5, nu_p.weights.end());
  const auto rp = duality_gap(mu_p, nu_p, spec);
  CHECK(rp.primal == doctest::Approx(r.primal).epsilon(1e-10));
  CHECK(std::abs(rp.gap) <= 1e-7);
  const auto same = duality_gap(mu, mu, spec);
  CHECK(std::abs(same.primal) < 1e-14);
  CHECK(std::abs(same.dual) < 1e-14);
  CHECK_THROWS_AS(duality_gap(random_cloud(lat, 65, 0, 0.3), mu, spec), InvalidArgument);
}

TEST_CASE("invariant measure of the linear system matches the OU law") {
  const auto model = linear_model(2, 2.0);
  InvariantOptions opt;
  opt.particles = 2000;
  opt.t_back = 5.0;
  opt.cost = {0.001, 1.0, 16};
  opt.check_stability = false;
  const TorusPoint h({0.3, 1.1});
  const auto est = estimate_invariant_measure(model, h, opt);
  const auto var = model.ou_stationary_variance();
  const auto idx = model.lattice()->find(1, 0)->index;
  std::vector<double> re, im;
  for (const auto& p : est.measure.particles) {
    re.push_back(p[idx].real() * p[idx].real());
    im.push_back(p[idx].imag());
  }
  const auto ms = mean_se(re);
  CHECK(std::abs(ms.mean - var[idx].first) < 3 * ms.se);
  CHECK(var[idx].first == doctest::Approx(0.5));
  for (double x : im) CHECK(x == 0.0);
  // Unforced modes carry no mass.
  const auto other = model.lattice()->find(1, 1)->index;
  for (const auto& p : est.measure.particles) CHECK(p[other] == Complex{});
}

TEST_CASE("invariant measure trivial cases, periodicity and stability") {
  const auto lat = ModeLattice::make(2);
  SimConfig cfg{1.0, 0.01, lat, true};
  const Model silent(cfg, QuasiPeriodicForce::zero(kAlpha, lat), NoiseConfig{{}, 1});
  InvariantOptions opt;
  opt.particles = 8;
  opt.t_back = 1.0;
  opt.cost = {0.001, 1.0, 16};
  const auto est = estimate_invariant_measure(silent, TorusPoint({0.0, 0.0}), opt);
  for (const auto& p : est.measure.particles) CHECK(norm(p) == 0.0);
  CHECK(est.stable);

  std::vector<ForceTerm> terms{{{1, 0}, SpectralVorticity::cos_mode(lat, 1, 1, 1.0), SpectralVorticity(lat)}};
  const Model forced(cfg, QuasiPeriodicForce(kAlpha, lat, terms), canonical_noise(lat, 0.5, 4));
  opt.particles = 16;
  opt.t_back = 10.0;
  opt.stabilization_tol = 1e-3;
  const auto base = estimate_invariant_measure(forced, TorusPoint({0.4, 2.0}), opt);
  CHECK(base.stable);
  CHECK(base.doubling_shift < 1e-3);
  opt.check_stability = false;
  const auto wrapped = estimate_invariant_measure(forced, TorusPoint({0.4 + 2 * std::numbers::pi, 2.0}), opt);
  CHECK(wasserstein_exact(base.measure, wrapped.measure, opt.cost).distance < 1e-9);
  opt.t_back = 0.05;
  opt.check_stability = true;
  opt.stabilization_tol = 1e-6;
  CHECK_FALSE(estimate_invariant_measure(forced, TorusPoint({0.4, 2.0}), opt).stable);
  opt.symmetrize = true;
  const auto sym = estimate_invariant_measure(forced, TorusPoint({0.4, 2.0}), opt);
  CHECK(sym.measure.size() == 32);
  CHECK(sym.measure.particles[16][3] == std::conj(sym.measure.particles[0][3]));
  opt.particles = 1;
  CHECK_THROWS_AS(estimate_invariant_measure(forced, TorusPoint({0.4, 2.0}), opt), InvalidArgument);
}

TEST_CASE("mixing rate of the linear system under shared noise") {
  const auto model = linear_model(2, 1.0);
  const auto lat = model.lattice();
  const auto w1 = SpectralVorticity::cos_mode(lat, 1, 0, 1.5) + SpectralVorticity::sin_mode(lat, 0, 1, 0.5);
  const auto w2 = SpectralVorticity::cos_mode(lat, 1, 0, -1.0);
  MixingOptions opt;
  opt.particles = 48;
  for (int k = 0; k <= 10; ++k) opt.times.push_back(0.4 * k);
  opt.cost = {0.0, 1.0, 16};
  const auto rep = mixing_rate(model, EmpiricalMeasure::dirac(w1), EmpiricalMeasure::dirac(w2), TorusPoint({0.0, 0.0}),
                               0.0, opt);
  REQUIRE(rep.synchronous_fit.fitted);
  CHECK(rep.synchronous_fit.exponent == doctest::Approx(1.0).epsilon(0.02));
  CHECK(rep.synchronous_fit.r2 > 0.999999);
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    CHECK(rep.synchronous[k] == doctest::Approx(norm(w1 - w2) * std::exp(-rep.times[k])).epsilon(1e-9));
    CHECK(rep.synchronous[k] <= (rep.distance[k] + rep.floor[k]) * (1 + 1e-12));
  }
  CHECK(rep.fit.fitted);
  CHECK(rep.fit.exponent > 0.0);
}

TEST_CASE("mixing rate refuses to fit identical starts") {
  const auto model = linear_model(2, 1.0);
  const auto w = SpectralVorticity::cos_mode(model.lattice(), 1, 0, 1.0);
  MixingOptions opt;
  opt.particles = 32;
  opt.times = {0.0, 0.5, 1.0, 1.5, 2.0};
  opt.cost = {0.0, 1.0, 16};
  const auto rep = mixing_rate(model, EmpiricalMeasure::dirac(w), EmpiricalMeasure::dirac(w), TorusPoint({0.0, 0.0}),
                               0.0, opt);
  CHECK_FALSE(rep.fit.fitted);
  CHECK(rep.fit.censored == opt.times.size());
  for (double d : rep.synchronous) CHECK(d == 0.0);
  opt.times = {1.0, 0.5};
  CHECK_THROWS_AS(mixing_rate(model, EmpiricalMeasure::dirac(w), EmpiricalMeasure::dirac(w), TorusPoint({0.0, 0.0}), 0.0,
                              opt),
                  InvalidArgument);
}

TEST_CASE("measure directories round-trip") {
  const auto lat = ModeLattice::make(3);
  auto mu = random_cloud(lat, 5, 0, 1.0);
  mu.weights = random_weights(5, 9);
  const auto dir = (std::filesystem::temp_directory_path() / "qpns_measure_test").string();
  save_measure(dir, mu, R"({"t_back": 4.0})");
  const auto back = load_measure(dir);
  REQUIRE(back.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back.weights[i] == mu.weights[i]);
    for (std::size_t k = 0; k < mu.particles[i].size(); ++k) CHECK(back.particles[i][k] == mu.particles[i][k]);
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_measure(dir), Error);
}
