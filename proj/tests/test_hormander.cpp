#include <doctest.h>

#include <Eigen/Dense>
#include <cstdlib>

#include "helpers.hpp"
#include "qpns/error.hpp"
#include "qpns/hormander.hpp"

using namespace qpns;

namespace {

std::vector<SpectralVorticity> four_directions(const LatticePtr& lat) {
  return {SpectralVorticity::cos_mode(lat, 1, 0), SpectralVorticity::sin_mode(lat, 1, 0),
          SpectralVorticity::cos_mode(lat, 1, 1), SpectralVorticity::sin_mode(lat, 1, 1)};
}

std::size_t svd_rank(const std::vector<SpectralVorticity>& fields) {
  const auto dim = fields.front().lattice()->real_dimension();
  Eigen::MatrixXd m(dim, fields.size());
  for (std::size_t j = 0; j < fields.size(); ++j) {
    const auto v = fields[j].to_real();
    for (std::size_t i = 0; i < dim; ++i) m(i, j) = v[i];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) r += s(i) > 1e-10 * s(0) ? 1 : 0;
  return r;
}

// Literal A_k sets, brackets taken over every element.
std::vector<std::size_t> brute_force_history(const std::vector<SpectralVorticity>& gens, int max_gen) {
  std::vector<SpectralVorticity> all = gens;
  std::vector<SpectralVorticity> last = gens;
  std::vector<std::size_t> hist{svd_rank(all)};
  for (int k = 2; k <= max_gen; ++k) {
    std::vector<SpectralVorticity> next;
    for (const auto& h : last)
      for (const auto& g : gens) next.push_back(symmetrized_bracket(h, g));
    all.insert(all.end(), next.begin(), next.end());
    last = std::move(next);
    hist.push_back(svd_rank(all));
  }
  return hist;
}

// Each bracket with g_l shifts wavevectors by +-k(g_l), so mode k cannot enter
// span(A_j) before j = 1 + (shortest generator path reaching k inside the truncation).
int reach_lower_bound(int n, const std::vector<Mode>& steps) {
  const int side = 2 * n + 1;
  std::vector<int> dist(side * side, -1);
  std::vector<Mode> queue;
  auto id = [&](int a, int b) { return (a + n) * side + (b + n); };
  auto inside = [&](int a, int b) { return std::abs(a) <= n && std::abs(b) <= n && (a != 0 || b != 0); };
  for (const auto& s : steps)
    for (int sg : {1, -1})
      if (dist[id(sg * s.k1, sg * s.k2)] < 0) {
        dist[id(sg * s.k1, sg * s.k2)] = 1;
        queue.push_back({sg * s.k1, sg * s.k2});
      }
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const auto k = queue[q];
    for (const auto& s : steps)
      for (int sg : {1, -1}) {
        const int a = k.k1 + sg * s.k1, b = k.k2 + sg * s.k2;
        if (!inside(a, b) || dist[id(a, b)] >= 0) continue;
        dist[id(a, b)] = dist[id(k.k1, k.k2)] + 1;
        queue.push_back({a, b});
      }
  }
  int worst = 0;
  for (int a = -n; a <= n; ++a)
    for (int b = -n; b <= n; ++b)
      if (inside(a, b)) worst = dist[id(a, b)] < 0 ? 1 << 20 : std::max(worst, dist[id(a, b)]);
  return worst;
}

}  // namespace

TEST_CASE("four directions saturate the N = 4 truncation") {
  const auto lat = ModeLattice::make(4);
  const auto basis = bracket_closure(four_directions(lat), lat, 30);
  CHECK(basis.saturated);
  CHECK(spans_truncation(basis, lat));
  CHECK(basis.rank() == 80);
  // (4, -4) = 8 (1, 0) - 4 (1, 1) needs 12 generators.
  const int bound = reach_lower_bound(4, {{1, 0}, {1, 1}});
  CHECK(bound == 12);
  CHECK(basis.generations >= bound);
  CHECK(basis.generations == 12);
  CHECK_FALSE(bracket_closure(four_directions(lat), lat, 6).saturated);
  for (std::size_t i = 1; i < basis.rank_history.size(); ++i) CHECK(basis.rank_history[i] >= basis.rank_history[i - 1]);
  // Orthonormal basis.
  for (std::size_t i = 0; i < basis.rank(); i += 7)
    for (std::size_t j = 0; j < basis.rank(); j += 5) {
      double d = 0.0;
      for (std::size_t q = 0; q < basis.dim; ++q) d += basis.basis[i][q] * basis.basis[j][q];
      CHECK(d == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("closure rank history matches literal bracket sets") {
  const auto lat = ModeLattice::make(3);
  const auto gens = four_directions(lat);
  const auto basis = bracket_closure(gens, lat, 4);
  const auto brute = brute_force_history(gens, static_cast<int>(basis.rank_history.size()));
  CHECK(basis.rank_history == brute);
}

TEST_CASE("single-line generators stall") {
  const auto lat = ModeLattice::make(4);
  const auto basis =
      bracket_closure({SpectralVorticity::cos_mode(lat, 1, 0), SpectralVorticity::sin_mode(lat, 1, 0)}, lat, 6);
  CHECK_FALSE(basis.saturated);
  CHECK(basis.stalled);
  CHECK(basis.rank() == 2);
  CHECK_FALSE(spans_truncation(basis, lat));
}

TEST_CASE("full generator set saturates at generation 1") {
  const auto lat = ModeLattice::make(2);
  std::vector<SpectralVorticity> gens;
  for (std::size_t i = 0; i < lat->size(); ++i) {
    const auto [k1, k2] = lat->mode(i);
    gens.push_back(SpectralVorticity::cos_mode(lat, k1, k2));
    gens.push_back(SpectralVorticity::sin_mode(lat, k1, k2));
  }
  const auto basis = bracket_closure(gens, lat, 5);
  CHECK(basis.saturated);
  CHECK(basis.generations == 1);
}

TEST_CASE("rank is invariant under rescaling and recombination, monotone in generators") {
  const auto lat = ModeLattice::make(4);
  auto g = four_directions(lat);
  const auto base = bracket_closure(g, lat, 6);
  std::vector<SpectralVorticity> scaled{3.0 * g[0], -0.5 * g[1], 7.0 * g[2], 1e-3 * g[3]};
  CHECK(bracket_closure(scaled, lat, 6).rank() == base.rank());
  std::vector<SpectralVorticity> mixed{g[0] + g[1], g[0] - g[1], g[2] + 2.0 * g[3], g[3]};
  CHECK(bracket_closure(mixed, lat, 6).rank() == base.rank());
  const auto line = bracket_closure({g[0], g[1]}, lat, 6);
  const auto more = bracket_closure({g[0], g[1], SpectralVorticity::cos_mode(lat, 0, 1)}, lat, 6);
  CHECK(more.rank() >= line.rank());
  CHECK(bracket_closure(g, lat, 6).rank_history == base.rank_history);
}

TEST_CASE("closure argument checks") {
  const auto lat = ModeLattice::make(3);
  CHECK_THROWS_AS(bracket_closure({}, lat, 3), InvalidArgument);
  CHECK_THROWS_AS(bracket_closure(four_directions(ModeLattice::make(2)), lat, 3), InvalidArgument);
  const auto partial = bracket_closure(four_directions(lat), lat, 2);
  CHECK_FALSE(partial.saturated);
  CHECK(partial.generations == 2);
}
