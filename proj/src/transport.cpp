#include "qpns/transport.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

#include "qpns/error.hpp"
#include "qpns/parallel.hpp"

namespace qpns {

namespace {

constexpr double kExponentLimit = 700.0;

double scale_sq() {
  const double s = real_coordinate_scale();
  return s * s;
}

struct PairGeometry {
  double a2;  // |w1|^2
  double ad;  // <w1, w2 - w1>
  double d2;  // |w2 - w1|^2
};

PairGeometry geometry(const SpectralVorticity& w1, const SpectralVorticity& w2) {
  double a2 = 0.0, ad = 0.0, d2 = 0.0;
  for (std::size_t i = 0; i < w1.size(); ++i) {
    const Complex a = w1[i];
    const Complex d = w2[i] - a;
    a2 += std::norm(a);
    ad += a.real() * d.real() + a.imag() * d.imag();
    d2 += std::norm(d);
  }
  const double s = scale_sq();
  return {a2 * s, ad * s, d2 * s};
}

double path_cost(const PairGeometry& g, const CostSpec& spec, const Quadrature& q) {
  if (g.d2 <= 0.0) return 0.0;
  const double len = std::sqrt(g.d2);
  const double k = spec.r * spec.eta;
  if (k == 0.0) return len;
  const double end = g.a2 + 2.0 * g.ad + g.d2;
  if (spec.eta * std::max(g.a2, end) > kExponentLimit)
    throw InvalidArgument("weighted cost exponent eta |w|^2 exceeds 700; use a smaller eta or rescale the fields");
  double s = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double t = q.nodes[i];
    s += q.weights[i] * std::exp(k * (g.a2 + t * (2.0 * g.ad + t * g.d2)));
  }
  return len * s;
}

void check_same_lattice(const SpectralVorticity& a, const SpectralVorticity& b) {
  if (!a.same_lattice(b)) throw InvalidArgument("transport: particles live on different lattices");
}

}  // namespace

void CostSpec::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw InvalidArgument("cost weight eta must be finite and >= 0");
  if (!(r > 0.0 && r <= 1.0)) throw InvalidArgument("cost exponent r must lie in (0, 1]");
  if (nodes < 2) throw InvalidArgument("cost quadrature needs at least 2 nodes");
}

double weighted_cost(const SpectralVorticity& w1, const SpectralVorticity& w2, const CostSpec& spec) {
  spec.validate();
  check_same_lattice(w1, w2);
  return path_cost(geometry(w1, w2), spec, gauss_legendre(spec.nodes));
}

// ------------------------------------------------------------- measures

EmpiricalMeasure EmpiricalMeasure::uniform(std::vector<SpectralVorticity> particles) {
  EmpiricalMeasure mu;
  const double w = particles.empty() ? 0.0 : 1.0 / static_cast<double>(particles.size());
  mu.weights.assign(particles.size(), w);
  mu.particles = std::move(particles);
  mu.validate();
  return mu;
}

EmpiricalMeasure EmpiricalMeasure::dirac(const SpectralVorticity& w) { return uniform({w}); }

void EmpiricalMeasure::validate() const {
  if (particles.empty()) throw InvalidArgument("empirical measure has no particles");
  if (weights.size() != particles.size()) throw InvalidArgument("empirical measure: weight count mismatch");
  double s = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("empirical measure: negative or non-finite weight");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-12) throw InvalidArgument("empirical measure: weights do not sum to 1");
  for (const auto& p : particles) check_same_lattice(particles.front(), p);
}

std::vector<double> TransportPlan::row_marginals() const {
  std::vector<double> r(rows, 0.0);
  for (const auto& e : entries) r[e.i] += e.mass;
  return r;
}

std::vector<double> TransportPlan::col_marginals() const {
  std::vector<double> c(cols, 0.0);
  for (const auto& e : entries) c[e.j] += e.mass;
  return c;
}

std::vector<double> cost_matrix(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const CostSpec& spec) {
  spec.validate();
  check_same_lattice(a.particles.front(), b.particles.front());
  const Quadrature q = gauss_legendre(spec.nodes);
  const std::size_t m = a.size(), n = b.size();
  std::vector<double> c(m * n);
  parallel_for(m, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = path_cost(geometry(a.particles[i], b.particles[j]), spec, q);
  });
  return c;
}

// -------------------------------------------------------- network simplex

namespace {

// Primal network simplex for the uncapacitated transportation problem with
// an artificial root. Strongly feasible trees and the last-blocking-arc
// leaving rule rule out cycling; the tree is rebuilt after each pivot.
class NetworkSimplex {
 public:
  NetworkSimplex(std::size_t m, std::size_t n, std::vector<std::int64_t> cost, const std::vector<std::int64_t>& supply,
                 const std::vector<std::int64_t>& demand)
      : m_(m), n_(n), real_(m * n), nodes_(m + n + 1), root_(m + n), cost_(std::move(cost)) {
    std::int64_t cmax = 0;
    for (auto c : cost_) cmax = std::max(cmax, c < 0 ? -c : c);
    big_ = (cmax + 1) * static_cast<std::int64_t>(nodes_);
    const std::size_t arcs = real_ + nodes_ - 1;
    flow_.assign(arcs, 0);
    tree_pos_.assign(arcs, -1);
    art_up_.resize(nodes_ - 1);
    for (std::size_t v = 0; v + 1 < nodes_; ++v) {
      const std::int64_t s = v < m_ ? supply[v] : -demand[v - m_];
      art_up_[v] = s > 0;
      flow_[real_ + v] = s >= 0 ? s : -s;
      tree_pos_[real_ + v] = static_cast<std::int64_t>(tree_.size());
      tree_.push_back(real_ + v);
    }
    parent_.resize(nodes_);
    pred_.resize(nodes_);
    up_.resize(nodes_);
    depth_.resize(nodes_);
    pi_.resize(nodes_);
    rebuild();
  }

  std::size_t run() {
    const std::size_t block = std::max<std::size_t>(10, static_cast<std::size_t>(std::sqrt(static_cast<double>(real_))));
    std::size_t next = 0, pivots = 0;
    for (;;) {
      std::size_t best = real_;
      std::int64_t best_rc = 0;
      std::size_t scanned = 0, in_block = 0;
      while (scanned < real_) {
        const std::size_t a = next;
        next = next + 1 == real_ ? 0 : next + 1;
        ++scanned;
        ++in_block;
        if (tree_pos_[a] < 0) {
          const std::int64_t rc = cost_[a] + pi_[a / n_] - pi_[m_ + a % n_];
          if (rc < best_rc) {
            best_rc = rc;
            best = a;
          }
        }
        if (in_block == block) {
          if (best < real_) break;
          in_block = 0;
        }
      }
      if (best == real_) break;
      pivot(best);
      ++pivots;
    }
    for (std::size_t v = 0; v + 1 < nodes_; ++v)
      if (flow_[real_ + v] != 0) throw Error("network simplex: transport problem infeasible");
    return pivots;
  }

  std::int64_t flow(std::size_t i, std::size_t j) const { return flow_[i * n_ + j]; }

 private:
  std::size_t src(std::size_t a) const {
    if (a < real_) return a / n_;
    const std::size_t v = a - real_;
    return art_up_[v] ? v : root_;
  }
  std::size_t tgt(std::size_t a) const {
    if (a < real_) return m_ + a % n_;
    const std::size_t v = a - real_;
    return art_up_[v] ? root_ : v;
  }
  std::int64_t arc_cost(std::size_t a) const { return a < real_ ? cost_[a] : big_; }

  void rebuild() {
    std::vector<std::size_t> start(nodes_ + 1, 0);
    for (auto a : tree_) {
      ++start[src(a) + 1];
      ++start[tgt(a) + 1];
    }
    for (std::size_t v = 0; v < nodes_; ++v) start[v + 1] += start[v];
    adj_.resize(2 * tree_.size());
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (auto a : tree_) {
      adj_[fill[src(a)]++] = a;
      adj_[fill[tgt(a)]++] = a;
    }
    order_.clear();
    order_.push_back(root_);
    parent_[root_] = root_;
    depth_[root_] = 0;
    pi_[root_] = 0;
    for (std::size_t head = 0; head < order_.size(); ++head) {
      const std::size_t u = order_[head];
      for (std::size_t k = start[u]; k < start[u + 1]; ++k) {
        const std::size_t a = adj_[k];
        if (u != root_ && a == pred_[u]) continue;
        const bool down = src(a) == u;
        const std::size_t v = down ? tgt(a) : src(a);
        parent_[v] = u;
        pred_[v] = a;
        up_[v] = !down;
        depth_[v] = depth_[u] + 1;
        pi_[v] = down ? pi_[u] + arc_cost(a) : pi_[u] - arc_cost(a);
        order_.push_back(v);
      }
    }
    if (order_.size() != nodes_) throw Error("network simplex: basis is not a spanning tree");
  }

  void pivot(std::size_t in) {
    const std::size_t first = src(in), second = tgt(in);
    std::size_t x = first, y = second;
    while (x != y) {
      if (depth_[x] >= depth_[y])
        x = parent_[x];
      else
        y = parent_[y];
    }
    const std::size_t join = x;
    constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max();
    std::int64_t delta = inf;
    std::size_t out = root_;
    for (std::size_t u = first; u != join; u = parent_[u]) {
      const std::int64_t d = up_[u] ? flow_[pred_[u]] : inf;
      if (d < delta) {
        delta = d;
        out = u;
      }
    }
    for (std::size_t u = second; u != join; u = parent_[u]) {
      const std::int64_t d = up_[u] ? inf : flow_[pred_[u]];
      if (d <= delta) {
        delta = d;
        out = u;
      }
    }
    if (delta == inf || out == root_) throw Error("network simplex: unbounded pivot");
    if (delta > 0) {
      flow_[in] += delta;
      for (std::size_t u = first; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? -delta : delta;
      for (std::size_t u = second; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? delta : -delta;
    }
    const std::size_t leaving = pred_[out];
    const std::int64_t pos = tree_pos_[leaving];
    tree_pos_[leaving] = -1;
    tree_pos_[in] = pos;
    tree_[static_cast<std::size_t>(pos)] = in;
    rebuild();
  }

  std::size_t m_, n_, real_, nodes_, root_;
  std::vector<std::int64_t> cost_;
  std::int64_t big_ = 0;
  std::vector<std::int64_t> flow_;
  std::vector<std::int64_t> tree_pos_;
  std::vector<std::size_t> tree_;
  std::vector<char> art_up_;
  std::vector<std::size_t> parent_, pred_, depth_, order_, adj_;
  std::vector<char> up_;
  std::vector<std::int64_t> pi_;
};

std::vector<std::int64_t> integer_masses(const std::vector<double>& w, double total, std::int64_t unit) {
  std::vector<std::int64_t> q(w.size());
  std::int64_t s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    q[i] = std::llround(w[i] / total * static_cast<double>(unit));
    s += q[i];
  }
  // Distribute the rounding residue over the largest entries.
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  std::size_t k = 0;
  while (s != unit) {
    const std::size_t i = idx[k++ % idx.size()];
    if (s < unit) {
      ++q[i];
      ++s;
    } else if (q[i] > 0) {
      --q[i];
      --s;
    }
  }
  return q;
}

}  // namespace

ExactResult solve_transport(const std::vector<double>& cost, const std::vector<double>& a,
                            const std::vector<double>& b) {
  const std::size_t m = a.size(), n = b.size();
  if (m == 0 || n == 0) throw InvalidArgument("solve_transport needs nonempty marginals");
  if (cost.size() != m * n) throw InvalidArgument("solve_transport: cost matrix has the wrong size");
  double sa = 0.0, sb = 0.0;
  for (double x : a) {
    if (!(x >= 0.0)) throw InvalidArgument("solve_transport: negative mass");
    sa += x;
  }
  for (double x : b) {
    if (!(x >= 0.0)) throw InvalidArgument("solve_transport: negative mass");
    sb += x;
  }
  if (!(sa > 0.0) || std::abs(sa - sb) > 1e-9 * sa) throw InvalidArgument("solve_transport: unbalanced marginals");
  double cmax = 0.0;
  for (double c : cost) {
    if (!std::isfinite(c)) throw InvalidArgument("solve_transport: non-finite cost");
    cmax = std::max(cmax, std::abs(c));
  }
  const double resolution = cmax > 0.0 ? cmax * 1e-12 : 1.0;
  std::vector<std::int64_t> ci(cost.size());
  for (std::size_t k = 0; k < cost.size(); ++k) ci[k] = std::llround(cost[k] / resolution);
  constexpr std::int64_t unit = std::int64_t{1} << 40;
  NetworkSimplex ns(m, n, std::move(ci), integer_masses(a, sa, unit), integer_masses(b, sb, unit));
  ExactResult r;
  r.pivots = ns.run();
  r.plan.rows = m;
  r.plan.cols = n;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::int64_t f = ns.flow(i, j);
      if (f == 0) continue;
      const double mass = static_cast<double>(f) / static_cast<double>(unit) * sa;
      r.plan.entries.push_back({i, j, mass});
      total += mass * cost[i * n + j];
    }
  r.plan.cost = total;
  r.distance = total;
  return r;
}

ExactResult wasserstein_exact(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2, const CostSpec& spec,
                              std::size_t cap) {
  mu1.validate();
  mu2.validate();
  if (mu1.size() > cap || mu2.size() > cap)
    throw InvalidArgument("particle count exceeds the exact solver cap (" + std::to_string(cap) +
                          "); use wasserstein_sinkhorn");
  return solve_transport(cost_matrix(mu1, mu2, spec), mu1.weights, mu2.weights);
}

// --------------------------------------------------------------- sinkhorn

namespace {

struct SinkhornCore {
  double dual;
  double lower;
  double upper;
  std::size_t iterations;
  double marginal_error;
};

double log_sum_exp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, v[k]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(v[k] - mx);
  return mx + std::log(s);
}

SinkhornCore sinkhorn_abs(const std::vector<double>& cost, const std::vector<double>& a, const std::vector<double>& b,
                          double eps_target, std::size_t iters, double tol) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<double> ct(n * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) ct[j * m + i] = cost[i * n + j];
  std::vector<double> la(m), lb(n);
  const double ninf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) la[i] = a[i] > 0.0 ? std::log(a[i]) : ninf;
  for (std::size_t j = 0; j < n; ++j) lb[j] = b[j] > 0.0 ? std::log(b[j]) : ninf;
  std::vector<double> f(m, 0.0), g(n, 0.0);
  // Epsilon scaling: halve from the largest cost down to the target,
  // warm-starting the potentials at each stage.
  double cmax = 0.0;
  for (double c : cost) cmax = std::max(cmax, c);
  double eps = std::max(eps_target, cmax);
  double inv = 1.0 / eps;

  auto update_f = [&] {
    parallel_for(m, [&](std::size_t i) {
      std::vector<double> v(n);
      for (std::size_t j = 0; j < n; ++j) v[j] = lb[j] + (g[j] - cost[i * n + j]) * inv;
      f[i] = -eps * log_sum_exp(v.data(), n);
    });
  };
  auto update_g = [&] {
    parallel_for(n, [&](std::size_t j) {
      std::vector<double> v(m);
      for (std::size_t i = 0; i < m; ++i) v[i] = la[i] + (f[i] - ct[j * m + i]) * inv;
      g[j] = -eps * log_sum_exp(v.data(), m);
    });
  };
  auto row_error = [&] {
    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (a[i] <= 0.0) continue;
      double r = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (b[j] > 0.0) r += std::exp(la[i] + lb[j] + (f[i] + g[j] - cost[i * n + j]) * inv);
      err += std::abs(r - a[i]);
    }
    return err;
  };

  SinkhornCore out{};
  double err = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (;;) {
    const bool last = eps <= eps_target;
    const double stage_tol = last ? tol : std::max(tol, 1e-4);
    err = std::numeric_limits<double>::infinity();
    while (it < iters) {
      update_f();
      update_g();
      ++it;
      if (it % 5 == 0 || it == iters) {
        err = row_error();
        if (err < stage_tol) break;
      }
    }
    if (last || it >= iters) break;
    eps = std::max(eps_target, 0.5 * eps);
    inv = 1.0 / eps;
  }
  if (!(err < tol)) throw ConvergenceError("sinkhorn did not converge within the iteration budget", err);
  out.iterations = it;
  out.marginal_error = err;
  for (std::size_t i = 0; i < m; ++i)
    if (a[i] > 0.0) out.dual += a[i] * f[i];
  for (std::size_t j = 0; j < n; ++j)
    if (b[j] > 0.0) out.dual += b[j] * g[j];

  // c-transform pair (f^cc, g^c) is dual feasible.
  std::vector<double> gc(n), fcc(m);
  for (std::size_t j = 0; j < n; ++j) {
    double v = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i)
      if (a[i] > 0.0) v = std::min(v, ct[j * m + i] - f[i]);
    gc[j] = v;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double v = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (b[j] > 0.0) v = std::min(v, cost[i * n + j] - gc[j]);
    fcc[i] = v;
  }
  out.lower = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (a[i] > 0.0) out.lower += a[i] * fcc[i];
  for (std::size_t j = 0; j < n; ++j)
    if (b[j] > 0.0) out.lower += b[j] * gc[j];

  // Round the plan onto the exact marginals.
  std::vector<double> p(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a[i] > 0.0 && b[j] > 0.0) p[i * n + j] = std::exp(la[i] + lb[j] + (f[i] + g[j] - cost[i * n + j]) * inv);
  for (std::size_t i = 0; i < m; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j) r += p[i * n + j];
    const double s = r > a[i] ? a[i] / r : 1.0;
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] *= s;
  }
  std::vector<double> col(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) col[j] += p[i * n + j];
  for (std::size_t j = 0; j < n; ++j) {
    const double s = col[j] > b[j] ? b[j] / col[j] : 1.0;
    for (std::size_t i = 0; i < m; ++i) p[i * n + j] *= s;
  }
  std::vector<double> er(m, 0.0), ec(n, 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j) r += p[i * n + j];
    er[i] = std::max(0.0, a[i] - r);
    mass += er[i];
  }
  for (std::size_t j = 0; j < n; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < m; ++i) c += p[i * n + j];
    ec[j] = std::max(0.0, b[j] - c);
  }
  out.upper = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double q = p[i * n + j];
      if (mass > 0.0) q += er[i] * ec[j] / mass;
      out.upper += q * cost[i * n + j];
    }
  return out;
}

double mean_of(const std::vector<double>& v) { return mean(std::span<const double>(v)); }

}  // namespace

SinkhornResult sinkhorn(const std::vector<double>& cost, const std::vector<double>& a, const std::vector<double>& b,
                        double eps_reg, std::size_t iters, double tol) {
  if (!(eps_reg > 0.0)) throw InvalidArgument("sinkhorn needs eps_reg > 0");
  if (cost.size() != a.size() * b.size() || a.empty()) throw InvalidArgument("sinkhorn: cost matrix has the wrong size");
  const double scale = mean_of(cost);
  if (!(scale > 0.0)) return {0.0, 0.0, 0.0, 0.0, 0, 0.0};
  const auto core = sinkhorn_abs(cost, a, b, eps_reg * scale, iters, tol);
  return {core.lower, core.upper, core.dual, core.dual, core.iterations, core.marginal_error};
}

SinkhornResult wasserstein_sinkhorn(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2, const CostSpec& spec,
                                    double eps_reg, std::size_t iters, double tol) {
  if (!(eps_reg > 0.0)) throw InvalidArgument("sinkhorn needs eps_reg > 0");
  mu1.validate();
  mu2.validate();
  const auto c12 = cost_matrix(mu1, mu2, spec);
  const double scale = mean_of(c12);
  if (!(scale > 0.0)) return {0.0, 0.0, 0.0, 0.0, 0, 0.0};
  const double eps = eps_reg * scale;
  const auto x = sinkhorn_abs(c12, mu1.weights, mu2.weights, eps, iters, tol);
  const auto s1 = sinkhorn_abs(cost_matrix(mu1, mu1, spec), mu1.weights, mu1.weights, eps, iters, tol);
  const auto s2 = sinkhorn_abs(cost_matrix(mu2, mu2, spec), mu2.weights, mu2.weights, eps, iters, tol);
  return {x.lower, x.upper, x.dual - 0.5 * (s1.dual + s2.dual), x.dual, x.iterations,
          std::max({x.marginal_error, s1.marginal_error, s2.marginal_error})};
}

// ---------------------------------------------------------- dense simplex

DenseLpResult dense_simplex(const std::vector<double>& A, const std::vector<double>& b, const std::vector<double>& c,
                            std::size_t m, std::size_t n) {
  if (A.size() != m * n || b.size() != m || c.size() != n) throw InvalidArgument("dense_simplex: dimension mismatch");
  const std::size_t cols = n + m + 1;  // originals, artificials, rhs
  const std::size_t rhs = n + m;
  std::vector<double> T((m + 1) * cols, 0.0);
  std::vector<double> sign(m, 1.0);
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) {
    sign[r] = b[r] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) T[r * cols + j] = sign[r] * A[r * n + j];
    T[r * cols + n + r] = 1.0;
    T[r * cols + rhs] = sign[r] * b[r];
    basis[r] = n + r;
  }
  double* z = &T[m * cols];
  std::size_t pivots = 0;
  constexpr double eps = 1e-11;

  auto pivot_on = [&](std::size_t pr, std::size_t pc) {
    double* row = &T[pr * cols];
    const double inv = 1.0 / row[pc];
    for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
    row[pc] = 1.0;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == pr) continue;
      double* other = &T[r * cols];
      const double f = other[pc];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < cols; ++j) other[j] -= f * row[j];
      other[pc] = 0.0;
    }
    basis[pr] = pc;
    ++pivots;
  };

  auto optimize = [&](std::size_t allowed) {
    std::size_t degenerate = 0;
    for (;;) {
      const bool bland = degenerate > 50;
      std::size_t pc = allowed;
      double best = -eps;
      for (std::size_t j = 0; j < allowed; ++j) {
        if (z[j] < best) {
          pc = j;
          if (bland) break;
          best = z[j];
        }
      }
      if (pc == allowed) return;
      std::size_t pr = m;
      double ratio = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < m; ++r) {
        const double a = T[r * cols + pc];
        if (a <= eps) continue;
        const double q = T[r * cols + rhs] / a;
        if (q < ratio - 1e-14 || (q <= ratio + 1e-14 && pr < m && basis[r] < basis[pr])) {
          ratio = q;
          pr = r;
        }
      }
      if (pr == m) throw Error("dense_simplex: objective unbounded");
      degenerate = ratio <= 1e-14 ? degenerate + 1 : 0;
      pivot_on(pr, pc);
      if (pivots > 50 * (m + n) + 10000) throw ConvergenceError("dense_simplex: pivot limit reached", z[rhs]);
    }
  };

  // Phase 1: minimize the sum of artificials.
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) s += T[r * cols + j];
    z[j] = j < n || j == rhs ? -s : 0.0;
  }
  optimize(n);
  double bsum = 0.0;
  for (std::size_t r = 0; r < m; ++r) bsum += std::abs(b[r]);
  if (-z[rhs] > 1e-9 * std::max(1.0, bsum)) throw Error("dense_simplex: problem infeasible");
  for (std::size_t r = 0; r < m; ++r) {
    if (basis[r] < n) continue;
    std::size_t pc = n;
    double best = 1e-9;
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(T[r * cols + j]) > best) {
        best = std::abs(T[r * cols + j]);
        pc = j;
      }
    if (pc < n) pivot_on(r, pc);  // otherwise the row is redundant
  }

  // Phase 2 with artificial costs 0; artificials never re-enter.
  for (std::size_t j = 0; j < cols; ++j) {
    double s = j < n ? c[j] : 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const double cb = basis[r] < n ? c[basis[r]] : 0.0;
      s -= cb * T[r * cols + j];
    }
    z[j] = s;
  }
  optimize(n);

  DenseLpResult res;
  res.x.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    if (basis[r] < n) res.x[basis[r]] = T[r * cols + rhs];
  res.y.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) res.y[i] = -z[n + i] * sign[i];
  res.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) res.objective += c[j] * res.x[j];
  res.pivots = pivots;
  return res;
}

DualityReport duality_gap(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2, const CostSpec& spec) {
  mu1.validate();
  mu2.validate();
  const std::size_t m = mu1.size(), n = mu2.size();
  if (m > 64 || n > 64) throw InvalidArgument("duality_gap supports at most 64 particles per measure");
  EmpiricalMeasure all;
  all.particles = mu1.particles;
  all.particles.insert(all.particles.end(), mu2.particles.begin(), mu2.particles.end());
  all.weights.assign(m + n, 1.0 / static_cast<double>(m + n));
  const std::size_t K = m + n;
  const auto raw = cost_matrix(all, all, spec);
  std::vector<double> d = raw;
  for (std::size_t i = 0; i < K; ++i) d[i * K + i] = 0.0;
  std::size_t repairs = 0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = 0; j < K; ++j) {
        const double via = d[i * K + k] + d[k * K + j];
        if (via < d[i * K + j]) {
          if (via < d[i * K + j] * (1.0 - 1e-14)) ++repairs;
          d[i * K + j] = via;
        }
      }
  std::vector<double> c(m * n), craw(m * n);
  double cmax = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] = d[i * K + m + j];
      craw[i * n + j] = raw[i * K + m + j];
      cmax = std::max(cmax, c[i * n + j]);
    }
  DualityReport rep{};
  rep.triangle_repairs = repairs;
  rep.primal = solve_transport(c, mu1.weights, mu2.weights).distance;
  rep.primal_raw = solve_transport(craw, mu1.weights, mu2.weights).distance;
  if (!(cmax > 0.0)) return rep;

  // Transportation LP on the normalized closure cost.
  std::vector<double> A((m + n) * (m * n), 0.0), rhs(m + n), cn(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t col = i * n + j;
      A[i * (m * n) + col] = 1.0;
      A[(m + j) * (m * n) + col] = 1.0;
      cn[col] = c[col] / cmax;
    }
  for (std::size_t i = 0; i < m; ++i) rhs[i] = mu1.weights[i];
  for (std::size_t j = 0; j < n; ++j) rhs[m + j] = mu2.weights[j];
  const auto lp = dense_simplex(A, rhs, cn, m + n, m * n);

  // phi(z) = max_i (u_i - d(x_i, z)) is 1-Lipschitz for the closure metric.
  std::vector<double> phi(K);
  for (std::size_t z = 0; z < K; ++z) {
    double v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) v = std::max(v, lp.y[i] * cmax - d[i * K + z]);
    phi[z] = v;
  }
  double violation = 0.0;
  for (std::size_t x = 0; x < K; ++x)
    for (std::size_t y = 0; y < K; ++y) violation = std::max(violation, phi[x] - phi[y] - raw[x * K + y] * (x != y));
  rep.lipschitz_violation = violation;
  double dual = 0.0;
  for (std::size_t i = 0; i < m; ++i) dual += mu1.weights[i] * phi[i];
  for (std::size_t j = 0; j < n; ++j) dual -= mu2.weights[j] * phi[m + j];
  rep.dual = dual;
  rep.gap = rep.primal - rep.dual;
  return rep;
}

// ------------------------------------------------------ invariant measure

EmpiricalMeasure reflect(const EmpiricalMeasure& mu) {
  EmpiricalMeasure out = mu;
  for (auto& p : out.particles)
    for (auto& c : p.coeffs()) c = std::conj(c);
  return out;
}

namespace {

double mean_norm(const std::vector<SpectralVorticity>& ps) {
  std::vector<double> v(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) v[i] = norm(ps[i]);
  return mean(std::span<const double>(v));
}

double cloud_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const CostSpec& spec) {
  if (a.size() <= kExactSolverCap && b.size() <= kExactSolverCap) return wasserstein_exact(a, b, spec).distance;
  return wasserstein_sinkhorn(a, b, spec, 0.01, 20000, 1e-5).upper;
}

}  // namespace

InvariantEstimate estimate_invariant_measure(const Model& model, const TorusPoint& h, const InvariantOptions& opt) {
  if (!(opt.t_back > 0.0)) throw InvalidArgument("estimate_invariant_measure needs T_back > 0");
  if (opt.particles < 2) throw InvalidArgument("estimate_invariant_measure needs at least 2 particles");
  model.step_index(opt.t_back);
  const auto& lat = model.lattice();
  auto run = [&](double t_back) {
    std::vector<SpectralVorticity> ps(opt.particles, SpectralVorticity(lat));
    parallel_for(opt.particles, [&](std::size_t j) {
      ps[j] = simulate_pullback(t_back, h, SpectralVorticity(lat), model,
                                WienerPath(model.noise().seed, opt.trajectory_base + j));
    });
    return ps;
  };
  auto assemble = [&](std::vector<SpectralVorticity> ps) {
    auto mu = EmpiricalMeasure::uniform(std::move(ps));
    if (!opt.symmetrize) return mu;
    const auto r = reflect(mu);
    mu.particles.insert(mu.particles.end(), r.particles.begin(), r.particles.end());
    mu.weights.assign(mu.particles.size(), 1.0 / static_cast<double>(mu.particles.size()));
    return mu;
  };
  InvariantEstimate est;
  auto first = run(opt.t_back);
  const double scale = mean_norm(first);
  est.measure = assemble(std::move(first));
  if (opt.check_stability) {
    const auto doubled = assemble(run(2.0 * opt.t_back));
    est.doubling_shift = cloud_distance(est.measure, doubled, opt.cost);
    est.stable = est.doubling_shift <= opt.stabilization_tol * scale;
  }
  return est;
}

// ---------------------------------------------------------------- mixing

RateFit fit_exponential(const std::vector<double>& t, const std::vector<double>& y, const std::vector<double>& floor) {
  if (t.size() != y.size() || (!floor.empty() && floor.size() != y.size()))
    throw InvalidArgument("fit_exponential: size mismatch");
  RateFit fit;
  std::vector<double> xs, ls;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double lim = floor.empty() ? 0.0 : floor[k];
    if (!(y[k] > lim) || !(y[k] > 0.0) || !std::isfinite(y[k])) {
      ++fit.censored;
      continue;
    }
    xs.push_back(t[k]);
    ls.push_back(std::log(y[k]));
  }
  fit.used = xs.size();
  if (xs.size() < 3) {
    fit.note = "fewer than 3 points above the noise floor; fit refused";
    return fit;
  }
  const auto lf = linear_fit(xs, ls);
  fit.exponent = -lf.slope;
  fit.prefactor = std::exp(lf.intercept);
  fit.r2 = lf.r2;
  fit.se = lf.slope_se;
  const auto [lo, hi] = lf.slope_ci(0.95);
  fit.ci_lo = -hi;
  fit.ci_hi = -lo;
  fit.decades = (*std::max_element(ls.begin(), ls.end()) - *std::min_element(ls.begin(), ls.end())) / std::log(10.0);
  fit.fitted = true;
  return fit;
}

MixingReport mixing_rate(const Model& model, const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2,
                         const TorusPoint& h, double s, const MixingOptions& opt) {
  mu1.validate();
  mu2.validate();
  for (const auto* mu : {&mu1, &mu2})
    for (double w : mu->weights)
      if (std::abs(w - mu->weights.front()) > 1e-12) throw InvalidArgument("mixing_rate needs uniformly weighted starts");
  if (opt.particles < 2) throw InvalidArgument("mixing_rate needs at least 2 particles");
  if (opt.times.empty()) throw InvalidArgument("mixing_rate needs a time grid");
  for (std::size_t k = 0; k < opt.times.size(); ++k)
    if (opt.times[k] < 0.0 || (k > 0 && !(opt.times[k] > opt.times[k - 1])))
      throw InvalidArgument("mixing_rate time grid must be increasing and nonnegative");
  opt.cost.validate();
  model.step_index(s);
  std::vector<std::int64_t> marks;
  for (double t : opt.times) marks.push_back(model.step_index(s + t));
  const std::size_t M = opt.particles, K = marks.size();
  const auto& lat = model.lattice();

  // states[k][j] for one ensemble.
  auto run = [&](const EmpiricalMeasure& start, std::uint64_t id0) {
    std::vector<std::vector<SpectralVorticity>> states(K, std::vector<SpectralVorticity>(M, SpectralVorticity(lat)));
    parallel_for(M, [&](std::size_t j) {
      std::size_t next = 0;
      const WienerPath path(model.noise().seed, opt.trajectory_base + id0 + j);
      evolve(s, model.time_of(marks.back()), h, start.particles[j % start.size()], model, path,
             [&](std::int64_t step, const SpectralVorticity& w) {
               while (next < K && marks[next] == step) states[next++][j] = w;
             });
    });
    return states;
  };

  MixingReport rep;
  rep.times = opt.times;
  const auto e1 = run(mu1, 0);
  const auto sync = run(mu2, 0);
  rep.synchronous.resize(K);
  const Quadrature q = gauss_legendre(opt.cost.nodes);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> c(M);
    parallel_for(M, [&](std::size_t j) { c[j] = path_cost(geometry(e1[k][j], sync[k][j]), opt.cost, q); });
    rep.synchronous[k] = mean(std::span<const double>(c));
  }
  rep.synchronous_fit = fit_exponential(rep.times, rep.synchronous, {});
  if (opt.synchronous_only) return rep;

  const auto e2 = run(mu2, M);
  const auto e3 = run(mu2, 2 * M);
  rep.distance.resize(K);
  rep.floor.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto a = EmpiricalMeasure::uniform(e1[k]);
    const auto b = EmpiricalMeasure::uniform(e2[k]);
    const auto f = EmpiricalMeasure::uniform(e3[k]);
    rep.distance[k] = cloud_distance(a, b, opt.cost);
    rep.floor[k] = cloud_distance(b, f, opt.cost);
  }
  std::vector<double> limit(K);
  for (std::size_t k = 0; k < K; ++k) limit[k] = opt.censor_factor * rep.floor[k];
  rep.fit = fit_exponential(rep.times, rep.distance, limit);
  return rep;
}

// ------------------------------------------------------------ measure I/O

void save_measure(const std::string& dir, const EmpiricalMeasure& mu, const std::string& extra_json) {
  mu.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream bin(fs::path(dir) / "particles.bin", std::ios::binary);
    if (!bin) throw Error("cannot write " + (fs::path(dir) / "particles.bin").string());
    for (const auto& p : mu.particles) write_snapshot(bin, p);
  }
  nlohmann::ordered_json man;
  man["format"] = "qpns-measure";
  man["version"] = 1;
  man["truncation"] = mu.particles.front().lattice()->truncation();
  man["count"] = mu.size();
  man["particles"] = "particles.bin";
  man["weights"] = mu.weights;
  man["extra"] = nlohmann::ordered_json::parse(extra_json);
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw Error("cannot write measure manifest in " + dir);
  out << man.dump(2) << "\n";
}

EmpiricalMeasure load_measure(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw Error("cannot read measure manifest in " + dir);
  const auto man = nlohmann::json::parse(in);
  if (man.value("format", "") != "qpns-measure") throw Error("not a measure manifest: " + dir);
  const auto count = man.at("count").get<std::size_t>();
  std::ifstream bin(fs::path(dir) / man.at("particles").get<std::string>(), std::ios::binary);
  if (!bin) throw Error("cannot read particle file in " + dir);
  EmpiricalMeasure mu;
  mu.weights = man.at("weights").get<std::vector<double>>();
  for (std::size_t i = 0; i < count; ++i) mu.particles.push_back(read_snapshot(bin));
  mu.validate();
  return mu;
}

}  // namespace qpns
