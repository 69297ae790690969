#include "qpns/forcing.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "qpns/error.hpp"

namespace qpns {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_difference(double d) {
  d = std::fmod(d, kTwoPi);
  if (d > std::numbers::pi) d -= kTwoPi;
  if (d < -std::numbers::pi) d += kTwoPi;
  return d;
}

double dot(std::span<const int> m, std::span<const double> h) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i] * h[i];
  return s;
}

double pair_norm(const ForceTerm& t) { return std::sqrt(norm_sq(t.cos_amp) + norm_sq(t.sin_amp)); }

void check_guard(const Frequency& alpha, long long kmax) {
  double s = 0.0;
  for (double a : alpha.alpha) s += std::abs(a);
  if (static_cast<double>(kmax) * s >= 0x1.0p50)
    throw InvalidArgument("|k.alpha| exceeds the integer-exact floating range; use a smaller kmax");
}

// Visits every k with |k|_inf == r whose first nonzero component is positive.
void for_each_in_shell(std::size_t n, long long r, const std::function<void(std::span<const long long>)>& visit) {
  std::vector<long long> k(n);
  for (std::size_t j = 0; j < n; ++j) {
    // First coordinate with |k_j| = r is j.
    std::vector<long long> lo(n), hi(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (i < j) {
        lo[i] = -(r - 1);
        hi[i] = r - 1;
      } else if (i > j) {
        lo[i] = -r;
        hi[i] = r;
      }
    }
    for (long long sign : {1LL, -1LL}) {
      lo[j] = hi[j] = sign * r;
      for (std::size_t i = 0; i < n; ++i) k[i] = lo[i];
      for (;;) {
        long long first = 0;
        for (long long v : k)
          if (v != 0) {
            first = v;
            break;
          }
        if (first > 0) visit(k);
        bool done = true;
        for (std::size_t pos = n; pos-- > 0;) {
          if (k[pos] < hi[pos]) {
            ++k[pos];
            for (std::size_t q = pos + 1; q < n; ++q) k[q] = lo[q];
            done = false;
            break;
          }
        }
        if (done) break;
      }
    }
  }
}

double shell_count(std::size_t n, long long kmax) {
  return std::pow(2.0 * static_cast<double>(kmax) + 1.0, static_cast<double>(n)) / 2.0;
}

}  // namespace

double wrap_angle(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

TorusPoint::TorusPoint(std::vector<double> h) : h_(std::move(h)) {
  for (auto& x : h_) x = wrap_angle(x);
}

double torus_distance(const TorusPoint& a, const TorusPoint& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("torus dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = wrap_difference(a[i] - b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

TorusPoint rotate(const TorusPoint& h, const Frequency& alpha, double t) {
  if (h.dim() != alpha.dim()) throw InvalidArgument("torus dimension mismatch");
  std::vector<double> out(h.dim());
  for (std::size_t i = 0; i < h.dim(); ++i) {
    // Reduce alpha t separately so large t keeps full precision in the sum.
    out[i] = h[i] + wrap_angle(alpha.alpha[i] * t);
  }
  return TorusPoint(std::move(out));
}

double integer_distance(std::span<const long long> k, const Frequency& alpha) {
  double s = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double kd = static_cast<double>(k[i]);
    const double prod = kd * alpha.alpha[i];
    s += std::fma(kd, alpha.alpha[i], -std::nearbyint(prod));
  }
  return std::abs(s - std::nearbyint(s));
}

IndependenceReport rational_independence_check(const Frequency& alpha, long long q_check, double tol) {
  if (alpha.dim() == 0) throw InvalidArgument("empty frequency vector");
  if (q_check < 1) throw InvalidArgument("q_check must be >= 1");
  check_guard(alpha, q_check);
  IndependenceReport rep{true, {}, std::numeric_limits<double>::infinity()};
  for (long long r = 1; r <= q_check; ++r) {
    for_each_in_shell(alpha.dim(), r, [&](std::span<const long long> k) {
      const double d = integer_distance(k, alpha);
      if (d < rep.min_distance) {
        rep.min_distance = d;
        rep.witness.assign(k.begin(), k.end());
      }
    });
  }
  rep.independent = rep.min_distance > tol;
  return rep;
}

// ------------------------------------------------------------- force

QuasiPeriodicForce::QuasiPeriodicForce(Frequency alpha, LatticePtr lattice, std::vector<ForceTerm> terms,
                                       double holder_gamma)
    : alpha_(std::move(alpha)), lattice_(std::move(lattice)), terms_(std::move(terms)), gamma_(holder_gamma) {
  if (!lattice_) throw InvalidArgument("null lattice");
  if (!(gamma_ > 0.0 && gamma_ <= 1.0)) throw InvalidArgument("Holder exponent must lie in (0, 1]");
  for (auto& t : terms_) {
    if (t.m.size() != alpha_.dim()) throw InvalidArgument("force harmonic dimension does not match frequency");
    if (t.cos_amp.empty()) t.cos_amp = SpectralVorticity(lattice_);
    if (t.sin_amp.empty()) t.sin_amp = SpectralVorticity(lattice_);
    if (t.cos_amp.lattice()->truncation() != lattice_->truncation() ||
        t.sin_amp.lattice()->truncation() != lattice_->truncation())
      throw InvalidArgument("force amplitude lattice mismatch");
  }
}

QuasiPeriodicForce QuasiPeriodicForce::from_specs(Frequency alpha, LatticePtr lattice,
                                                  std::span<const ForceTermSpec> specs, double holder_gamma) {
  std::vector<ForceTerm> terms;
  for (const auto& s : specs) {
    auto it = std::find_if(terms.begin(), terms.end(), [&](const ForceTerm& t) { return t.m == s.m; });
    if (it == terms.end()) {
      terms.push_back({s.m, SpectralVorticity(lattice), SpectralVorticity(lattice)});
      it = terms.end() - 1;
    }
    const auto field = s.sin_in_x ? SpectralVorticity::sin_mode(lattice, s.k1, s.k2, s.amp)
                                  : SpectralVorticity::cos_mode(lattice, s.k1, s.k2, s.amp);
    (s.sin_in_h ? it->sin_amp : it->cos_amp) += field;
  }
  return QuasiPeriodicForce(std::move(alpha), std::move(lattice), std::move(terms), holder_gamma);
}

QuasiPeriodicForce QuasiPeriodicForce::zero(Frequency alpha, LatticePtr lattice) {
  return QuasiPeriodicForce(std::move(alpha), std::move(lattice), {});
}

SpectralVorticity QuasiPeriodicForce::eval(const TorusPoint& h) const {
  if (h.dim() != alpha_.dim()) throw InvalidArgument("torus dimension mismatch");
  SpectralVorticity f(lattice_);
  for (const auto& t : terms_) {
    const double phase = dot(t.m, h.values());
    f.axpy(std::cos(phase), t.cos_amp);
    f.axpy(std::sin(phase), t.sin_amp);
  }
  return f;
}

double QuasiPeriodicForce::sup_bound() const {
  double s = 0.0;
  for (const auto& t : terms_) s += pair_norm(t);
  return s;
}

double QuasiPeriodicForce::lipschitz_constant() const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double m2 = 0.0;
    for (int v : t.m) m2 += static_cast<double>(v) * v;
    s += std::sqrt(m2) * pair_norm(t);
  }
  return s;
}

bool QuasiPeriodicForce::is_constant() const {
  for (const auto& t : terms_) {
    const bool zero_m = std::all_of(t.m.begin(), t.m.end(), [](int v) { return v == 0; });
    if (!zero_m && pair_norm(t) > 0.0) return false;
  }
  return true;
}

QuasiPeriodicForce QuasiPeriodicForce::shifted(double s) const {
  QuasiPeriodicForce out = *this;
  for (auto& t : out.terms_) {
    double phi = 0.0;
    for (std::size_t i = 0; i < t.m.size(); ++i) phi += t.m[i] * wrap_angle(alpha_.alpha[i] * s);
    const double c = std::cos(phi);
    const double sn = std::sin(phi);
    SpectralVorticity cos_new = c * t.cos_amp + sn * t.sin_amp;
    SpectralVorticity sin_new = -sn * t.cos_amp + c * t.sin_amp;
    t.cos_amp = std::move(cos_new);
    t.sin_amp = std::move(sin_new);
  }
  return out;
}

namespace {
SpectralVorticity restrict_to(const SpectralVorticity& w, const LatticePtr& lattice) {
  SpectralVorticity out(lattice);
  const auto& src = *w.lattice();
  const int n = lattice->truncation();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto [k1, k2] = src.mode(i);
    if (std::abs(k1) <= n && std::abs(k2) <= n) out.set(k1, k2, w[i]);
  }
  return out;
}
}  // namespace

QuasiPeriodicForce QuasiPeriodicForce::on_lattice(LatticePtr lattice) const {
  std::vector<ForceTerm> terms;
  for (const auto& t : terms_) terms.push_back({t.m, restrict_to(t.cos_amp, lattice), restrict_to(t.sin_amp, lattice)});
  return QuasiPeriodicForce(alpha_, std::move(lattice), std::move(terms), gamma_);
}

SpectralVorticity eval_force(const QuasiPeriodicForce& psi, const TorusPoint& h) { return psi.eval(h); }

// ------------------------------------------------------------- noise

double NoiseConfig::energy_input() const {
  double s = 0.0;
  for (const auto& g : directions) s += norm_sq(g);
  return s;
}

void NoiseConfig::validate(const LatticePtr& lattice) const {
  for (const auto& g : directions) {
    if (g.empty() || g.lattice()->truncation() != lattice->truncation())
      throw InvalidArgument("noise direction lattice mismatch");
  }
  if (!directions.empty() && energy_input() <= 0.0) throw InvalidArgument("noise directions carry no energy");
}

NoiseConfig NoiseConfig::on_lattice(LatticePtr lattice) const {
  NoiseConfig out{{}, seed};
  for (const auto& g : directions) out.directions.push_back(restrict_to(g, lattice));
  return out;
}

NoiseConfig canonical_noise(const LatticePtr& lattice, double amp, std::uint64_t seed) {
  return NoiseConfig{{SpectralVorticity::cos_mode(lattice, 1, 0, amp), SpectralVorticity::sin_mode(lattice, 1, 0, amp),
                      SpectralVorticity::cos_mode(lattice, 1, 1, amp), SpectralVorticity::sin_mode(lattice, 1, 1, amp)},
                     seed};
}

// --------------------------------------------------------- Diophantine

DiophantineResult diophantine_check(const Frequency& alpha, DiophantineParams params, long long kmax) {
  if (kmax < 1) throw InvalidArgument("kmax must be >= 1");
  if (alpha.dim() == 0) throw InvalidArgument("empty frequency vector");
  check_guard(alpha, kmax);
  if (shell_count(alpha.dim(), kmax) > 4e9) throw InvalidArgument("Diophantine scan too large; reduce kmax");
  DiophantineResult res{false, {}, std::numeric_limits<double>::infinity(), 0.0, params.admissible(alpha.dim())};
  for (long long r = 1; r <= kmax; ++r) {
    const double weight = std::pow(static_cast<double>(r), params.A);
    for_each_in_shell(alpha.dim(), r, [&](std::span<const long long> k) {
      const double d = integer_distance(k, alpha);
      if (d * weight < res.margin) {
        res.margin = d * weight;
        res.worst_distance = d;
        res.worst_k.assign(k.begin(), k.end());
      }
    });
  }
  res.pass = res.margin >= params.K;
  return res;
}

DiophantineFit fit_diophantine_exponent(const Frequency& alpha, long long kmax) {
  if (kmax < 100) throw InvalidArgument("fit_diophantine_exponent needs kmax >= 100");
  if (alpha.dim() == 0) throw InvalidArgument("empty frequency vector");
  check_guard(alpha, kmax);
  if (shell_count(alpha.dim(), kmax) > 4e9) throw InvalidArgument("Diophantine scan too large; reduce kmax");
  struct Record {
    double r, d;
  };
  std::vector<Record> records;
  double best = std::numeric_limits<double>::infinity();
  double unit_min = std::numeric_limits<double>::infinity();
  for (long long r = 1; r <= kmax; ++r) {
    double shell_min = std::numeric_limits<double>::infinity();
    for_each_in_shell(alpha.dim(), r, [&](std::span<const long long> k) {
      shell_min = std::min(shell_min, integer_distance(k, alpha));
    });
    if (r == 1) unit_min = shell_min;
    if (shell_min < best) {
      best = shell_min;
      if (shell_min > 0.0) records.push_back({static_cast<double>(r), shell_min});
      else break;  // exact resonance; larger shells cannot improve the record
    }
  }
  if (records.size() < 3) throw InvalidArgument("degenerate Diophantine fit: fewer than 3 record minima");
  // log d = log K - A log r.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(records.size());
  for (const auto& rec : records) {
    const double x = std::log(rec.r), y = std::log(rec.d);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  double ss = 0.0;
  for (const auto& rec : records) {
    const double e = std::log(rec.d) - (intercept + slope * std::log(rec.r));
    ss += e * e;
  }
  DiophantineFit fit{};
  fit.A_regression = -slope;
  fit.K_fit = std::exp(intercept);
  fit.residual = std::sqrt(ss / n);
  fit.records = records.size();
  fit.unit_shell_pass = unit_min >= fit.K_fit;
  // Records dominate every other k of the same or larger shell, so they fix the smallest A.
  double a_needed = -std::numeric_limits<double>::infinity();
  for (const auto& rec : records) {
    if (rec.r < 2.0) continue;
    a_needed = std::max(a_needed, (std::log(fit.K_fit) - std::log(rec.d)) / std::log(rec.r));
  }
  fit.A_fit = a_needed;
  return fit;
}

}  // namespace qpns
