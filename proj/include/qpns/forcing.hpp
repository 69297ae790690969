#pragma once

// Quasi-periodic forcing f(t) = Psi(h + alpha t), the rotation flow on the
// n-torus, Diophantine utilities and the additive noise directions.

#include <cstdint>
#include <span>
#include <vector>

#include "qpns/spectral.hpp"

namespace qpns {

// Point on the n-torus with components reduced to [0, 2pi).
class TorusPoint {
 public:
  TorusPoint() = default;
  explicit TorusPoint(std::vector<double> h);
  static TorusPoint zero(std::size_t n) { return TorusPoint(std::vector<double>(n, 0.0)); }

  std::size_t dim() const { return h_.size(); }
  double operator[](std::size_t i) const { return h_[i]; }
  std::span<const double> values() const { return h_; }

 private:
  std::vector<double> h_;
};

// Reduces x to [0, 2pi).
double wrap_angle(double x);

// Euclidean distance on the torus (each component difference wrapped to [-pi, pi]).
double torus_distance(const TorusPoint& a, const TorusPoint& b);

struct Frequency {
  std::vector<double> alpha;
  std::size_t dim() const { return alpha.size(); }
};

// (h + alpha t) mod 2pi.
TorusPoint rotate(const TorusPoint& h, const Frequency& alpha, double t);

struct IndependenceReport {
  bool independent;
  std::vector<long long> witness;  // minimizing k
  double min_distance;             // min dist(k.alpha, Z) over the scan
};

// Finite proxy for rational independence: scans 0 < |k|_inf <= q_check for
// dist(k.alpha, Z) <= tol.
IndependenceReport rational_independence_check(const Frequency& alpha, long long q_check = 1000, double tol = 1e-9);

struct ForceTerm {
  std::vector<int> m;             // torus harmonic
  SpectralVorticity cos_amp;      // multiplies cos(m.h)
  SpectralVorticity sin_amp;      // multiplies sin(m.h)
};

// Config-level description of one amplitude: amp * trig_h(m.h) * trig_x(k.x).
struct ForceTermSpec {
  std::vector<int> m;
  bool sin_in_h = false;
  int k1 = 1;
  int k2 = 0;
  double amp = 0.0;
  bool sin_in_x = false;
};

class QuasiPeriodicForce {
 public:
  QuasiPeriodicForce() = default;
  QuasiPeriodicForce(Frequency alpha, LatticePtr lattice, std::vector<ForceTerm> terms, double holder_gamma = 1.0);
  static QuasiPeriodicForce from_specs(Frequency alpha, LatticePtr lattice, std::span<const ForceTermSpec> specs,
                                       double holder_gamma = 1.0);
  static QuasiPeriodicForce zero(Frequency alpha, LatticePtr lattice);

  const Frequency& frequency() const { return alpha_; }
  const LatticePtr& lattice() const { return lattice_; }
  std::span<const ForceTerm> terms() const { return terms_; }
  double holder_gamma() const { return gamma_; }

  SpectralVorticity eval(const TorusPoint& h) const;

  // Certified sup_h |Psi(h)|: sum over terms of (|C|^2 + |S|^2)^{1/2}.
  double sup_bound() const;
  // |Psi(h1) - Psi(h2)| <= L torus_distance(h1, h2) with L = sum |m|_2 (|C|^2 + |S|^2)^{1/2}.
  double lipschitz_constant() const;
  // True when Psi does not depend on h.
  bool is_constant() const;

  // Psi_s(h) = Psi(h + alpha s), realized by rotating the term phases.
  QuasiPeriodicForce shifted(double s) const;

  // Same force on another truncation (modes beyond the new radius dropped).
  QuasiPeriodicForce on_lattice(LatticePtr lattice) const;

 private:
  Frequency alpha_;
  LatticePtr lattice_;
  std::vector<ForceTerm> terms_;
  double gamma_ = 1.0;
};

SpectralVorticity eval_force(const QuasiPeriodicForce& psi, const TorusPoint& h);

struct NoiseConfig {
  std::vector<SpectralVorticity> directions;
  std::uint64_t seed = 0;

  std::size_t count() const { return directions.size(); }
  // B0 = sum_i |g_i|^2.
  double energy_input() const;
  void validate(const LatticePtr& lattice) const;
  NoiseConfig on_lattice(LatticePtr lattice) const;
};

// amp * {cos x1, sin x1, cos(x1 + x2), sin(x1 + x2)}.
NoiseConfig canonical_noise(const LatticePtr& lattice, double amp, std::uint64_t seed);

struct DiophantineParams {
  double K;
  double A;
  // The definition asks for A > n.
  bool admissible(std::size_t n) const { return K > 0.0 && A > static_cast<double>(n); }
};

struct DiophantineResult {
  bool pass;                      // min over the scan of dist * |k|^A >= K
  std::vector<long long> worst_k;
  double margin;                  // that minimum
  double worst_distance;          // dist(worst_k . alpha, Z)
  bool admissible;                // A > n
};

// Exhaustive scan of 0 < |k|_inf <= kmax with |k| the max norm.
DiophantineResult diophantine_check(const Frequency& alpha, DiophantineParams params, long long kmax);

struct DiophantineFit {
  double A_fit;       // smallest A passing with K_fit on |k| >= 2
  double K_fit;       // exp(intercept) of the record regression
  double A_regression;
  double residual;    // RMS of the log-log regression
  std::size_t records;
  bool unit_shell_pass;  // all |k| = 1 distances >= K_fit
};

DiophantineFit fit_diophantine_exponent(const Frequency& alpha, long long kmax);

// dist(k.alpha, Z), computed from per-component fractional parts with fused
// multiply-add so large k do not lose the integer part.
double integer_distance(std::span<const long long> k, const Frequency& alpha);

}  // namespace qpns
