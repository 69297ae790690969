#pragma once

// Large-viscosity regime: laminar thresholds, the pullback quasi-periodic
// solution, exponential attraction and Holder continuity of the random field.

#include <cstdint>
#include <string>
#include <vector>

#include "qpns/integrator.hpp"
#include "qpns/stats.hpp"
#include "qpns/transport.hpp"

namespace qpns {

enum class ThresholdStatus {
  kPassSubjectToC0,  // holds for the supplied c0; a larger true c0 could break it
  kCertifiedFail,    // fails already for the supplied lower bound of c0
};

struct LaminarThresholds {
  double G = 0.0;
  double delta0 = 0.0;  // nu (1 - c0^2 G^2)
  double c0 = 0.0;
  bool grashof_ok = false;    // G c0 <= sqrt(1/2)
  bool viscosity_ok = false;  // nu^3 > 8 (n + eta_bar) c0^2 B0 / gamma
  ThresholdStatus status = ThresholdStatus::kCertifiedFail;

  bool pass() const { return grashof_ok && viscosity_ok; }
};

LaminarThresholds thresholds(double nu, double f_sup, double B0, double c0, std::size_t n, double eta_bar,
                             double gamma);

// |Psi| maximized over a torus grid with `grid` points per axis.
double force_grid_sup(const QuasiPeriodicForce& force, std::size_t grid = 64);

struct PullbackOptions {
  double initial_depth = 1.0;  // multiple of dt
  std::size_t doublings = 8;   // depths initial_depth * 2^k, k = 0 .. doublings
  double tolerance = 1e-8;     // on |Q_k - Q_{k-1}|
  SpectralVorticity start;     // zero field when empty
};

struct PullbackEntry {
  SpectralVorticity value;
  double depth = 0.0;
  std::vector<double> depths;  // schedule actually run
  std::vector<double> deltas;  // |Q_k - Q_{k-1}|, aligned with depths[1..]
  bool converged = false;
};

struct PullbackSolution {
  std::vector<TorusPoint> points;
  std::vector<std::uint64_t> seeds;   // trajectory ids of the two-sided noise paths
  std::vector<PullbackEntry> entries; // row-major: point index * seeds.size() + seed index

  const PullbackEntry& at(std::size_t point, std::size_t seed) const { return entries[point * seeds.size() + seed]; }
  bool converged() const;
  // Rate of |Q_k - Q_{k-1}|^2 in the depth, pooled over entries with >= 3 deltas above 1e-300.
  RateFit depth_rate() const;
};

PullbackSolution compute_pullback_solution(const Model& model, const std::vector<TorusPoint>& points,
                                           const std::vector<std::uint64_t>& seeds, const PullbackOptions& opt);

// | -nu |k|^2 w + Psi(h) - B(Kw, w) | / max(|Psi(h)|, 1e-300).
double stationary_residual(const Model& model, const SpectralVorticity& w, const TorusPoint& h);

// |Phi(shift; Q(h, omega)) - Q(beta_shift h, theta_shift omega)| for one entry.
double forward_invariance_delta(const Model& model, const PullbackSolution& sol, std::size_t point,
                                std::size_t seed, double shift, const PullbackOptions& opt);

enum class AttractionDirection { kForward, kPullback };

struct AttractionOptions {
  double radius = 1.0;
  double horizon = 10.0;
  std::size_t samples = 20;   // time points after 0
  std::size_t starts = 8;     // perturbation directions
  AttractionDirection direction = AttractionDirection::kForward;
  double pullback_depth = 40.0;  // to place w* at -T for the pullback direction
  std::uint64_t perturbation_seed = 7;
};

struct AttractionReport {
  std::vector<double> times;
  std::vector<double> sup_sq;  // max over starts of the squared distance
  RateFit fit;
  double onset = 0.0;          // first time after which r^2 e^{-rate t} bounds every sample
  bool envelope_holds = false;
  bool regime_flag = false;    // no decay: outside the laminar regime
  bool pass = false;
};

// Same-noise perturbations of the orbit of w*(h, omega) at radius r.
AttractionReport attraction_test(const Model& model, const TorusPoint& h, std::uint64_t seed,
                                 const SpectralVorticity& w_star, const AttractionOptions& opt);

struct HolderFieldReport {
  std::vector<double> separations;
  std::vector<double> moments;  // E |Q(h1) - Q(h2)|^{2p} per separation
  PowerFit fit;
  double target = 0.0;          // p gamma - 0.2
  bool zero = false;
  bool pass = false;
};

// Pairs (i, j) index sol.points; moments average over pairs at the same
// separation and over seeds. Needs >= 4 distinct separations.
HolderFieldReport holder_field_test(const PullbackSolution& sol, std::size_t p,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double gamma);

// Points h0 and h0 + s e for each separation s; pairs (0, k).
std::vector<TorusPoint> holder_points(const TorusPoint& h0, const std::vector<double>& direction,
                                      const std::vector<double>& separations);

// Directory with manifest.json and one snapshot per (point, seed).
void save_pullback(const std::string& dir, const PullbackSolution& sol, const std::string& extra_json = "{}");
PullbackSolution load_pullback(const std::string& dir);

}  // namespace qpns
