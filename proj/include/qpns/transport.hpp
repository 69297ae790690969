#pragma once

// Weighted costs, empirical measures, exact and entropic optimal transport,
// Kantorovich duality, pullback invariant-measure estimation and mixing rates.
//
// Every reported distance uses the straight-line path, so it is an upper bound
// for the geodesic weighted metric.

#include <cstdint>
#include <string>
#include <vector>

#include "qpns/integrator.hpp"
#include "qpns/numeric.hpp"
#include "qpns/spectral.hpp"

namespace qpns {

struct CostSpec {
  double eta = 0.01;     // Lyapunov weight; 0 gives the unweighted limit |w1 - w2|
  double r = 1.0;        // exponent of the weight, in (0, 1]
  std::size_t nodes = 16;

  void validate() const;
};

// |w2 - w1| int_0^1 exp(r eta |w1 + t (w2 - w1)|^2) dt by Gauss-Legendre.
double weighted_cost(const SpectralVorticity& w1, const SpectralVorticity& w2, const CostSpec& spec);

struct EmpiricalMeasure {
  std::vector<SpectralVorticity> particles;
  std::vector<double> weights;

  static EmpiricalMeasure uniform(std::vector<SpectralVorticity> particles);
  static EmpiricalMeasure dirac(const SpectralVorticity& w);
  std::size_t size() const { return particles.size(); }
  void validate() const;
};

struct PlanEntry {
  std::size_t i;
  std::size_t j;
  double mass;
};

struct TransportPlan {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<PlanEntry> entries;  // nonzero couplings
  double cost = 0.0;

  std::vector<double> row_marginals() const;
  std::vector<double> col_marginals() const;
};

// Pairwise cost matrix, row-major rows x cols.
std::vector<double> cost_matrix(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const CostSpec& spec);

struct ExactResult {
  double distance;
  TransportPlan plan;
  std::size_t pivots;
};

inline constexpr std::size_t kExactSolverCap = 2048;

// Network simplex on integer-scaled data (costs at 1e-12 relative
// resolution, masses in units of 2^-40). Deterministic block pivoting.
ExactResult solve_transport(const std::vector<double>& cost, const std::vector<double>& a,
                            const std::vector<double>& b);

ExactResult wasserstein_exact(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2, const CostSpec& spec,
                              std::size_t cap = kExactSolverCap);

struct SinkhornResult {
  double lower;        // c-transform dual value
  double upper;        // cost of the plan rounded onto exact marginals
  double debiased;     // Sinkhorn divergence S_eps
  double regularized;  // entropic objective OT_eps
  std::size_t iterations;
  double marginal_error;
};

// Log-domain Sinkhorn. eps_reg is relative to the mean cost. Without self
// costs the debiased field equals the regularized one.
SinkhornResult sinkhorn(const std::vector<double>& cost, const std::vector<double>& a, const std::vector<double>& b,
                        double eps_reg, std::size_t iters, double tol = 1e-6);

SinkhornResult wasserstein_sinkhorn(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2, const CostSpec& spec,
                                    double eps_reg, std::size_t iters, double tol = 1e-6);

// Dense two-phase simplex for min c.x, A x = b, x >= 0 (A row-major m x n).
// Returns the primal solution and multipliers y with A^T y <= c.
struct DenseLpResult {
  std::vector<double> x;
  std::vector<double> y;
  double objective;
  std::size_t pivots;
};
DenseLpResult dense_simplex(const std::vector<double>& A, const std::vector<double>& b, const std::vector<double>& c,
                            std::size_t m, std::size_t n);

struct DualityReport {
  double primal;              // network simplex on the metric closure of the cost
  double primal_raw;          // network simplex on the raw straight-line cost
  double dual;                // value of a 1-Lipschitz potential
  double gap;                 // primal - dual
  double lipschitz_violation; // max over pairs of phi(x) - phi(y) - d(x, y), clipped at 0
  std::size_t triangle_repairs;
};

// Kantorovich-Rubinstein duality on the union support (<= 64 points per
// measure). The potential comes from the dense simplex multipliers, so the
// dual side is independent of the network simplex.
DualityReport duality_gap(const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2, const CostSpec& spec);

struct InvariantOptions {
  std::size_t particles = 100;
  double t_back = 10.0;
  std::uint64_t trajectory_base = 0;
  double stabilization_tol = 1e-3;  // relative to the mean particle norm
  bool check_stability = true;
  // Add the point reflections w(x) -> w(-x). Valid when the force is even in x
  // and the noise set is closed under sign, so the invariant law is symmetric.
  bool symmetrize = false;
  CostSpec cost;
};

struct InvariantEstimate {
  EmpiricalMeasure measure;
  double doubling_shift = 0.0;  // distance between the T and 2T estimates
  bool stable = true;
};

EmpiricalMeasure reflect(const EmpiricalMeasure& mu);

InvariantEstimate estimate_invariant_measure(const Model& model, const TorusPoint& h, const InvariantOptions& opt);

struct RateFit {
  double exponent = 0.0;   // decay rate (positive for decay)
  double prefactor = 0.0;
  double r2 = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double decades = 0.0;    // log10(max / min) over the fitted points
  std::size_t used = 0;
  std::size_t censored = 0;
  bool fitted = false;
  std::string note;
};

// Fits log y = log C - rate t over entries with y above the censoring level.
RateFit fit_exponential(const std::vector<double>& t, const std::vector<double>& y, const std::vector<double>& floor);

struct MixingOptions {
  std::size_t particles = 64;
  std::vector<double> times;
  std::uint64_t trajectory_base = 0;
  double censor_factor = 3.0;
  bool synchronous_only = false;
  CostSpec cost;
};

struct MixingReport {
  std::vector<double> times;
  std::vector<double> distance;     // independent coupling, exact OT between clouds
  std::vector<double> floor;        // same-law cloud distance
  std::vector<double> synchronous;  // mean pairwise cost under shared noise
  RateFit fit;
  RateFit synchronous_fit;
};

// Particle j of ensemble 1 starts at mu1.particles[j % size] (uniform weights
// required); ensembles use
// disjoint trajectory ids, the synchronous curve reuses ensemble 1's ids.
MixingReport mixing_rate(const Model& model, const EmpiricalMeasure& mu1, const EmpiricalMeasure& mu2,
                         const TorusPoint& h, double s, const MixingOptions& opt);

// Measure directory: manifest.json plus particles.bin (concatenated snapshots).
void save_measure(const std::string& dir, const EmpiricalMeasure& mu, const std::string& extra_json = "{}");
EmpiricalMeasure load_measure(const std::string& dir);

}  // namespace qpns
