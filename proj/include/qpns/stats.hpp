#pragma once

// Observables on the skew product H x T^n, centering against an estimated
// quasi-periodic invariant measure, correctors, martingale decomposition,
// limit-theorem experiments, moment and continuity bounds, Birkhoff rates
// and two exact algebraic lemmas.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "qpns/integrator.hpp"
#include "qpns/numeric.hpp"
#include "qpns/transport.hpp"

namespace qpns {

// --------------------------------------------------------------- observables

enum class ObservableKind { kConstant, kEnergy, kModeRe, kModeIm, kTanhMode, kExpWeighted };

// Built-in catalog with certified metadata: |phi(w)| <= norm_bound e^{eta |w|^2},
// phi is gamma-Holder.
struct Observable {
  ObservableKind kind = ObservableKind::kConstant;
  int k1 = 1;
  int k2 = 0;
  double parameter = 0.0;  // constant value, tanh scale or exponential weight
  double gamma = 1.0;
  double eta = 0.0;
  double norm_bound = 0.0;

  static Observable constant(double c);
  static Observable energy(double eta = 0.01);
  static Observable mode_re(int k1, int k2, double eta = 0.01);
  static Observable mode_im(int k1, int k2, double eta = 0.01);
  static Observable tanh_mode(int k1, int k2, double scale);
  static Observable exp_weighted(double weight);

  double operator()(const SpectralVorticity& w) const;
  std::string name() const;
  // Odd under the point reflection w(x) -> w(-x).
  bool odd_under_reflection() const { return kind == ObservableKind::kModeIm; }
};

// Parses "energy", "mode_re(1,0)", "mode_im(1,0)", "tanh_mode(1,0,0.5)",
// "exp_weighted(0.001)", "constant(2)".
Observable parse_observable(const std::string& text);

// --------------------------------------------------------------- measure path

// Estimated Gamma_h on the grid h = 2 pi (i_1, ..., i_n) / resolution with
// nearest-grid lookup.
struct MeasurePath {
  std::size_t dim = 0;
  std::size_t resolution = 1;
  std::vector<EmpiricalMeasure> measures;

  std::size_t size() const { return measures.size(); }
  std::size_t nearest(const TorusPoint& h) const;
  TorusPoint grid_point(std::size_t index) const;
  const EmpiricalMeasure& at(const TorusPoint& h) const { return measures[nearest(h)]; }
  void validate() const;
};

// Grid point g uses trajectory ids derived from (opt.trajectory_base, g).
MeasurePath build_measure_path(const Model& model, std::size_t resolution, const InvariantOptions& opt);

// --------------------------------------------------------- centered observable

class CenteredObservable {
 public:
  // phi - 0: the deliberately uncentered control.
  static CenteredObservable uncentered(Observable phi, std::size_t dim);

  CenteredObservable(Observable phi, std::size_t dim, std::size_t resolution, std::vector<double> means,
                     bool centered = true);

  double operator()(const SpectralVorticity& w, const TorusPoint& h) const { return phi_(w) - mean_at(h); }
  double mean_at(const TorusPoint& h) const;
  const Observable& base() const { return phi_; }
  const std::vector<double>& means() const { return means_; }
  bool centered() const { return centered_; }
  // Identically zero (constant phi against normalized weights).
  bool trivially_zero() const;

 private:
  Observable phi_;
  std::size_t dim_;
  std::size_t resolution_;
  std::vector<double> means_;
  bool centered_;
};

CenteredObservable center(const Observable& phi, const MeasurePath& gamma);

// Weighted mean of phi over a measure and its standard error.
MeanSe measure_mean(const Observable& phi, const EmpiricalMeasure& mu);

// max over the fine grid of |<coarse at nearest, phi> - <fine, phi>|.
double grid_refinement_delta(const Observable& phi, const MeasurePath& coarse, const MeasurePath& fine);

// ----------------------------------------------------------------- helpers

// Trajectory ids derived from a base and up to two indices.
std::uint64_t stream_id(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// Integrates phi_tilde(w_t, beta_t h) with the trapezoid rule on the step grid
// from time s; cumulative integrals (and states when requested) at s + marks.
struct PathIntegral {
  std::vector<double> integrals;
  std::vector<SpectralVorticity> states;
  std::vector<double> values;  // phi_tilde at the marks
};
PathIntegral integrate_along(const Model& model, const SpectralVorticity& w0, const TorusPoint& h, double s,
                             const std::vector<double>& marks, const WienerPath& path,
                             const std::function<double(const SpectralVorticity&, const TorusPoint&)>& f,
                             bool keep_states = false);

struct PowerFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool fitted = false;
  std::string note;
};

// Least squares of log y on log x over points with y > 0.
PowerFit fit_power(const std::vector<double>& x, const std::vector<double>& y);

// ----------------------------------------------------------------- corrector

struct CorrectorOptions {
  double t_chi = 10.0;
  std::size_t paths = 200;
  std::uint64_t trajectory_base = 1000003;
  double rate = 0.0;            // decay rate for the tail; 0 fits it from the mean curve
  double tail_tolerance = 0.1;  // relative to |value| + se
  std::size_t curve_points = 40;
};

struct CorrectorEstimate {
  double value = 0.0;
  double se = 0.0;
  double tail_bound = 0.0;
  double rate_used = 0.0;
  bool rate_fitted = false;
  bool flagged = false;
};

// Monte Carlo int_0^{T_chi} P_t phi_tilde(w, h) dt for the homogenized process
// started at time 0 in state (w, h); `salt` separates independent calls.
CorrectorEstimate estimate_corrector(const Model& model, const CenteredObservable& phi, const SpectralVorticity& w,
                                     const TorusPoint& h, const CorrectorOptions& opt, std::uint64_t salt = 0);

using CorrectorFunction = std::function<double(const SpectralVorticity&, const TorusPoint&)>;

// estimate_corrector as a function of the state; every call reuses the same paths.
CorrectorFunction corrector_function(const Model& model, const CenteredObservable& phi, const CorrectorOptions& opt);

// Decay of |E phi_tilde(X_t)| from a start; points below 2 se are censored.
RateFit observable_decay(const Model& model, const CenteredObservable& phi, const SpectralVorticity& w0,
                         const TorusPoint& h, const std::vector<double>& times, std::size_t paths,
                         std::uint64_t trajectory_base);

// -------------------------------------------------------------- martingale

struct MartingaleDecomposition {
  double horizon = 0.0;            // T
  std::vector<double> M;           // M_0 .. M_N
  std::vector<double> Z;           // Z_1 .. Z_N
  std::vector<double> chi;         // chi(X_0) .. chi(X_N)
  std::vector<double> feature;     // phi_tilde(X_0) .. phi_tilde(X_N)
  std::vector<double> integral;    // int_0^k phi_tilde, k = 0 .. N
  double total_integral = 0.0;     // int_0^T phi_tilde
  double remainder = 0.0;          // R_{N,T}
};

// Simulates from time 0 at symbol h and decomposes int_0^T phi_tilde.
// Integer times must lie on the step grid.
MartingaleDecomposition martingale_decompose(const Model& model, const SpectralVorticity& w0, const TorusPoint& h,
                                             double horizon, const WienerPath& path, const CenteredObservable& phi,
                                             const CorrectorFunction& chi);

struct MartingaleReport {
  double slope = 0.0;
  std::pair<double, double> slope_ci;
  double intercept = 0.0;
  std::pair<double, double> intercept_ci;
  std::vector<double> mean_M;
  std::vector<double> se_M;
  std::size_t worst_index = 0;
  double worst_z = 0.0;  // max_N |mean M_N| / se
  bool pass = false;
};

// Regression of Z_{N+1} on phi_tilde(X_N) pooled over trajectories plus
// per-N tests of E M_N = 0. Needs >= 100 trajectories.
MartingaleReport test_martingale_property(const std::vector<MartingaleDecomposition>& ensemble);

// -------------------------------------------------------------- SLLN and CLT

struct SllnOptions {
  double s = 0.0;
  std::vector<double> horizons;
  std::size_t paths = 100;
  std::uint64_t trajectory_base = 2000003;
};

struct SllnReport {
  std::vector<double> horizons;
  std::vector<double> mean_abs;             // E|A(T)|
  std::vector<double> se_abs;
  std::vector<double> mean_signed;          // E A(T)
  std::vector<double> se_signed;
  std::vector<std::vector<double>> samples;  // A(T) per horizon and path
  PowerFit fit;                              // log E|A| on log T
};

// A(T) = (1/T) int_0^T phi_tilde(w_{s, s+t}, beta_{s+t} h) dt.
SllnReport slln_run(const Model& model, const CenteredObservable& phi, const SpectralVorticity& w0,
                    const TorusPoint& h, const SllnOptions& opt);

struct MomentReport {
  std::size_t p = 1;
  std::vector<double> moment;  // E|A(T)|^{2p}
  std::vector<double> se;
  PowerFit fit;
  bool pass = false;  // slope <= -p + 0.15
};

// Kurtosis guard: throws ConvergenceError when a moment's relative SE exceeds 0.5.
MomentReport moment_rate_check(const SllnReport& slln, std::size_t p);

struct CltOptions {
  double s = 0.0;
  double horizon = 50.0;
  std::vector<double> sweep;  // extra horizons for the sup-distance curve
  std::size_t paths = 2000;
  std::uint64_t trajectory_base = 3000017;
  double degenerate_tolerance = 1e-12;
};

struct CltReport {
  std::vector<double> samples;  // T^{-1/2} int_0^T phi_tilde
  double sigma2_hat = 0.0;      // sample second moment
  double sigma2_se = 0.0;
  double sigma2_ref = 0.0;
  bool degenerate = false;
  double ks = 0.0;              // against N(0, sigma2_ref); weighted statistic when degenerate
  std::vector<double> sweep_horizons;
  std::vector<double> sweep_ks;
};

// sup_z (|z| ^ 1) |F_n(z) - 1{z >= 0}|.
double degenerate_weighted_distance(std::vector<double> samples);

CltReport clt_run(const Model& model, const CenteredObservable& phi, const SpectralVorticity& w0,
                  const TorusPoint& h, double sigma2_ref, const CltOptions& opt);

struct Sigma2Estimate {
  double value = 0.0;
  double se = 0.0;
};

// (1/T) mean of (int_0^T phi_tilde)^2 over paths started at starts[j % size].
Sigma2Estimate estimate_sigma2_direct(const Model& model, const CenteredObservable& phi,
                                      const EmpiricalMeasure& starts, const TorusPoint& h, double horizon,
                                      std::size_t paths, std::uint64_t trajectory_base);

struct Sigma2CorrectorOptions {
  CorrectorOptions corrector;
  std::size_t max_particles = 0;  // per grid point; 0 uses all particles
  bool y_route = false;
  std::size_t y_outer = 8;        // outer paths per particle for Y = E M_1^2
};

struct Sigma2CorrectorReport {
  Sigma2Estimate corrector_route;  // 2 int phi_tilde chi dGamma_h dlambda
  Sigma2Estimate y_route;          // torus average of F(h) = <Gamma_h, Y>
  std::vector<double> F;           // per grid point
  std::vector<double> F_se;
  bool y_computed = false;
  std::size_t flagged_correctors = 0;
  std::string warning;
};

Sigma2CorrectorReport estimate_sigma2_corrector(const Model& model, const CenteredObservable& phi,
                                                const MeasurePath& gamma, const Sigma2CorrectorOptions& opt);

// ------------------------------------------------------------------ Birkhoff

struct BirkhoffReport {
  std::vector<std::size_t> counts;
  std::vector<double> averages;
  std::vector<double> errors;    // |average - integral|
  std::vector<double> envelope;  // max of errors over larger counts
  double integral = 0.0;
  PowerFit fit;                  // log envelope on log N
  double predicted_exponent = 0.0;  // -gamma / (A + n)
  bool exact_zero = false;
};

// (1/N) sum_{k=1}^N F(h0 + (k - 1) alpha) against int F d lambda; the integral
// is the tensor trapezoid rule with `quadrature` points per axis when not given.
BirkhoffReport birkhoff_rate(const std::function<double(const TorusPoint&)>& F, const Frequency& alpha,
                             const TorusPoint& h0, const std::vector<std::size_t>& counts, double holder_gamma,
                             double diophantine_A, double integral = std::numeric_limits<double>::quiet_NaN(),
                             std::size_t quadrature = 256);

// ------------------------------------------------------------------ lemmas

struct MultinomialResult {
  double lhs;
  double rhs;
  double residual;  // |lhs - rhs| / (sum of |terms| + |lhs|)
};

// |S_m|^{2p} against sum_i sum_{j >= i} f_{2p-2, j}(x_1..x_i) x_i x_j.
MultinomialResult multinomial_identity(const std::vector<double>& xs, int p);

struct HolderBound {
  double T;
  double lhs;
  double rhs;
  double gamma_bar;
  bool pass;
};

// e^{L1 T} delta^gamma + e^{-L2 T} <= 2 D^gamma delta^{gamma_bar} with
// T = -gamma ln(delta) / (L1 + L2) (0 when delta >= 1).
HolderBound holder_exponent_bound(double D, double lambda1, double lambda2, double gamma, double delta);

struct LemmaSuite {
  std::size_t draws = 0;
  std::size_t failures = 0;
  double worst = 0.0;           // largest relative residual, or smallest rhs - lhs margin
  double equality_error = 0.0;  // Holder suite: max deviation in the equality case
  bool pass = false;
};

// Random p in 1..4, m in 1..20 and Gaussian x; passes when every residual <= tolerance.
LemmaSuite multinomial_suite(std::size_t draws, std::uint64_t seed, double tolerance = 1e-9);
// Random D in [1, 10), lambdas in [0.01, 5.01), gamma in [0.01, 1), delta = D u^3,
// plus the equality case D = 1, lambda1 = lambda2 = gamma = 1, delta = e^-2 to 1e-12.
LemmaSuite holder_suite(std::size_t draws, std::uint64_t seed);

// ---------------------------------------------------------------- Lyapunov

struct LyapunovConfig {
  double eta = 0.0;
  double kappa = 1.0;
  double a = 0.5;
  double c = 2.0;

  void validate() const;
};

// Logarithms of the explicit constants, so that large exponents do not overflow.
struct LyapunovConstants {
  double nu = 0.0;
  double B0 = 0.0;
  double f_sup = 0.0;        // max of |Psi| over a torus grid
  double f_sup_bound = 0.0;  // sum of term norms
  double eta0 = 0.0;         // infinite without noise
  double C_fB0 = 0.0;
  double exponent = 0.0;     // eta0 C(f, B0) / nu, taken as 0 when C(f, B0) = 0
  double log_C_moment = 0.0;
  double log_C_enstrophy = 0.0;
  double log_C_initial = 0.0;

  // log of 16 (r nu)^-1 (1 - 2^{1-c})^-2 exp(exponent).
  double log_C_hull(double r, double c) const;
};

LyapunovConstants lyapunov_constants(const Model& model, const LyapunovConfig& cfg, std::size_t grid = 64);
// r = 64 c0^6 eta^-3 nu^-5 + eta C(f, B0).
double growth_rate_r(const LyapunovConstants& k, double eta, double c0);

struct BoundRow {
  double t = 0.0;
  double lhs = 0.0;
  double se = 0.0;
  double log_rhs = 0.0;
  bool pass = false;
};

struct LyapunovReport {
  LyapunovConstants constants;
  std::vector<BoundRow> exp_moment;
  BoundRow enstrophy;
  double min_ess = 0.0;
  bool pass = false;
};

struct LyapunovOptions {
  double s = 0.0;
  std::vector<double> times;  // elapsed times, multiple of dt
  double tau = 0.0;            // enstrophy start, elapsed
  std::size_t paths = 1000;
  std::uint64_t trajectory_base = 4000037;
  double slack_se = 3.0;
};

LyapunovReport lyapunov_check(const Model& model, const LyapunovConfig& cfg, const SpectralVorticity& w0,
                              const TorusPoint& h, const LyapunovOptions& opt);

enum class ContinuityKind { kSymbol, kInitial };

struct ContinuityReport {
  ContinuityKind kind = ContinuityKind::kSymbol;
  double c0 = 0.0;
  double r = 0.0;
  double log_prefactor = 0.0;  // log RHS at t = 0
  std::vector<BoundRow> rows;
  bool pass = false;
};

// Same-path coupling. kSymbol: pair (h1, h2) from w1; kInitial: pair (w1, w2) at h1.
ContinuityReport continuity_checks(const Model& model, const LyapunovConfig& cfg, ContinuityKind kind,
                                   const SpectralVorticity& w1, const SpectralVorticity& w2, const TorusPoint& h1,
                                   const TorusPoint& h2, const std::vector<double>& times, std::size_t paths,
                                   double c0, std::uint64_t trajectory_base = 5000011);

struct ForwardAverageReport {
  double forward = 0.0;
  double forward_se = 0.0;
  double torus = 0.0;
  double torus_se = 0.0;
  bool overlap = false;
};

// (1/N) sum_j E phi(w_{0, (j-1) K, h}) against the torus average of <Gamma_g, phi>.
ForwardAverageReport forward_average_check(const Model& model, const Observable& phi, const SpectralVorticity& w0,
                                           const TorusPoint& h, double K, std::size_t N, const MeasurePath& gamma,
                                           std::size_t paths, std::uint64_t trajectory_base = 6000011);

}  // namespace qpns
