#pragma once

// Exponential-Euler integration of the truncated stochastic vorticity
// equation dw + B(Kw, w) dt = nu Lap w dt + Psi(h + alpha t) dt + sum_i g_i dW_i
// on the integer step grid t_n = n dt, with two-sided counter-based Wiener paths.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qpns/forcing.hpp"
#include "qpns/spectral.hpp"

namespace qpns {

struct SimConfig {
  double nu = 1.0;
  double dt = 0.01;
  LatticePtr lattice;
  bool nonlinear = true;
  std::string scheme = "exp-euler";

  void validate() const;
  // dt nu N^2; accuracy (not stability) degrades above 2.
  double stiffness() const;
  bool accuracy_warning() const { return stiffness() > 2.0; }
};

// Standard normal increments xi_i(n) for the step [t_n, t_{n+1}] of one
// trajectory: dW_i = sqrt(dt) xi_i(n). Steps n >= 0 draw from the forward
// stream, steps n < 0 from an independent backward stream, so W+ and W- are
// independent. shifted(j) realizes theta_{j dt} omega.
class WienerPath {
 public:
  WienerPath() = default;
  WienerPath(std::uint64_t seed, std::uint64_t trajectory, std::int64_t shift = 0)
      : seed_(seed), trajectory_(trajectory), shift_(shift) {}

  double xi(std::int64_t step, std::size_t direction) const;
  WienerPath shifted(std::int64_t steps) const { return WienerPath(seed_, trajectory_, shift_ + steps); }

  // W_i(t_n) with W(0) = 0; cost O(|n|).
  double value(std::int64_t n, std::size_t direction, double dt) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t trajectory() const { return trajectory_; }
  std::int64_t shift() const { return shift_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t trajectory_ = 0;
  std::int64_t shift_ = 0;
};

// Immutable model: configuration, force, noise and the per-mode exponential
// factors. Safe to share between threads.
class Model {
 public:
  Model(SimConfig config, QuasiPeriodicForce force, NoiseConfig noise);

  const SimConfig& config() const { return config_; }
  const QuasiPeriodicForce& force() const { return force_; }
  const NoiseConfig& noise() const { return noise_; }
  const LatticePtr& lattice() const { return config_.lattice; }
  double dt() const { return config_.dt; }

  // Grid index of time t; throws when t is not on the step grid.
  std::int64_t step_index(double t) const;
  double time_of(std::int64_t n) const { return static_cast<double>(n) * config_.dt; }

  // Advances w from t_n to t_{n+1}; the force uses the symbol h at time 0.
  void step(SpectralVorticity& w, std::int64_t n, const TorusPoint& h, const WienerPath& path,
            PseudoSpectral& workspace) const;

  // Same model without nonlinearity, force or noise as requested.
  Model linearized() const;
  Model without_noise() const;
  Model with_force(QuasiPeriodicForce force) const;

  // Per-mode stationary OU variance of the real and imaginary part under
  // the linear dynamics: sum_i |Re/Im g_i(k)|^2 / (2 nu |k|^2).
  std::vector<std::pair<double, double>> ou_stationary_variance() const;

 private:
  struct NoiseEntry {
    std::size_t mode;
    Complex amplitude;  // g_i(k) * sqrt((1 - e^{-2 lambda dt}) / (2 lambda))
  };

  SimConfig config_;
  QuasiPeriodicForce force_;
  NoiseConfig noise_;
  std::vector<double> decay_;   // e^{-lambda dt}
  std::vector<double> weight_;  // (1 - e^{-lambda dt}) / lambda
  std::vector<std::vector<NoiseEntry>> noise_entries_;
  bool forced_ = false;
  bool force_constant_ = false;
  SpectralVorticity constant_force_;
};

// One step as a free function (allocates a workspace).
SpectralVorticity step(const SpectralVorticity& w, const Model& model, const WienerPath& path, double t,
                       const TorusPoint& h);

struct Trajectory {
  double s = 0.0;
  TorusPoint h;
  std::vector<double> times;
  std::vector<SpectralVorticity> states;
  std::vector<double> enstrophy_integral;  // int_s^t |w|_1^2, trapezoid on the step grid
};

struct SimOptions {
  double sample_interval = 0.0;  // 0: endpoints only; otherwise a multiple of dt
  bool track_enstrophy = false;
  // Called with (step index, state) at every grid point from s to t inclusive.
  std::function<void(std::int64_t, const SpectralVorticity&)> observer;
};

Trajectory simulate(double s, double t, const TorusPoint& h, const SpectralVorticity& w0, const Model& model,
                    const WienerPath& path, const SimOptions& options = {});

// Final state only.
SpectralVorticity evolve(double s, double t, const TorusPoint& h, const SpectralVorticity& w0, const Model& model,
                         const WienerPath& path,
                         const std::function<void(std::int64_t, const SpectralVorticity&)>& observer = {});

// Starts at -T_back with symbol h (so the symbol at time 0 is h) and returns w(0).
SpectralVorticity simulate_pullback(double t_back, const TorusPoint& h, const SpectralVorticity& w0,
                                    const Model& model, const WienerPath& path);

// dV = nu Lap V dt + G dW on [s, t] with V(s) = 0, consuming the same
// increments as the full model.
Trajectory ou_reference(const Model& model, const WienerPath& path, double s, double t, double sample_interval = 0.0);

struct ProbeRow {
  double r1;
  double p_min;  // min over (w0, h) of P(|w_T|_1 <= r1)
  double ci_lo;
  double ci_hi;
  std::size_t worst_start;
  std::size_t worst_symbol;
};

struct ProbeTable {
  std::vector<ProbeRow> rows;
  std::size_t samples = 0;
};

// Monte Carlo probe of P(|w_{0,T,h}(w0)|_1 <= R1) minimized over the start set
// and symbol set. Starts with |w0| > R are rejected.
ProbeTable regularization_probe(const Model& model, double radius, const std::vector<double>& r1_grid, double horizon,
                                const std::vector<SpectralVorticity>& starts, const std::vector<TorusPoint>& symbols,
                                std::size_t samples, std::uint64_t trajectory_base = 0);

// {0} and +-R times the normalized cos x1, sin(x1 + x2) and one seeded random field.
std::vector<SpectralVorticity> default_probe_starts(const LatticePtr& lattice, double radius, std::uint64_t seed);

}  // namespace qpns
