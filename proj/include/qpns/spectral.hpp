#pragma once

// Truncated Fourier representation of mean-zero vorticity on the torus
// [0, 2pi)^2 together with the Biot-Savart operator, the advection term and
// Sobolev norms.
//
// Normalization: w(x) = sum_k w_k exp(i k.x) over the full lattice
// 0 < |k|_inf <= N. Only the half-plane {k2 > 0} U {k2 = 0, k1 > 0} is stored;
// w_{-k} = conj(w_k). The H inner product carries the area factor:
// <u, w> = (2 pi)^2 sum_{full k} Re(u_k conj(w_k)).

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qpns {

using Complex = std::complex<double>;

struct Mode {
  int k1;
  int k2;
  friend bool operator==(const Mode&, const Mode&) = default;
};

class ModeLattice;
using LatticePtr = std::shared_ptr<const ModeLattice>;

class ModeLattice {
 public:
  // Shared, cached instance per truncation radius.
  static LatticePtr make(int truncation);

  int truncation() const { return truncation_; }
  std::size_t size() const { return modes_.size(); }
  std::size_t real_dimension() const { return 2 * modes_.size(); }
  std::span<const Mode> modes() const { return modes_; }
  const Mode& mode(std::size_t i) const { return modes_[i]; }
  double wavenumber_sq(std::size_t i) const { return wavenumber_sq_[i]; }

  struct Lookup {
    std::size_t index;
    bool conjugate;  // true when (k1, k2) is the negative of the stored mode
  };
  // Half-plane representative of k; nullopt for k = 0 or |k|_inf > N.
  std::optional<Lookup> find(int k1, int k2) const;

  static bool in_half_plane(int k1, int k2) { return k2 > 0 || (k2 == 0 && k1 > 0); }

 private:
  explicit ModeLattice(int truncation);

  int truncation_;
  std::vector<Mode> modes_;
  std::vector<double> wavenumber_sq_;
  std::vector<std::int32_t> table_;  // full (2N+1)^2 grid -> half-plane index or -1
};

struct SobolevIndex {
  double s;
};

class SpectralVorticity {
 public:
  SpectralVorticity() = default;
  explicit SpectralVorticity(LatticePtr lattice);
  SpectralVorticity(LatticePtr lattice, std::vector<Complex> coeffs);

  // amp * cos(k.x) and amp * sin(k.x).
  static SpectralVorticity cos_mode(LatticePtr lattice, int k1, int k2, double amp = 1.0);
  static SpectralVorticity sin_mode(LatticePtr lattice, int k1, int k2, double amp = 1.0);

  const LatticePtr& lattice() const { return lattice_; }
  bool empty() const { return !lattice_; }
  std::size_t size() const { return coeffs_.size(); }
  bool same_lattice(const SpectralVorticity& other) const;

  std::span<const Complex> coeffs() const { return coeffs_; }
  std::span<Complex> coeffs() { return coeffs_; }
  const Complex& operator[](std::size_t i) const { return coeffs_[i]; }
  Complex& operator[](std::size_t i) { return coeffs_[i]; }

  // Full-lattice coefficient; zero for k = 0 and outside the truncation.
  Complex at(int k1, int k2) const;
  void set(int k1, int k2, Complex value);

  // Real coordinates (Re, Im per stored mode) scaled so that the Euclidean
  // norm equals the H norm.
  std::vector<double> to_real() const;
  static SpectralVorticity from_real(LatticePtr lattice, std::span<const double> coords);

  SpectralVorticity& operator+=(const SpectralVorticity& rhs);
  SpectralVorticity& operator-=(const SpectralVorticity& rhs);
  SpectralVorticity& operator*=(double a);
  void axpy(double a, const SpectralVorticity& x);

  friend SpectralVorticity operator+(SpectralVorticity a, const SpectralVorticity& b) { return a += b; }
  friend SpectralVorticity operator-(SpectralVorticity a, const SpectralVorticity& b) { return a -= b; }
  friend SpectralVorticity operator*(double s, SpectralVorticity a) { return a *= s; }
  friend SpectralVorticity operator*(SpectralVorticity a, double s) { return a *= s; }
  friend SpectralVorticity operator-(SpectralVorticity a) { return a *= -1.0; }

 private:
  LatticePtr lattice_;
  std::vector<Complex> coeffs_;
};

// |w|_H = real_coordinate_scale() * (sum over stored modes of |w_k|^2)^{1/2}.
double real_coordinate_scale();

double inner(const SpectralVorticity& a, const SpectralVorticity& b);
double norm_sq(const SpectralVorticity& w);
double norm(const SpectralVorticity& w);
double sobolev_norm(const SpectralVorticity& w, SobolevIndex s);

struct VelocityField {
  LatticePtr lattice;
  std::vector<Complex> u1;
  std::vector<Complex> u2;

  // max_k |k1 u1 + k2 u2| / |u(k)| over modes with nonzero velocity.
  double divergence_residual() const;
  // Vorticity recovered by curl: i k1 u2 - i k2 u1.
  SpectralVorticity curl() const;
};

// u_k = i k_perp w_k / |k|^2 with k_perp = (k2, -k1), so curl(u) = w.
VelocityField biot_savart(const SpectralVorticity& w);

// Pseudo-spectral workspace. Holds transform buffers, so one instance must not
// be shared between threads; construction is cheap once the transform plan
// for a grid size exists.
class PseudoSpectral {
 public:
  explicit PseudoSpectral(LatticePtr lattice, int grid_size = 0);
  ~PseudoSpectral();
  PseudoSpectral(const PseudoSpectral&) = delete;
  PseudoSpectral& operator=(const PseudoSpectral&) = delete;
  PseudoSpectral(PseudoSpectral&&) noexcept;
  PseudoSpectral& operator=(PseudoSpectral&&) noexcept;

  int grid_size() const;
  const LatticePtr& lattice() const;

  // Grid values at x = 2 pi (a, b) / M stored at index a * M + b.
  std::vector<double> to_grid(const SpectralVorticity& w);
  // Projection of grid values onto the truncated mean-zero space.
  SpectralVorticity from_grid(std::span<const double> values);

  // B(K u, w) = (K u) . grad w with 2/3-rule dealiasing.
  SpectralVorticity advection(const SpectralVorticity& u, const SpectralVorticity& w);
  SpectralVorticity advection(const SpectralVorticity& w) { return advection(w, w); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Smallest 2^a 3^b 5^c >= 3N + 1; quadratic products of modes |k|_inf <= N
// then alias only outside the truncation.
int dealiased_grid_size(int truncation);
int fft_friendly_size(int at_least);

// B(K w, w) via the dealiased transform path.
SpectralVorticity nonlinear_term(const SpectralVorticity& w);

// B(K u, w) by direct convolution over the full lattice; exact on the truncation.
SpectralVorticity dense_advection(const SpectralVorticity& u, const SpectralVorticity& w);

// -B(K u, w) - B(K w, u) on the dense path.
SpectralVorticity symmetrized_bracket(const SpectralVorticity& u, const SpectralVorticity& w);

// L^4 norm squared, computed by exact trapezoidal quadrature on a grid > 4N.
double l4_norm_sq(const SpectralVorticity& w);

// |w|_{L4}^2 / (|w|_1 |w|).
double ladyzhenskaya_ratio(const SpectralVorticity& w);

// Max of the Ladyzhenskaya ratio over `samples` random fields drawn from a
// nested seed stream; a lower bound for c0.
double estimate_ladyzhenskaya(const LatticePtr& lattice, std::size_t samples, std::uint64_t seed);

// Binary snapshot: "QPNS", u32 version, u32 N, then little-endian f64 (re, im)
// pairs in canonical half-plane order.
inline constexpr std::uint32_t kSnapshotVersion = 1;
void write_snapshot(std::ostream& out, const SpectralVorticity& w);
SpectralVorticity read_snapshot(std::istream& in);
void save_snapshot(const std::string& path, const SpectralVorticity& w);
SpectralVorticity load_snapshot(const std::string& path);

}  // namespace qpns
