#include "qpns/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>

#include "qpns/error.hpp"
#include "qpns/rng.hpp"

namespace qpns {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kArea = kTwoPi * kTwoPi;

int wrap(int k, int m) { return ((k % m) + m) % m; }

}  // namespace

// ---------------------------------------------------------------- lattice

ModeLattice::ModeLattice(int truncation) : truncation_(truncation) {
  const int n = truncation;
  const int side = 2 * n + 1;
  table_.assign(static_cast<std::size_t>(side) * side, -1);
  for (int k2 = 0; k2 <= n; ++k2) {
    for (int k1 = -n; k1 <= n; ++k1) {
      if (!in_half_plane(k1, k2)) continue;
      table_[static_cast<std::size_t>(k1 + n) * side + (k2 + n)] = static_cast<std::int32_t>(modes_.size());
      modes_.push_back({k1, k2});
      wavenumber_sq_.push_back(static_cast<double>(k1 * k1 + k2 * k2));
    }
  }
}

LatticePtr ModeLattice::make(int truncation) {
  if (truncation < 1) throw InvalidArgument("truncation radius must be >= 1");
  static std::mutex mutex;
  static std::map<int, LatticePtr> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[truncation];
  if (!slot) slot = LatticePtr(new ModeLattice(truncation));
  return slot;
}

std::optional<ModeLattice::Lookup> ModeLattice::find(int k1, int k2) const {
  const int n = truncation_;
  if (std::abs(k1) > n || std::abs(k2) > n || (k1 == 0 && k2 == 0)) return std::nullopt;
  const bool conj = !in_half_plane(k1, k2);
  if (conj) {
    k1 = -k1;
    k2 = -k2;
  }
  const auto idx = table_[static_cast<std::size_t>(k1 + n) * (2 * n + 1) + (k2 + n)];
  return Lookup{static_cast<std::size_t>(idx), conj};
}

// --------------------------------------------------------------- vorticity

SpectralVorticity::SpectralVorticity(LatticePtr lattice) : lattice_(std::move(lattice)) {
  if (!lattice_) throw InvalidArgument("null lattice");
  coeffs_.assign(lattice_->size(), Complex{});
}

SpectralVorticity::SpectralVorticity(LatticePtr lattice, std::vector<Complex> coeffs)
    : lattice_(std::move(lattice)), coeffs_(std::move(coeffs)) {
  if (!lattice_) throw InvalidArgument("null lattice");
  if (coeffs_.size() != lattice_->size()) throw InvalidArgument("coefficient count does not match lattice");
}

SpectralVorticity SpectralVorticity::cos_mode(LatticePtr lattice, int k1, int k2, double amp) {
  SpectralVorticity w(std::move(lattice));
  const auto hit = w.lattice_->find(k1, k2);
  if (!hit) throw InvalidArgument("mode outside truncation or zero");
  w.coeffs_[hit->index] += Complex(0.5 * amp, 0.0);
  return w;
}

SpectralVorticity SpectralVorticity::sin_mode(LatticePtr lattice, int k1, int k2, double amp) {
  SpectralVorticity w(std::move(lattice));
  const auto hit = w.lattice_->find(k1, k2);
  if (!hit) throw InvalidArgument("mode outside truncation or zero");
  // sin(k.x) = (e^{ik.x} - e^{-ik.x}) / 2i.
  w.coeffs_[hit->index] += Complex(0.0, hit->conjugate ? 0.5 * amp : -0.5 * amp);
  return w;
}

bool SpectralVorticity::same_lattice(const SpectralVorticity& other) const {
  return lattice_ && other.lattice_ && lattice_->truncation() == other.lattice_->truncation();
}

Complex SpectralVorticity::at(int k1, int k2) const {
  const auto hit = lattice_->find(k1, k2);
  if (!hit) return {};
  const Complex c = coeffs_[hit->index];
  return hit->conjugate ? std::conj(c) : c;
}

void SpectralVorticity::set(int k1, int k2, Complex value) {
  const auto hit = lattice_->find(k1, k2);
  if (!hit) throw InvalidArgument("mode outside truncation or zero");
  coeffs_[hit->index] = hit->conjugate ? std::conj(value) : value;
}

double real_coordinate_scale() { return kTwoPi * std::numbers::sqrt2; }

std::vector<double> SpectralVorticity::to_real() const {
  const double s = real_coordinate_scale();
  std::vector<double> out(2 * coeffs_.size());
  for (std::size_t i = 0; i < coeffs_.size(); ++i) {
    out[2 * i] = s * coeffs_[i].real();
    out[2 * i + 1] = s * coeffs_[i].imag();
  }
  return out;
}

SpectralVorticity SpectralVorticity::from_real(LatticePtr lattice, std::span<const double> coords) {
  SpectralVorticity w(std::move(lattice));
  if (coords.size() != 2 * w.size()) throw InvalidArgument("real coordinate count does not match lattice");
  const double s = 1.0 / real_coordinate_scale();
  for (std::size_t i = 0; i < w.size(); ++i) w.coeffs_[i] = Complex(s * coords[2 * i], s * coords[2 * i + 1]);
  return w;
}

SpectralVorticity& SpectralVorticity::operator+=(const SpectralVorticity& rhs) {
  axpy(1.0, rhs);
  return *this;
}

SpectralVorticity& SpectralVorticity::operator-=(const SpectralVorticity& rhs) {
  axpy(-1.0, rhs);
  return *this;
}

SpectralVorticity& SpectralVorticity::operator*=(double a) {
  for (auto& c : coeffs_) c *= a;
  return *this;
}

void SpectralVorticity::axpy(double a, const SpectralVorticity& x) {
  if (!same_lattice(x)) throw InvalidArgument("lattice mismatch");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += a * x.coeffs_[i];
}

double inner(const SpectralVorticity& a, const SpectralVorticity& b) {
  if (!a.same_lattice(b)) throw InvalidArgument("lattice mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] * std::conj(b[i])).real();
  return 2.0 * kArea * s;
}

double norm_sq(const SpectralVorticity& w) {
  double s = 0.0;
  for (const auto& c : w.coeffs()) s += std::norm(c);
  return 2.0 * kArea * s;
}

double norm(const SpectralVorticity& w) { return std::sqrt(norm_sq(w)); }

double sobolev_norm(const SpectralVorticity& w, SobolevIndex s) {
  double acc = 0.0;
  const auto& lat = *w.lattice();
  for (std::size_t i = 0; i < w.size(); ++i) acc += std::pow(lat.wavenumber_sq(i), s.s) * std::norm(w[i]);
  return std::sqrt(2.0 * kArea * acc);
}

// ---------------------------------------------------------------- velocity

VelocityField biot_savart(const SpectralVorticity& w) {
  const auto& lat = *w.lattice();
  VelocityField u{w.lattice(), std::vector<Complex>(w.size()), std::vector<Complex>(w.size())};
  const Complex i1(0.0, 1.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto [k1, k2] = lat.mode(i);
    const Complex f = i1 * w[i] / lat.wavenumber_sq(i);
    u.u1[i] = static_cast<double>(k2) * f;
    u.u2[i] = static_cast<double>(-k1) * f;
  }
  return u;
}

double VelocityField::divergence_residual() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < u1.size(); ++i) {
    const auto [k1, k2] = lattice->mode(i);
    const double mag = std::sqrt(std::norm(u1[i]) + std::norm(u2[i]));
    if (mag == 0.0) continue;
    worst = std::max(worst, std::abs(static_cast<double>(k1) * u1[i] + static_cast<double>(k2) * u2[i]) / mag);
  }
  return worst;
}

SpectralVorticity VelocityField::curl() const {
  SpectralVorticity w(lattice);
  const Complex i1(0.0, 1.0);
  for (std::size_t i = 0; i < u1.size(); ++i) {
    const auto [k1, k2] = lattice->mode(i);
    w[i] = i1 * (static_cast<double>(k1) * u2[i] - static_cast<double>(k2) * u1[i]);
  }
  return w;
}

// ---------------------------------------------------------- FFT workspace

int fft_friendly_size(int at_least) {
  for (int m = std::max(at_least, 1);; ++m) {
    int r = m;
    for (int p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

int dealiased_grid_size(int truncation) { return fft_friendly_size(3 * truncation + 1); }

namespace {

struct PlanPair {
  fftw_plan backward;  // complex half spectrum -> real grid
  fftw_plan forward;   // real grid -> complex half spectrum
};

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

// Plans are created once per grid size and executed on caller buffers via the
// new-array interface, which is thread-safe.
const PlanPair& plans_for(int m) {
  static std::map<int, PlanPair> cache;
  std::lock_guard lock(fftw_mutex());
  auto it = cache.find(m);
  if (it != cache.end()) return it->second;
  const std::size_t half = static_cast<std::size_t>(m / 2 + 1);
  auto* spec = fftw_alloc_complex(static_cast<std::size_t>(m) * half);
  auto* real = fftw_alloc_real(static_cast<std::size_t>(m) * m);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  PlanPair p{fftw_plan_dft_c2r_2d(m, m, spec, real, flags), fftw_plan_dft_r2c_2d(m, m, real, spec, flags)};
  fftw_free(spec);
  fftw_free(real);
  if (!p.backward || !p.forward) throw Error("FFT plan creation failed");
  return cache.emplace(m, p).first->second;
}

}  // namespace

struct PseudoSpectral::Impl {
  LatticePtr lattice;
  int m;
  std::size_t half;
  const PlanPair* plans;
  std::array<std::vector<Complex>, 4> spec;
  std::array<std::vector<double>, 4> real;
  std::vector<double> product;
  std::vector<Complex> out;

  Impl(LatticePtr lat, int grid) : lattice(std::move(lat)), m(grid), half(static_cast<std::size_t>(grid / 2 + 1)) {
    plans = &plans_for(m);
    for (auto& s : spec) s.assign(static_cast<std::size_t>(m) * half, Complex{});
    for (auto& r : real) r.assign(static_cast<std::size_t>(m) * m, 0.0);
    product.assign(static_cast<std::size_t>(m) * m, 0.0);
    out.assign(static_cast<std::size_t>(m) * half, Complex{});
  }

  // Writes coefficient values(i) of every stored mode, plus the conjugate
  // partner on the k2 = 0 line, into a zeroed half spectrum.
  template <class F>
  void scatter(std::vector<Complex>& dst, F&& values) {
    std::fill(dst.begin(), dst.end(), Complex{});
    const auto modes = lattice->modes();
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const auto [k1, k2] = modes[i];
      const Complex c = values(i);
      dst[static_cast<std::size_t>(wrap(k1, m)) * half + k2] = c;
      if (k2 == 0) dst[static_cast<std::size_t>(wrap(-k1, m)) * half] = std::conj(c);
    }
  }

  void backward(std::vector<Complex>& src, std::vector<double>& dst) {
    fftw_execute_dft_c2r(plans->backward, reinterpret_cast<fftw_complex*>(src.data()), dst.data());
  }

  SpectralVorticity gather_forward(std::vector<double>& grid) {
    fftw_execute_dft_r2c(plans->forward, grid.data(), reinterpret_cast<fftw_complex*>(out.data()));
    SpectralVorticity w(lattice);
    const double scale = 1.0 / (static_cast<double>(m) * m);
    const auto modes = lattice->modes();
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const auto [k1, k2] = modes[i];
      w[i] = scale * out[static_cast<std::size_t>(wrap(k1, m)) * half + k2];
    }
    return w;
  }
};

PseudoSpectral::PseudoSpectral(LatticePtr lattice, int grid_size) {
  if (!lattice) throw InvalidArgument("null lattice");
  const int minimum = 2 * lattice->truncation() + 1;
  if (grid_size == 0) grid_size = dealiased_grid_size(lattice->truncation());
  if (grid_size < minimum) throw InvalidArgument("grid too small to represent the truncation");
  impl_ = std::make_unique<Impl>(std::move(lattice), grid_size);
}

PseudoSpectral::~PseudoSpectral() = default;
PseudoSpectral::PseudoSpectral(PseudoSpectral&&) noexcept = default;
PseudoSpectral& PseudoSpectral::operator=(PseudoSpectral&&) noexcept = default;

int PseudoSpectral::grid_size() const { return impl_->m; }
const LatticePtr& PseudoSpectral::lattice() const { return impl_->lattice; }

std::vector<double> PseudoSpectral::to_grid(const SpectralVorticity& w) {
  auto& s = *impl_;
  if (w.lattice()->truncation() != s.lattice->truncation()) throw InvalidArgument("lattice mismatch");
  s.scatter(s.spec[0], [&](std::size_t i) { return w[i]; });
  std::vector<double> grid(static_cast<std::size_t>(s.m) * s.m);
  s.backward(s.spec[0], grid);
  return grid;
}

SpectralVorticity PseudoSpectral::from_grid(std::span<const double> values) {
  auto& s = *impl_;
  if (values.size() != s.product.size()) throw InvalidArgument("grid size mismatch");
  std::copy(values.begin(), values.end(), s.product.begin());
  return s.gather_forward(s.product);
}

SpectralVorticity PseudoSpectral::advection(const SpectralVorticity& u, const SpectralVorticity& w) {
  auto& s = *impl_;
  if (!u.same_lattice(w) || u.lattice()->truncation() != s.lattice->truncation())
    throw InvalidArgument("lattice mismatch");
  const auto& lat = *s.lattice;
  const Complex i1(0.0, 1.0);
  s.scatter(s.spec[0], [&](std::size_t i) { return i1 * static_cast<double>(lat.mode(i).k2) * u[i] / lat.wavenumber_sq(i); });
  s.scatter(s.spec[1], [&](std::size_t i) { return -i1 * static_cast<double>(lat.mode(i).k1) * u[i] / lat.wavenumber_sq(i); });
  s.scatter(s.spec[2], [&](std::size_t i) { return i1 * static_cast<double>(lat.mode(i).k1) * w[i]; });
  s.scatter(s.spec[3], [&](std::size_t i) { return i1 * static_cast<double>(lat.mode(i).k2) * w[i]; });
  for (int j = 0; j < 4; ++j) s.backward(s.spec[j], s.real[j]);
  for (std::size_t p = 0; p < s.product.size(); ++p)
    s.product[p] = s.real[0][p] * s.real[2][p] + s.real[1][p] * s.real[3][p];
  return s.gather_forward(s.product);
}

SpectralVorticity nonlinear_term(const SpectralVorticity& w) {
  PseudoSpectral ps(w.lattice());
  return ps.advection(w);
}

// ------------------------------------------------------------ dense path

SpectralVorticity dense_advection(const SpectralVorticity& u, const SpectralVorticity& w) {
  if (!u.same_lattice(w)) throw InvalidArgument("lattice mismatch");
  const auto& lat = *u.lattice();
  const int n = lat.truncation();
  const int side = 2 * n + 1;
  const auto full = [&](int k1, int k2) { return static_cast<std::size_t>(k1 + n) * side + (k2 + n); };
  std::vector<Complex> v1(side * side), v2(side * side), wf(side * side);
  const Complex i1(0.0, 1.0);
  for (int k1 = -n; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      if (k1 == 0 && k2 == 0) continue;
      const Complex uk = u.at(k1, k2);
      const double ksq = static_cast<double>(k1 * k1 + k2 * k2);
      v1[full(k1, k2)] = i1 * static_cast<double>(k2) * uk / ksq;
      v2[full(k1, k2)] = -i1 * static_cast<double>(k1) * uk / ksq;
      wf[full(k1, k2)] = w.at(k1, k2);
    }
  }
  SpectralVorticity out(u.lattice());
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const auto [k1, k2] = lat.mode(i);
    Complex acc{};
    for (int p1 = std::max(-n, k1 - n); p1 <= std::min(n, k1 + n); ++p1) {
      for (int p2 = std::max(-n, k2 - n); p2 <= std::min(n, k2 + n); ++p2) {
        const int q1 = k1 - p1;
        const int q2 = k2 - p2;
        const Complex wq = wf[full(q1, q2)];
        if (wq == Complex{}) continue;
        const std::size_t pi = full(p1, p2);
        acc += (v1[pi] * static_cast<double>(q1) + v2[pi] * static_cast<double>(q2)) * i1 * wq;
      }
    }
    out[i] = acc;
  }
  return out;
}

SpectralVorticity symmetrized_bracket(const SpectralVorticity& u, const SpectralVorticity& w) {
  if (!u.same_lattice(w)) throw InvalidArgument("symmetrized_bracket: lattice mismatch");
  SpectralVorticity b = dense_advection(u, w);
  b += dense_advection(w, u);
  b *= -1.0;
  return b;
}

// -------------------------------------------------------- Ladyzhenskaya

double l4_norm_sq(const SpectralVorticity& w) {
  // w^4 has modes up to 4N, so any grid > 4N integrates it exactly.
  PseudoSpectral ps(w.lattice(), fft_friendly_size(4 * w.lattice()->truncation() + 1));
  const auto grid = ps.to_grid(w);
  double s = 0.0;
  for (double v : grid) s += v * v * v * v;
  const double m = ps.grid_size();
  return std::sqrt(kArea * s / (m * m));
}

double ladyzhenskaya_ratio(const SpectralVorticity& w) {
  const double denom = sobolev_norm(w, {1.0}) * norm(w);
  if (denom == 0.0) return 0.0;
  return l4_norm_sq(w) / denom;
}

double estimate_ladyzhenskaya(const LatticePtr& lattice, std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw InvalidArgument("estimate_ladyzhenskaya needs samples >= 1");
  const CounterRng rng(seed);
  PseudoSpectral ps(lattice, fft_friendly_size(4 * lattice->truncation() + 1));
  const double m = ps.grid_size();
  double best = 0.0;
  for (std::size_t j = 0; j < samples; ++j) {
    // Sample j depends only on (seed, j): spectral slope drawn in [0, 3],
    // coefficients Gaussian with standard deviation |k|^-slope.
    const double slope = 3.0 * rng.uniform(StreamTag::kRandomField, j, 0xFFFFFFFFull, 0);
    SpectralVorticity w(lattice);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double sd = std::pow(lattice->wavenumber_sq(i), -0.5 * slope);
      w[i] = sd * Complex(rng.normal(StreamTag::kRandomField, j, i, 0), rng.normal(StreamTag::kRandomField, j, i, 1));
    }
    const auto grid = ps.to_grid(w);
    double s = 0.0;
    for (double v : grid) s += v * v * v * v;
    const double l4sq = std::sqrt(kArea * s / (m * m));
    const double denom = sobolev_norm(w, {1.0}) * norm(w);
    if (denom > 0.0) best = std::max(best, l4sq / denom);
  }
  return best;
}

// -------------------------------------------------------------- snapshots

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
  out.write(b, 4);
}

void put_f64(std::ostream& out, double x) {
  const auto v = std::bit_cast<std::uint64_t>(x);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("snapshot truncated");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("snapshot truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void write_snapshot(std::ostream& out, const SpectralVorticity& w) {
  out.write("QPNS", 4);
  put_u32(out, kSnapshotVersion);
  put_u32(out, static_cast<std::uint32_t>(w.lattice()->truncation()));
  for (const auto& c : w.coeffs()) {
    put_f64(out, c.real());
    put_f64(out, c.imag());
  }
  if (!out) throw Error("snapshot write failed");
}

SpectralVorticity read_snapshot(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "QPNS", 4) != 0) throw Error("not a QPNS snapshot");
  const auto version = get_u32(in);
  if (version != kSnapshotVersion) throw Error("unsupported snapshot version " + std::to_string(version));
  const auto n = get_u32(in);
  if (n < 1 || n > 4096) throw Error("snapshot truncation out of range");
  SpectralVorticity w(ModeLattice::make(static_cast<int>(n)));
  for (auto& c : w.coeffs()) {
    const double re = get_f64(in);
    const double im = get_f64(in);
    c = Complex(re, im);
  }
  return w;
}

void save_snapshot(const std::string& path, const SpectralVorticity& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path);
  write_snapshot(out, w);
}

SpectralVorticity load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_snapshot(in);
}

}  // namespace qpns
