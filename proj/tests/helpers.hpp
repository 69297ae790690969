#pragma once

#include <cmath>
#include <cstdint>

#include "qpns/rng.hpp"
#include "qpns/spectral.hpp"

namespace testing_support {

// Gaussian coefficients on modes with |k|_inf <= radius (0 means the full lattice).
inline qpns::SpectralVorticity random_field(const qpns::LatticePtr& lat, std::uint64_t seed, std::uint64_t id,
                                            int radius = 0) {
  const qpns::CounterRng rng(seed);
  qpns::SpectralVorticity w(lat);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto [k1, k2] = lat->mode(i);
    if (radius > 0 && (std::abs(k1) > radius || std::abs(k2) > radius)) continue;
    w[i] = qpns::Complex(rng.normal(qpns::StreamTag::kPerturbation, id, i, 0),
                         rng.normal(qpns::StreamTag::kPerturbation, id, i, 1));
  }
  return w;
}

inline double max_abs_diff(const qpns::SpectralVorticity& a, const qpns::SpectralVorticity& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const qpns::SpectralVorticity& a) {
  double m = 0.0;
  for (const auto& c : a.coeffs()) m = std::max(m, std::abs(c));
  return m;
}

}  // namespace testing_support
