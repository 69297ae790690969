#pragma once

// Bracket sets A_1 = {g_l}, A_{k+1} = A_k U {Btilde(h, g_l) : h in A_k} and the
// truncated spanning test. Rank is certified on the N-truncation only.

#include <cstddef>
#include <vector>

#include "qpns/spectral.hpp"

namespace qpns {

struct BracketBasis {
  LatticePtr lattice;
  int generations = 0;                    // last generation built
  std::vector<std::size_t> rank_history;  // rank of span(A_k), k = 1..generations
  std::vector<std::vector<double>> basis; // orthonormal, real H coordinates
  std::size_t dim = 0;                    // 2 x half-plane count
  bool saturated = false;                 // rank == dim
  bool stalled = false;                   // a generation added nothing: fixed point reached

  std::size_t rank() const { return basis.size(); }
};

// Orthonormal basis maintained by two-pass Gram-Schmidt; a candidate is kept
// when its residual exceeds tol times the largest candidate norm seen so far.
// Since Btilde is bilinear, only basis vectors added in the previous
// generation are bracketed with the generators.
BracketBasis bracket_closure(const std::vector<SpectralVorticity>& generators, const LatticePtr& lattice, int max_gen,
                             double tol = 1e-10);

bool spans_truncation(const BracketBasis& basis, const LatticePtr& lattice);

}  // namespace qpns
