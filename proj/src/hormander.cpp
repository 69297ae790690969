#include "qpns/hormander.hpp"

#include <algorithm>
#include <cmath>

#include "qpns/error.hpp"

namespace qpns {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

class Orthonormalizer {
 public:
  Orthonormalizer(std::size_t dim, double tol) : dim_(dim), tol_(tol) {}

  // Returns true when v enlarges the span.
  bool add(std::vector<double> v) {
    const double nv = std::sqrt(dot(v, v));
    scale_ = std::max(scale_, nv);
    if (nv == 0.0 || basis_.size() == dim_) return false;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis_) {
        const double c = dot(q, v);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * q[i];
      }
    }
    const double r = std::sqrt(dot(v, v));
    if (r <= tol_ * scale_) return false;
    for (auto& x : v) x /= r;
    basis_.push_back(std::move(v));
    return true;
  }

  std::vector<std::vector<double>>& basis() { return basis_; }

 private:
  std::size_t dim_;
  double tol_;
  double scale_ = 0.0;
  std::vector<std::vector<double>> basis_;
};

}  // namespace

BracketBasis bracket_closure(const std::vector<SpectralVorticity>& generators, const LatticePtr& lattice, int max_gen,
                             double tol) {
  if (generators.empty()) throw InvalidArgument("bracket_closure needs a nonempty generator set");
  if (max_gen < 1) throw InvalidArgument("bracket_closure needs max_gen >= 1");
  for (const auto& g : generators)
    if (g.empty() || g.lattice()->truncation() != lattice->truncation())
      throw InvalidArgument("generator lattice mismatch");
  BracketBasis out;
  out.lattice = lattice;
  out.dim = lattice->real_dimension();
  Orthonormalizer ortho(out.dim, tol);
  std::vector<SpectralVorticity> frontier;
  for (const auto& g : generators)
    if (ortho.add(g.to_real())) frontier.push_back(SpectralVorticity::from_real(lattice, ortho.basis().back()));
  out.generations = 1;
  out.rank_history.push_back(ortho.basis().size());
  while (ortho.basis().size() < out.dim && out.generations < max_gen) {
    std::vector<SpectralVorticity> next;
    for (const auto& h : frontier)
      for (const auto& g : generators)
        if (ortho.add(symmetrized_bracket(h, g).to_real()))
          next.push_back(SpectralVorticity::from_real(lattice, ortho.basis().back()));
    ++out.generations;
    out.rank_history.push_back(ortho.basis().size());
    if (next.empty()) {
      out.stalled = true;
      break;
    }
    frontier = std::move(next);
  }
  out.basis = std::move(ortho.basis());
  out.saturated = out.basis.size() == out.dim;
  return out;
}

bool spans_truncation(const BracketBasis& basis, const LatticePtr& lattice) {
  return basis.lattice && basis.lattice->truncation() == lattice->truncation() &&
         basis.rank() == lattice->real_dimension();
}

}  // namespace qpns
