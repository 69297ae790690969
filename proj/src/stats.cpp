#include "qpns/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "qpns/error.hpp"
#include "qpns/parallel.hpp"
#include "qpns/rng.hpp"

namespace qpns {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kZ95 = 1.959963984540054;

void check_mode(int k1, int k2) {
  if (k1 == 0 && k2 == 0) throw InvalidArgument("observable mode must be nonzero");
}

std::vector<double> normalized_weights(const EmpiricalMeasure& mu, std::size_t limit) {
  const std::size_t n = std::min(limit == 0 ? mu.size() : limit, mu.size());
  std::vector<double> w(mu.weights.begin(), mu.weights.begin() + static_cast<std::ptrdiff_t>(n));
  const double total = pairwise_sum(w);
  if (!(total > 0.0)) throw InvalidArgument("measure has no mass");
  for (auto& x : w) x /= total;
  return w;
}

// Weighted mean sum_i w_i z_i (w normalized) and its standard error.
MeanSe weighted_mean(const std::vector<double>& z, const std::vector<double>& w) {
  MeanSe r;
  r.n = z.size();
  if (z.empty()) return r;
  std::vector<double> terms(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) terms[i] = w[i] * z[i];
  r.mean = pairwise_sum(terms);
  if (z.size() < 2) return r;
  for (std::size_t i = 0; i < z.size(); ++i) terms[i] = w[i] * w[i] * (z[i] - r.mean) * (z[i] - r.mean);
  const double n = static_cast<double>(z.size());
  r.variance = pairwise_sum(terms) * n;
  r.se = std::sqrt(pairwise_sum(terms) * n / (n - 1.0));
  return r;
}

// Equal-weight average of per-grid means with independent errors.
MeanSe grid_average(const std::vector<MeanSe>& cells) {
  MeanSe r;
  r.n = cells.size();
  if (cells.empty()) return r;
  std::vector<double> m(cells.size()), v(cells.size());
  for (std::size_t g = 0; g < cells.size(); ++g) {
    m[g] = cells[g].mean;
    v[g] = cells[g].se * cells[g].se;
  }
  const double G = static_cast<double>(cells.size());
  r.mean = pairwise_sum(m) / G;
  r.se = std::sqrt(pairwise_sum(v)) / G;
  return r;
}

std::vector<std::int64_t> mark_indices(const Model& model, double s, const std::vector<double>& marks) {
  model.step_index(s);
  std::vector<std::int64_t> idx;
  idx.reserve(marks.size());
  for (double m : marks) {
    if (!(m >= 0.0)) throw InvalidArgument("elapsed times must be nonnegative");
    const std::int64_t n = model.step_index(m);
    if (!idx.empty() && n < idx.back()) throw InvalidArgument("elapsed times must be nondecreasing");
    idx.push_back(n);
  }
  return idx;
}

std::vector<double> check_increasing(const std::vector<double>& xs, const char* what) {
  if (xs.empty()) throw InvalidArgument(std::string(what) + " must not be empty");
  for (std::size_t k = 1; k < xs.size(); ++k)
    if (!(xs[k] > xs[k - 1])) throw InvalidArgument(std::string(what) + " must be increasing");
  return xs;
}

WienerPath path_for(const Model& model, std::uint64_t id) { return WienerPath(model.noise().seed, id); }

std::function<double(const SpectralVorticity&, const TorusPoint&)> as_function(const CenteredObservable& phi) {
  return [&phi](const SpectralVorticity& w, const TorusPoint& h) { return phi(w, h); };
}

double log_or_minus_inf(double x) { return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity(); }

BoundRow bound_row(double t, const MeanSe& m, double log_rhs, double slack) {
  BoundRow row;
  row.t = t;
  row.lhs = m.mean;
  row.se = m.se;
  row.log_rhs = log_rhs;
  const double low = m.mean - slack * m.se;
  row.pass = low <= 0.0 || std::log(low) <= log_rhs;
  return row;
}

// Tensor grid with `per_axis` points per axis on the n-torus.
std::vector<TorusPoint> torus_grid(std::size_t dim, std::size_t per_axis) {
  double total = std::pow(static_cast<double>(per_axis), static_cast<double>(dim));
  if (total > 16777216.0) throw InvalidArgument("torus grid too large");
  std::vector<TorusPoint> pts;
  const auto count = static_cast<std::size_t>(total);
  pts.reserve(count);
  std::vector<double> h(dim);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t r = idx;
    for (std::size_t d = 0; d < dim; ++d) {
      h[d] = kTwoPi * static_cast<double>(r % per_axis) / static_cast<double>(per_axis);
      r /= per_axis;
    }
    pts.emplace_back(h);
  }
  return pts;
}

}  // namespace

// --------------------------------------------------------------- observables

Observable Observable::constant(double c) {
  Observable o;
  o.kind = ObservableKind::kConstant;
  o.parameter = c;
  o.norm_bound = std::abs(c);
  return o;
}

Observable Observable::energy(double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("energy observable needs eta > 0");
  Observable o;
  o.kind = ObservableKind::kEnergy;
  o.eta = eta;
  o.norm_bound = 1.0 / (std::numbers::e * eta);
  return o;
}

Observable Observable::mode_re(int k1, int k2, double eta) {
  check_mode(k1, k2);
  if (!(eta > 0.0)) throw InvalidArgument("mode observable needs eta > 0");
  Observable o;
  o.kind = ObservableKind::kModeRe;
  o.k1 = k1;
  o.k2 = k2;
  o.eta = eta;
  o.norm_bound = 1.0 / (real_coordinate_scale() * std::sqrt(2.0 * std::numbers::e * eta));
  return o;
}

Observable Observable::mode_im(int k1, int k2, double eta) {
  Observable o = mode_re(k1, k2, eta);
  o.kind = ObservableKind::kModeIm;
  return o;
}

Observable Observable::tanh_mode(int k1, int k2, double scale) {
  check_mode(k1, k2);
  if (!(scale > 0.0)) throw InvalidArgument("tanh observable needs a positive scale");
  Observable o;
  o.kind = ObservableKind::kTanhMode;
  o.k1 = k1;
  o.k2 = k2;
  o.parameter = scale;
  o.norm_bound = 1.0;
  return o;
}

Observable Observable::exp_weighted(double weight) {
  if (!(weight > 0.0)) throw InvalidArgument("exponential observable needs a positive weight");
  Observable o;
  o.kind = ObservableKind::kExpWeighted;
  o.parameter = weight;
  o.eta = weight;
  o.norm_bound = 1.0;
  return o;
}

double Observable::operator()(const SpectralVorticity& w) const {
  switch (kind) {
    case ObservableKind::kConstant:
      return parameter;
    case ObservableKind::kEnergy:
      return norm_sq(w);
    case ObservableKind::kModeRe:
      return w.at(k1, k2).real();
    case ObservableKind::kModeIm:
      return w.at(k1, k2).imag();
    case ObservableKind::kTanhMode:
      return std::tanh(w.at(k1, k2).real() / parameter);
    case ObservableKind::kExpWeighted:
      return std::exp(parameter * norm_sq(w));
  }
  return 0.0;
}

std::string Observable::name() const {
  std::ostringstream os;
  switch (kind) {
    case ObservableKind::kConstant:
      os << "constant(" << format_number(parameter) << ")";
      break;
    case ObservableKind::kEnergy:
      os << "energy";
      break;
    case ObservableKind::kModeRe:
      os << "mode_re(" << k1 << "," << k2 << ")";
      break;
    case ObservableKind::kModeIm:
      os << "mode_im(" << k1 << "," << k2 << ")";
      break;
    case ObservableKind::kTanhMode:
      os << "tanh_mode(" << k1 << "," << k2 << "," << format_number(parameter) << ")";
      break;
    case ObservableKind::kExpWeighted:
      os << "exp_weighted(" << format_number(parameter) << ")";
      break;
  }
  return os.str();
}

Observable parse_observable(const std::string& text) {
  std::string s;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch))) s.push_back(ch);
  std::string head = s;
  std::vector<double> args;
  if (const auto open = s.find('('); open != std::string::npos) {
    if (s.back() != ')') throw InvalidArgument("malformed observable '" + text + "'");
    head = s.substr(0, open);
    std::stringstream inner(s.substr(open + 1, s.size() - open - 2));
    std::string item;
    while (std::getline(inner, item, ',')) {
      try {
        std::size_t used = 0;
        args.push_back(std::stod(item, &used));
        if (used != item.size()) throw InvalidArgument("");
      } catch (const std::exception&) {
        throw InvalidArgument("malformed observable argument in '" + text + "'");
      }
    }
  }
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi) throw InvalidArgument("wrong argument count in '" + text + "'");
  };
  auto integer = [&](double x) {
    if (x != std::round(x)) throw InvalidArgument("mode indices must be integers in '" + text + "'");
    return static_cast<int>(x);
  };
  if (head == "energy") {
    need(0, 1);
    return args.empty() ? Observable::energy() : Observable::energy(args[0]);
  }
  if (head == "mode_re" || head == "mode_im") {
    need(2, 3);
    const double eta = args.size() == 3 ? args[2] : 0.01;
    return head == "mode_re" ? Observable::mode_re(integer(args[0]), integer(args[1]), eta)
                             : Observable::mode_im(integer(args[0]), integer(args[1]), eta);
  }
  if (head == "tanh_mode") {
    need(3, 3);
    return Observable::tanh_mode(integer(args[0]), integer(args[1]), args[2]);
  }
  if (head == "exp_weighted") {
    need(1, 1);
    return Observable::exp_weighted(args[0]);
  }
  if (head == "constant") {
    need(1, 1);
    return Observable::constant(args[0]);
  }
  throw InvalidArgument("unknown observable '" + text + "'");
}

// --------------------------------------------------------------- measure path

std::size_t MeasurePath::nearest(const TorusPoint& h) const {
  if (h.dim() != dim) throw InvalidArgument("torus point dimension does not match the measure path");
  std::size_t index = 0;
  std::size_t stride = 1;
  const double r = static_cast<double>(resolution);
  for (std::size_t d = 0; d < dim; ++d) {
    auto i = static_cast<std::size_t>(std::llround(h[d] * r / kTwoPi)) % resolution;
    index += i * stride;
    stride *= resolution;
  }
  return index;
}

TorusPoint MeasurePath::grid_point(std::size_t index) const {
  std::vector<double> h(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    h[d] = kTwoPi * static_cast<double>(index % resolution) / static_cast<double>(resolution);
    index /= resolution;
  }
  return TorusPoint(std::move(h));
}

void MeasurePath::validate() const {
  if (resolution < 1 || dim < 1) throw InvalidArgument("measure path needs a dimension and a resolution");
  std::size_t expected = 1;
  for (std::size_t d = 0; d < dim; ++d) expected *= resolution;
  if (measures.size() != expected) throw InvalidArgument("measure path does not cover the torus grid");
  const ModeLattice* lat = nullptr;
  for (const auto& mu : measures) {
    mu.validate();
    for (const auto& p : mu.particles) {
      if (!lat) lat = p.lattice().get();
      if (p.lattice().get() != lat) throw InvalidArgument("measure path mixes lattices");
    }
  }
}

MeasurePath build_measure_path(const Model& model, std::size_t resolution, const InvariantOptions& opt) {
  if (resolution < 1) throw InvalidArgument("measure path resolution must be >= 1");
  MeasurePath path;
  path.dim = model.force().frequency().dim();
  path.resolution = resolution;
  std::size_t count = 1;
  for (std::size_t d = 0; d < path.dim; ++d) count *= resolution;
  path.measures.reserve(count);
  for (std::size_t g = 0; g < count; ++g) {
    InvariantOptions o = opt;
    o.trajectory_base = stream_id(opt.trajectory_base, g);
    path.measures.push_back(estimate_invariant_measure(model, path.grid_point(g), o).measure);
  }
  return path;
}

MeanSe measure_mean(const Observable& phi, const EmpiricalMeasure& mu) {
  mu.validate();
  const auto w = normalized_weights(mu, 0);
  std::vector<double> z(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) z[i] = phi(mu.particles[i]);
  auto r = weighted_mean(z, w);
  if (phi.kind == ObservableKind::kConstant) r = {phi.parameter, 0.0, 0.0, mu.size()};
  return r;
}

double grid_refinement_delta(const Observable& phi, const MeasurePath& coarse, const MeasurePath& fine) {
  if (coarse.dim != fine.dim) throw InvalidArgument("measure paths have different torus dimensions");
  std::vector<double> cm(coarse.size());
  for (std::size_t g = 0; g < coarse.size(); ++g) cm[g] = measure_mean(phi, coarse.measures[g]).mean;
  double worst = 0.0;
  for (std::size_t g = 0; g < fine.size(); ++g)
    worst = std::max(worst, std::abs(measure_mean(phi, fine.measures[g]).mean - cm[coarse.nearest(fine.grid_point(g))]));
  return worst;
}

// --------------------------------------------------------- centered observable

CenteredObservable::CenteredObservable(Observable phi, std::size_t dim, std::size_t resolution,
                                       std::vector<double> means, bool centered)
    : phi_(std::move(phi)), dim_(dim), resolution_(resolution), means_(std::move(means)), centered_(centered) {
  std::size_t expected = 1;
  for (std::size_t d = 0; d < dim_; ++d) expected *= resolution_;
  if (resolution_ < 1 || means_.size() != expected) throw InvalidArgument("centering means do not match the grid");
}

CenteredObservable CenteredObservable::uncentered(Observable phi, std::size_t dim) {
  return CenteredObservable(std::move(phi), dim, 1, {0.0}, false);
}

double CenteredObservable::mean_at(const TorusPoint& h) const {
  if (h.dim() != dim_) throw InvalidArgument("torus point dimension does not match the centering grid");
  std::size_t index = 0;
  std::size_t stride = 1;
  const double r = static_cast<double>(resolution_);
  for (std::size_t d = 0; d < dim_; ++d) {
    index += (static_cast<std::size_t>(std::llround(h[d] * r / kTwoPi)) % resolution_) * stride;
    stride *= resolution_;
  }
  return means_[index];
}

bool CenteredObservable::trivially_zero() const {
  if (phi_.kind != ObservableKind::kConstant) return false;
  if (!centered_) return phi_.parameter == 0.0;
  return std::all_of(means_.begin(), means_.end(), [&](double m) { return m == phi_.parameter; });
}

CenteredObservable center(const Observable& phi, const MeasurePath& gamma) {
  if (gamma.size() == 0) throw InvalidArgument("measure path is empty");
  std::vector<double> means(gamma.size());
  for (std::size_t g = 0; g < gamma.size(); ++g) means[g] = measure_mean(phi, gamma.measures[g]).mean;
  return CenteredObservable(phi, gamma.dim, gamma.resolution, std::move(means), true);
}

// ----------------------------------------------------------------- helpers

std::uint64_t stream_id(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

PathIntegral integrate_along(const Model& model, const SpectralVorticity& w0, const TorusPoint& h, double s,
                             const std::vector<double>& marks, const WienerPath& path,
                             const std::function<double(const SpectralVorticity&, const TorusPoint&)>& f,
                             bool keep_states) {
  const auto idx = mark_indices(model, s, marks);
  const std::int64_t ns = model.step_index(s);
  const auto& alpha = model.force().frequency();
  const double dt = model.dt();
  PathIntegral out;
  out.integrals.reserve(idx.size());
  out.values.reserve(idx.size());
  SpectralVorticity w = w0;
  PseudoSpectral ws(model.lattice());
  double current = f(w, rotate(h, alpha, model.time_of(ns)));
  double acc = 0.0;
  std::size_t next = 0;
  auto record = [&](std::int64_t k) {
    while (next < idx.size() && idx[next] == k) {
      out.integrals.push_back(acc);
      out.values.push_back(current);
      if (keep_states) out.states.push_back(w);
      ++next;
    }
  };
  record(0);
  for (std::int64_t k = 0; next < idx.size(); ++k) {
    model.step(w, ns + k, h, path, ws);
    const double v = f(w, rotate(h, alpha, model.time_of(ns + k + 1)));
    acc += 0.5 * dt * (current + v);
    current = v;
    record(k + 1);
  }
  return out;
}

PowerFit fit_power(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("fit_power: size mismatch");
  PowerFit fit;
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0) || !std::isfinite(y[k])) continue;
    lx.push_back(std::log(x[k]));
    ly.push_back(std::log(y[k]));
  }
  if (lx.size() < 3) {
    fit.note = "fewer than 3 positive points; fit refused";
    return fit;
  }
  const auto lf = linear_fit(lx, ly);
  fit.slope = lf.slope;
  fit.intercept = lf.intercept;
  fit.r2 = lf.r2;
  std::tie(fit.ci_lo, fit.ci_hi) = lf.slope_ci(0.95);
  fit.fitted = true;
  return fit;
}

// ----------------------------------------------------------------- corrector

CorrectorEstimate estimate_corrector(const Model& model, const CenteredObservable& phi, const SpectralVorticity& w,
                                     const TorusPoint& h, const CorrectorOptions& opt, std::uint64_t salt) {
  if (!(opt.t_chi > 0.0)) throw InvalidArgument("corrector horizon must be positive");
  if (opt.paths < 2) throw InvalidArgument("corrector needs at least 2 paths");
  if (opt.curve_points < 2) throw InvalidArgument("corrector needs at least 2 curve points");
  CorrectorEstimate est;
  const std::int64_t steps = model.step_index(opt.t_chi);
  if (phi.trivially_zero()) return est;
  std::vector<double> marks;
  for (std::size_t k = 0; k <= opt.curve_points; ++k) {
    const auto n = static_cast<std::int64_t>(std::llround(static_cast<double>(k) * static_cast<double>(steps) /
                                                           static_cast<double>(opt.curve_points)));
    const double t = model.time_of(n);
    if (marks.empty() || t > marks.back()) marks.push_back(t);
  }
  const std::size_t K = marks.size();
  std::vector<double> integral(opt.paths);
  std::vector<double> values(opt.paths * K);
  const auto f = as_function(phi);
  parallel_for(opt.paths, [&](std::size_t m) {
    const auto r = integrate_along(model, w, h, 0.0, marks, path_for(model, stream_id(opt.trajectory_base, salt, m)), f);
    integral[m] = r.integrals.back();
    std::copy(r.values.begin(), r.values.end(), values.begin() + static_cast<std::ptrdiff_t>(m * K));
  });
  const auto ms = mean_se(integral);
  est.value = ms.mean;
  est.se = ms.se;

  std::vector<double> absm(K), floor(K), column(opt.paths);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < opt.paths; ++m) column[m] = values[m * K + k];
    const auto c = mean_se(column);
    absm[k] = std::abs(c.mean);
    floor[k] = 2.0 * c.se;
  }
  double rate = opt.rate;
  double C = 0.0;
  bool have_rate = rate > 0.0;
  bool fitted_prefactor = false;
  if (!have_rate) {
    const auto fit = fit_exponential(marks, absm, floor);
    if (fit.fitted && fit.exponent > 0.0) {
      rate = fit.exponent;
      C = fit.prefactor;
      have_rate = fitted_prefactor = est.rate_fitted = true;
    } else if (absm[0] > 0.0) {
      for (std::size_t k = 1; k < K; ++k) {
        if (absm[k] <= floor[k] && floor[k] > 0.0) {
          rate = std::log(absm[0] / floor[k]) / marks[k];
          have_rate = rate > 0.0;
          break;
        }
      }
    }
  }
  if (have_rate) {
    if (!fitted_prefactor)
      for (std::size_t k = 0; k < K; ++k)
        if (absm[k] > floor[k]) C = std::max(C, absm[k] * std::exp(rate * marks[k]));
    est.tail_bound = C * std::exp(-rate * marks.back()) / rate;
    est.rate_used = rate;
  } else {
    // No decay visible: the remaining tail is taken as the last level held for another T_chi.
    est.tail_bound = (absm.back() + floor.back()) * marks.back();
    est.flagged = true;
  }
  if (est.tail_bound > opt.tail_tolerance * (std::abs(est.value) + est.se)) est.flagged = true;
  return est;
}

CorrectorFunction corrector_function(const Model& model, const CenteredObservable& phi, const CorrectorOptions& opt) {
  return [&model, phi, opt](const SpectralVorticity& w, const TorusPoint& h) {
    return estimate_corrector(model, phi, w, h, opt).value;
  };
}

RateFit observable_decay(const Model& model, const CenteredObservable& phi, const SpectralVorticity& w0,
                         const TorusPoint& h, const std::vector<double>& times, std::size_t paths,
                         std::uint64_t trajectory_base) {
  check_increasing(times, "decay times");
  if (paths < 2) throw InvalidArgument("observable_decay needs at least 2 paths");
  const std::size_t K = times.size();
  std::vector<double> values(paths * K);
  const auto f = as_function(phi);
  parallel_for(paths, [&](std::size_t m) {
    const auto r = integrate_along(model, w0, h, 0.0, times, path_for(model, stream_id(trajectory_base, m)), f);
    std::copy(r.values.begin(), r.values.end(), values.begin() + static_cast<std::ptrdiff_t>(m * K));
  });
  std::vector<double> absm(K), floor(K), column(paths);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < paths; ++m) column[m] = values[m * K + k];
    const auto c = mean_se(column);
    absm[k] = std::abs(c.mean);
    floor[k] = 2.0 * c.se;
  }
  return fit_exponential(times, absm, floor);
}

// -------------------------------------------------------------- martingale

MartingaleDecomposition martingale_decompose(const Model& model, const SpectralVorticity& w0, const TorusPoint& h,
                                             double horizon, const WienerPath& path, const CenteredObservable& phi,
                                             const CorrectorFunction& chi) {
  if (!(horizon >= 1.0)) throw InvalidArgument("martingale horizon must be at least 1");
  try {
    model.step_index(1.0);
  } catch (const InvalidArgument&) {
    throw InvalidArgument("integer times are not on the step grid");
  }
  model.step_index(horizon);
  MartingaleDecomposition d;
  d.horizon = horizon;
  const auto N = static_cast<std::size_t>(std::floor(horizon + 1e-9));
  std::vector<double> marks;
  for (std::size_t k = 0; k <= N; ++k) marks.push_back(static_cast<double>(k));
  marks.push_back(horizon);
  const auto r = integrate_along(model, w0, h, 0.0, marks, path, as_function(phi), true);
  const auto& alpha = model.force().frequency();
  d.chi.resize(N + 1);
  d.feature.resize(N + 1);
  d.integral.assign(r.integrals.begin(), r.integrals.begin() + static_cast<std::ptrdiff_t>(N + 1));
  for (std::size_t k = 0; k <= N; ++k) {
    const TorusPoint g = rotate(h, alpha, static_cast<double>(k));
    d.chi[k] = chi(r.states[k], g);
    d.feature[k] = r.values[k];
  }
  d.M.resize(N + 1);
  for (std::size_t k = 0; k <= N; ++k) d.M[k] = d.chi[k] - d.chi[0] + d.integral[k];
  d.Z.resize(N);
  for (std::size_t k = 1; k <= N; ++k) d.Z[k - 1] = d.M[k] - d.M[k - 1];
  d.total_integral = r.integrals.back();
  d.remainder = d.total_integral - d.M[N];
  return d;
}

MartingaleReport test_martingale_property(const std::vector<MartingaleDecomposition>& ensemble) {
  if (ensemble.size() < 100) throw InvalidArgument("martingale test needs at least 100 trajectories");
  const std::size_t N = ensemble.front().Z.size();
  if (N < 1) throw InvalidArgument("martingale test needs at least one increment");
  for (const auto& d : ensemble)
    if (d.Z.size() != N || d.feature.size() != N + 1 || d.M.size() != N + 1)
      throw InvalidArgument("martingale ensemble has inconsistent lengths");
  MartingaleReport rep;
  std::vector<double> x, y;
  x.reserve(ensemble.size() * N);
  y.reserve(ensemble.size() * N);
  for (const auto& d : ensemble)
    for (std::size_t k = 0; k < N; ++k) {
      x.push_back(d.feature[k]);
      y.push_back(d.Z[k]);
    }
  const double n = static_cast<double>(x.size());
  bool degenerate_x = std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
  const double q = student_t_quantile(0.975, n - 2.0);
  if (degenerate_x) {
    // No regressor variation: only the intercept is identifiable.
    const auto m = mean_se(y);
    rep.intercept = m.mean;
    rep.intercept_ci = {m.mean - q * m.se, m.mean + q * m.se};
    rep.slope_ci = {0.0, 0.0};
  } else {
    const auto lf = linear_fit(x, y);
    rep.slope = lf.slope;
    rep.slope_ci = lf.slope_ci(0.95);
    rep.intercept = lf.intercept;
    rep.intercept_ci = {lf.intercept - q * lf.intercept_se, lf.intercept + q * lf.intercept_se};
  }
  auto contains_zero = [](std::pair<double, double> ci) { return ci.first <= 0.0 && 0.0 <= ci.second; };
  rep.mean_M.resize(N + 1);
  rep.se_M.resize(N + 1);
  std::vector<double> col(ensemble.size());
  bool means_ok = true;
  for (std::size_t k = 0; k <= N; ++k) {
    for (std::size_t j = 0; j < ensemble.size(); ++j) col[j] = ensemble[j].M[k];
    const auto m = mean_se(col);
    rep.mean_M[k] = m.mean;
    rep.se_M[k] = m.se;
    double z = 0.0;
    if (m.se > 0.0) z = std::abs(m.mean) / m.se;
    else if (m.mean != 0.0) z = std::numeric_limits<double>::infinity();
    if (z > rep.worst_z) {
      rep.worst_z = z;
      rep.worst_index = k;
    }
    if (z > 3.0) means_ok = false;
  }
  rep.pass = contains_zero(rep.slope_ci) && contains_zero(rep.intercept_ci) && means_ok;
  return rep;
}

// -------------------------------------------------------------- SLLN and CLT

SllnReport slln_run(const Model& model, const CenteredObservable& phi, const SpectralVorticity& w0,
                    const TorusPoint& h, const SllnOptions& opt) {
  check_increasing(opt.horizons, "SLLN horizons");
  if (!(opt.horizons.front() > 0.0)) throw InvalidArgument("SLLN horizons must be positive");
  if (std::log10(opt.horizons.back() / opt.horizons.front()) < 1.5 - 1e-9)
    throw InvalidArgument("SLLN horizons must span at least 1.5 decades");
  if (opt.paths < 2) throw InvalidArgument("SLLN needs at least 2 paths");
  const std::size_t K = opt.horizons.size();
  SllnReport rep;
  rep.horizons = opt.horizons;
  rep.samples.assign(K, std::vector<double>(opt.paths, 0.0));
  if (!phi.trivially_zero()) {
    const auto f = as_function(phi);
    parallel_for(opt.paths, [&](std::size_t m) {
      const auto r = integrate_along(model, w0, h, opt.s, opt.horizons,
                                     path_for(model, stream_id(opt.trajectory_base, m)), f);
      for (std::size_t k = 0; k < K; ++k) rep.samples[k][m] = r.integrals[k] / opt.horizons[k];
    });
  }
  std::vector<double> absval(opt.paths);
  for (std::size_t k = 0; k < K; ++k) {
    const auto sg = mean_se(rep.samples[k]);
    for (std::size_t m = 0; m < opt.paths; ++m) absval[m] = std::abs(rep.samples[k][m]);
    const auto ab = mean_se(absval);
    rep.mean_signed.push_back(sg.mean);
    rep.se_signed.push_back(sg.se);
    rep.mean_abs.push_back(ab.mean);
    rep.se_abs.push_back(ab.se);
  }
  rep.fit = fit_power(rep.horizons, rep.mean_abs);
  if (phi.trivially_zero()) rep.fit.note = "observable is identically zero; fit refused";
  return rep;
}

MomentReport moment_rate_check(const SllnReport& slln, std::size_t p) {
  if (p != 1 && p != 2) throw InvalidArgument("moment check supports p = 1 and p = 2");
  MomentReport rep;
  rep.p = p;
  const double e = 2.0 * static_cast<double>(p);
  bool all_zero = true;
  for (const auto& row : slln.samples) {
    std::vector<double> v(row.size());
    for (std::size_t m = 0; m < row.size(); ++m) v[m] = std::pow(std::abs(row[m]), e);
    const auto ms = mean_se(v);
    rep.moment.push_back(ms.mean);
    rep.se.push_back(ms.se);
    if (ms.mean != 0.0) all_zero = false;
  }
  if (all_zero) {
    rep.fit.note = "moments are identically zero; fit refused";
    return rep;
  }
  for (std::size_t k = 0; k < rep.moment.size(); ++k)
    if (rep.moment[k] > 0.0 && rep.se[k] / rep.moment[k] > 0.5)
      throw ConvergenceError("heavy-tailed moment estimate; more paths needed", rep.se[k] / rep.moment[k]);
  rep.fit = fit_power(slln.horizons, rep.moment);
  rep.pass = rep.fit.fitted && rep.fit.slope <= -static_cast<double>(p) + 0.15;
  return rep;
}

double degenerate_weighted_distance(std::vector<double> samples) {
  if (samples.empty()) throw InvalidArgument("no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double x = samples[i];
    if (x < 0.0) {
      std::size_t last = i;
      while (last + 1 < samples.size() && samples[last + 1] == x) ++last;
      worst = std::max(worst, std::min(-x, 1.0) * static_cast<double>(last + 1) / n);
    } else if (x > 0.0) {
      std::size_t first = i;
      while (first > 0 && samples[first - 1] == x) --first;
      worst = std::max(worst, std::min(x, 1.0) * static_cast<double>(samples.size() - first) / n);
    }
  }
  return worst;
}

CltReport clt_run(const Model& model, const CenteredObservable& phi, const SpectralVorticity& w0,
                  const TorusPoint& h, double sigma2_ref, const CltOptions& opt) {
  if (opt.paths < 500) throw InvalidArgument("CLT run needs at least 500 paths");
  if (!(opt.horizon > 0.0)) throw InvalidArgument("CLT horizon must be positive");
  if (!(sigma2_ref >= 0.0)) throw InvalidArgument("reference variance must be nonnegative");
  std::vector<double> marks = opt.sweep;
  marks.push_back(opt.horizon);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
  if (!(marks.front() > 0.0)) throw InvalidArgument("CLT horizons must be positive");
  const std::size_t K = marks.size();
  std::vector<std::vector<double>> z(K, std::vector<double>(opt.paths, 0.0));
  if (!phi.trivially_zero()) {
    const auto f = as_function(phi);
    parallel_for(opt.paths, [&](std::size_t m) {
      const auto r =
          integrate_along(model, w0, h, opt.s, marks, path_for(model, stream_id(opt.trajectory_base, m)), f);
      for (std::size_t k = 0; k < K; ++k) z[k][m] = r.integrals[k] / std::sqrt(marks[k]);
    });
  }
  CltReport rep;
  rep.sigma2_ref = sigma2_ref;
  const auto main_k =
      static_cast<std::size_t>(std::find(marks.begin(), marks.end(), opt.horizon) - marks.begin());
  rep.samples = z[main_k];
  std::vector<double> sq(opt.paths);
  for (std::size_t m = 0; m < opt.paths; ++m) sq[m] = rep.samples[m] * rep.samples[m];
  const auto s2 = mean_se(sq);
  rep.sigma2_hat = s2.mean;
  rep.sigma2_se = s2.se;
  rep.degenerate = sigma2_ref <= opt.degenerate_tolerance || rep.sigma2_hat <= opt.degenerate_tolerance;
  auto distance = [&](const std::vector<double>& xs) {
    return rep.degenerate ? degenerate_weighted_distance(xs) : ks_normal(xs, std::sqrt(sigma2_ref));
  };
  rep.ks = distance(rep.samples);
  if (!opt.sweep.empty()) {
    for (std::size_t k = 0; k < K; ++k) {
      rep.sweep_horizons.push_back(marks[k]);
      rep.sweep_ks.push_back(distance(z[k]));
    }
  }
  return rep;
}

Sigma2Estimate estimate_sigma2_direct(const Model& model, const CenteredObservable& phi,
                                      const EmpiricalMeasure& starts, const TorusPoint& h, double horizon,
                                      std::size_t paths, std::uint64_t trajectory_base) {
  if (!(horizon > 0.0)) throw InvalidArgument("variance horizon must be positive");
  if (paths < 2) throw InvalidArgument("variance estimate needs at least 2 paths");
  if (starts.size() == 0) throw InvalidArgument("variance estimate needs starting states");
  if (phi.trivially_zero()) return {};
  std::vector<double> sq(paths);
  const auto f = as_function(phi);
  parallel_for(paths, [&](std::size_t m) {
    const auto r = integrate_along(model, starts.particles[m % starts.size()], h, 0.0, {horizon},
                                   path_for(model, stream_id(trajectory_base, m)), f);
    sq[m] = r.integrals.back() * r.integrals.back() / horizon;
  });
  const auto ms = mean_se(sq);
  return {ms.mean, ms.se};
}

Sigma2CorrectorReport estimate_sigma2_corrector(const Model& model, const CenteredObservable& phi,
                                                const MeasurePath& gamma, const Sigma2CorrectorOptions& opt) {
  gamma.validate();
  if (opt.y_route && opt.y_outer < 1) throw InvalidArgument("Y route needs outer paths");
  Sigma2CorrectorReport rep;
  rep.y_computed = opt.y_route;
  const std::size_t G = gamma.size();
  if (phi.trivially_zero()) {
    if (opt.y_route) {
      rep.F.assign(G, 0.0);
      rep.F_se.assign(G, 0.0);
    }
    return rep;
  }
  struct Job {
    std::size_t g, i;
  };
  std::vector<Job> jobs;
  std::vector<std::vector<double>> weights(G);
  for (std::size_t g = 0; g < G; ++g) {
    weights[g] = normalized_weights(gamma.measures[g], opt.max_particles);
    for (std::size_t i = 0; i < weights[g].size(); ++i) jobs.push_back({g, i});
  }
  const auto& alpha = model.force().frequency();
  const std::uint64_t salt_base = derive_seed(opt.corrector.trajectory_base, 0x5a17);
  const std::uint64_t outer_base = derive_seed(opt.corrector.trajectory_base, 0x0a7e);
  std::vector<double> product(jobs.size()), y(jobs.size());
  std::vector<unsigned char> flagged(jobs.size(), 0);
  const auto f = as_function(phi);
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto [g, i] = jobs[j];
    const TorusPoint hg = gamma.grid_point(g);
    const auto& p = gamma.measures[g].particles[i];
    const std::uint64_t salt = stream_id(salt_base, g, i);
    const auto chi0 = estimate_corrector(model, phi, p, hg, opt.corrector, salt);
    product[j] = phi(p, hg) * chi0.value;
    flagged[j] = chi0.flagged ? 1 : 0;
    if (!opt.y_route) return;
    const TorusPoint h1 = rotate(hg, alpha, 1.0);
    std::vector<double> ys(opt.y_outer);
    for (std::size_t o = 0; o < opt.y_outer; ++o) {
      const auto r = integrate_along(model, p, hg, 0.0, {0.0, 1.0},
                                     path_for(model, stream_id(stream_id(outer_base, g, i), o)), f, true);
      const auto chi1 = estimate_corrector(model, phi, r.states[1], h1, opt.corrector, stream_id(salt, o + 1));
      const double M1 = chi1.value - chi0.value + r.integrals[1];
      // chi estimation errors inflate E M_1^2 by their variances.
      ys[o] = M1 * M1 - chi1.se * chi1.se - chi0.se * chi0.se;
    }
    y[j] = pairwise_sum(ys) / static_cast<double>(opt.y_outer);
  });
  for (auto fl : flagged) rep.flagged_correctors += fl;
  std::vector<MeanSe> corr_cells(G), y_cells(G);
  std::size_t j = 0;
  for (std::size_t g = 0; g < G; ++g) {
    const std::size_t n = weights[g].size();
    std::vector<double> zc(product.begin() + static_cast<std::ptrdiff_t>(j),
                           product.begin() + static_cast<std::ptrdiff_t>(j + n));
    corr_cells[g] = weighted_mean(zc, weights[g]);
    if (opt.y_route) {
      std::vector<double> zy(y.begin() + static_cast<std::ptrdiff_t>(j), y.begin() + static_cast<std::ptrdiff_t>(j + n));
      y_cells[g] = weighted_mean(zy, weights[g]);
      rep.F.push_back(y_cells[g].mean);
      rep.F_se.push_back(y_cells[g].se);
    }
    j += n;
  }
  const auto c = grid_average(corr_cells);
  rep.corrector_route = {2.0 * c.mean, 2.0 * c.se};
  if (opt.y_route) {
    const auto yr = grid_average(y_cells);
    rep.y_route = {yr.mean, yr.se};
    const double d = std::abs(rep.corrector_route.value - rep.y_route.value);
    if (d > kZ95 * (rep.corrector_route.se + rep.y_route.se))
      rep.warning = "corrector and Y routes disagree beyond their combined confidence intervals";
  }
  return rep;
}

// ------------------------------------------------------------------ Birkhoff

namespace {

struct Neumaier {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace

BirkhoffReport birkhoff_rate(const std::function<double(const TorusPoint&)>& F, const Frequency& alpha,
                             const TorusPoint& h0, const std::vector<std::size_t>& counts, double holder_gamma,
                             double diophantine_A, double integral, std::size_t quadrature) {
  if (h0.dim() != alpha.dim()) throw InvalidArgument("start point and frequency dimensions differ");
  if (counts.empty()) throw InvalidArgument("Birkhoff counts must not be empty");
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] < 1 || (k > 0 && counts[k] <= counts[k - 1]))
      throw InvalidArgument("Birkhoff counts must be positive and increasing");
  BirkhoffReport rep;
  rep.counts = counts;
  const double n_dim = static_cast<double>(alpha.dim());
  rep.predicted_exponent = -holder_gamma / (diophantine_A + n_dim);

  if (std::isnan(integral)) {
    if (quadrature < 1) throw InvalidArgument("quadrature needs at least one point per axis");
    const auto pts = torus_grid(alpha.dim(), quadrature);
    Neumaier acc;
    const double first = F(pts.front());
    bool same = true;
    for (const auto& p : pts) {
      const double v = F(p);
      same = same && v == first;
      acc.add(v);
    }
    integral = same ? first : acc.value() / static_cast<double>(pts.size());
  }
  rep.integral = integral;

  Neumaier acc;
  std::size_t k = 0;
  const double first = F(h0);
  bool same = true;
  for (std::size_t N : counts) {
    for (; k < N; ++k) {
      const double v = F(rotate(h0, alpha, static_cast<double>(k)));
      same = same && v == first;
      acc.add(v);
    }
    const double avg = same ? first : acc.value() / static_cast<double>(N);
    rep.averages.push_back(avg);
    rep.errors.push_back(std::abs(avg - integral));
  }
  rep.envelope = rep.errors;
  for (std::size_t i = rep.envelope.size() - 1; i-- > 0;) rep.envelope[i] = std::max(rep.envelope[i], rep.envelope[i + 1]);
  rep.exact_zero = std::all_of(rep.errors.begin(), rep.errors.end(), [](double e) { return e == 0.0; });
  std::vector<double> x(counts.begin(), counts.end());
  rep.fit = fit_power(x, rep.envelope);
  if (rep.exact_zero) rep.fit.note = "error is exactly zero; fit refused";
  return rep;
}

// ------------------------------------------------------------------ lemmas

MultinomialResult multinomial_identity(const std::vector<double>& xs, int p) {
  if (p < 1 || p > 6) throw InvalidArgument("multinomial identity needs 1 <= p <= 6");
  if (xs.empty() || xs.size() > 64) throw InvalidArgument("multinomial identity needs 1 to 64 terms");
  const std::size_t m = xs.size();
  const int q = 2 * p - 2;
  std::vector<double> S(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) S[i + 1] = S[i] + xs[i];
  double lhs = 1.0;
  for (int e = 0; e < 2 * p; ++e) lhs *= S[m];
  std::vector<double> terms;
  terms.reserve(2 * m);
  for (std::size_t i = 1; i <= m; ++i) {
    double f_eq = 0.0;
    double f_gt = 0.0;
    for (int k = 0; k <= q; ++k) {
      double a = 1.0;
      for (int e = 0; e < k; ++e) a *= S[i - 1];
      double b = 1.0;
      for (int e = 0; e < q - k; ++e) b *= S[i];
      f_eq += static_cast<double>(k + 1) * a * b;
      f_gt += a * b;
    }
    f_gt *= 2.0 * static_cast<double>(p);
    const double x = xs[i - 1];
    terms.push_back(f_eq * x * x);
    double tail = 0.0;
    for (std::size_t j = i; j < m; ++j) tail += xs[j];
    terms.push_back(f_gt * x * tail);
  }
  double rhs = 0.0, scale = std::abs(lhs);
  for (double t : terms) {
    rhs += t;
    scale += std::abs(t);
  }
  return {lhs, rhs, scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0};
}

HolderBound holder_exponent_bound(double D, double lambda1, double lambda2, double gamma, double delta) {
  if (!(D >= 1.0)) throw InvalidArgument("Holder bound needs D >= 1");
  if (!(lambda1 > 0.0 && lambda2 > 0.0)) throw InvalidArgument("Holder bound needs positive rates");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("Holder bound needs gamma in (0, 1]");
  if (!(delta > 0.0 && delta <= D)) throw InvalidArgument("Holder bound needs 0 < delta <= D");
  HolderBound b;
  b.gamma_bar = lambda2 * gamma / (lambda1 + lambda2);
  b.T = delta < 1.0 ? -gamma * std::log(delta) / (lambda1 + lambda2) : 0.0;
  b.lhs = std::exp(lambda1 * b.T) * std::pow(delta, gamma) + std::exp(-lambda2 * b.T);
  b.rhs = 2.0 * std::pow(D, gamma) * std::pow(delta, b.gamma_bar);
  // Equality holds analytically at D = 1; allow rounding in the last bits.
  b.pass = b.lhs <= b.rhs * (1.0 + 1e-14);
  return b;
}

LemmaSuite multinomial_suite(std::size_t draws, std::uint64_t seed, double tolerance) {
  const CounterRng rng(seed);
  LemmaSuite s;
  s.draws = draws;
  for (std::uint64_t t = 0; t < draws; ++t) {
    const int p = 1 + static_cast<int>(rng.uniform(StreamTag::kSampling, t, 0, 0) * 4.0);
    const auto m = 1 + static_cast<std::size_t>(rng.uniform(StreamTag::kSampling, t, 0, 1) * 20.0);
    std::vector<double> xs(m);
    for (std::size_t i = 0; i < m; ++i) xs[i] = rng.normal(StreamTag::kSampling, t, i + 1, 0);
    const double r = multinomial_identity(xs, p).residual;
    s.worst = std::max(s.worst, r);
    if (!(r <= tolerance)) ++s.failures;
  }
  s.pass = s.failures == 0;
  return s;
}

LemmaSuite holder_suite(std::size_t draws, std::uint64_t seed) {
  const CounterRng rng(seed);
  LemmaSuite s;
  s.draws = draws;
  s.worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t t = 0; t < draws; ++t) {
    auto u = [&](std::uint32_t c) { return rng.uniform(StreamTag::kSampling, t, 0, c); };
    const double D = 1.0 + 9.0 * u(0);
    const auto b = holder_exponent_bound(D, 0.01 + 5.0 * u(2), 0.01 + 5.0 * u(3), 0.01 + 0.99 * u(4),
                                         D * std::pow(u(1), 3.0));
    s.worst = std::min(s.worst, b.rhs - b.lhs);
    if (!b.pass) ++s.failures;
  }
  const auto eq = holder_exponent_bound(1.0, 1.0, 1.0, 1.0, std::exp(-2.0));
  const double target = 2.0 / std::numbers::e;
  s.equality_error = std::max({std::abs(eq.T - 1.0), std::abs(eq.lhs - target), std::abs(eq.rhs - target)});
  s.pass = s.failures == 0 && eq.pass && s.equality_error <= 1e-12;
  return s;
}

// ---------------------------------------------------------------- Lyapunov

void LyapunovConfig::validate() const {
  if (!(eta > 0.0)) throw InvalidArgument("Lyapunov eta must be positive");
  if (!(kappa > 0.0)) throw InvalidArgument("Lyapunov kappa must be positive");
  if (!(a > 0.0 && a < 1.0)) throw InvalidArgument("Lyapunov a must lie in (0, 1)");
  if (!(c > 1.0)) throw InvalidArgument("Lyapunov c must exceed 1");
}

double LyapunovConstants::log_C_hull(double r, double c) const {
  return std::log(16.0 / (r * nu)) - 2.0 * std::log(1.0 - std::pow(2.0, 1.0 - c)) + exponent;
}

LyapunovConstants lyapunov_constants(const Model& model, const LyapunovConfig& cfg, std::size_t grid) {
  cfg.validate();
  LyapunovConstants k;
  k.nu = model.config().nu;
  k.B0 = model.noise().energy_input();
  const auto& force = model.force();
  k.f_sup_bound = force.sup_bound();
  if (!force.terms().empty()) {
    for (const auto& g : torus_grid(force.frequency().dim(), grid)) k.f_sup = std::max(k.f_sup, norm(force.eval(g)));
  }
  k.eta0 = k.B0 > 0.0 ? (1.0 - cfg.a) * k.nu / (2.0 * cfg.c * k.B0) : std::numeric_limits<double>::infinity();
  k.C_fB0 = k.f_sup * k.f_sup / (cfg.a * k.nu) + k.B0;
  k.exponent = k.C_fB0 == 0.0 ? 0.0 : k.eta0 * k.C_fB0 / k.nu;
  const double q = 1.0 - std::pow(2.0, 1.0 - cfg.c);
  k.log_C_moment = std::log(4.0 / q) + k.exponent;
  k.log_C_enstrophy = std::log(16.0 / (q * q)) + k.exponent;
  k.log_C_initial = std::log(64.0) - 1.5 * std::log(q) + k.exponent;
  return k;
}

double growth_rate_r(const LyapunovConstants& k, double eta, double c0) {
  if (!(eta > 0.0 && c0 > 0.0)) throw InvalidArgument("growth rate needs eta, c0 > 0");
  return 64.0 * std::pow(c0, 6) / (std::pow(eta, 3) * std::pow(k.nu, 5)) + eta * k.C_fB0;
}

LyapunovReport lyapunov_check(const Model& model, const LyapunovConfig& cfg, const SpectralVorticity& w0,
                              const TorusPoint& h, const LyapunovOptions& opt) {
  LyapunovReport rep;
  rep.constants = lyapunov_constants(model, cfg);
  const auto& K = rep.constants;
  if (cfg.eta > K.eta0 * (1.0 + 1e-12)) throw InvalidArgument("Lyapunov eta exceeds eta0");
  if (opt.paths < 2) throw InvalidArgument("Lyapunov check needs at least 2 paths");
  const auto idx = mark_indices(model, opt.s, check_increasing(opt.times, "Lyapunov times"));
  const std::int64_t tau = model.step_index(opt.tau);
  if (tau < 0 || tau > idx.back()) throw InvalidArgument("enstrophy start must lie within the time grid");
  const std::int64_t ns = model.step_index(opt.s);
  const std::size_t T = idx.size();
  const double eta = cfg.eta;
  const double nu = K.nu;
  const double dt = model.dt();
  std::vector<double> expo(opt.paths * T), sup(opt.paths);
  parallel_for(opt.paths, [&](std::size_t m) {
    const auto path = path_for(model, stream_id(opt.trajectory_base, m));
    SpectralVorticity w = w0;
    PseudoSpectral ws(model.lattice());
    std::size_t next = 0;
    double e1_prev = std::pow(sobolev_norm(w, {1.0}), 2);
    double ens = 0.0, ens_tau = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    auto visit = [&](std::int64_t k) {
      while (next < T && idx[next] == k) expo[m * T + next++] = eta * norm_sq(w);
      if (k == tau) ens_tau = ens;
      if (k >= tau) {
        const double elapsed = model.time_of(k - tau);
        best = std::max(best, norm_sq(w) + nu * (ens - ens_tau) - K.C_fB0 * elapsed);
      }
    };
    visit(0);
    for (std::int64_t k = 0; k < idx.back(); ++k) {
      model.step(w, ns + k, h, path, ws);
      const double e1 = std::pow(sobolev_norm(w, {1.0}), 2);
      ens += 0.5 * dt * (e1_prev + e1);
      e1_prev = e1;
      visit(k + 1);
    }
    sup[m] = eta * best;
  });
  std::vector<double> v(opt.paths);
  auto moment = [&](const std::vector<double>& exps) {
    for (std::size_t m = 0; m < opt.paths; ++m) v[m] = std::exp(exps[m]);
    double s1 = 0.0, s2 = 0.0;
    for (double x : v) {
      s1 += x;
      s2 += x * x;
    }
    const double ess = s2 > 0.0 ? s1 * s1 / s2 : static_cast<double>(opt.paths);
    rep.min_ess = rep.min_ess == 0.0 ? ess : std::min(rep.min_ess, ess);
    return mean_se(v);
  };
  const double w0sq = norm_sq(w0);
  std::vector<double> col(opt.paths);
  bool pass = true;
  for (std::size_t k = 0; k < T; ++k) {
    for (std::size_t m = 0; m < opt.paths; ++m) col[m] = expo[m * T + k];
    const double t = model.time_of(idx[k]);
    const auto row = bound_row(t, moment(col), K.log_C_moment + eta * std::exp(-nu * t) * w0sq, opt.slack_se);
    pass = pass && row.pass;
    rep.exp_moment.push_back(row);
  }
  const double t_tau = model.time_of(tau);
  rep.enstrophy = bound_row(t_tau, moment(sup), K.log_C_enstrophy + eta * std::exp(-nu * t_tau) * w0sq, opt.slack_se);
  if (rep.min_ess < 50.0)
    throw ConvergenceError("exponential moment effective sample size below 50; more paths or smaller eta needed",
                           rep.min_ess);
  rep.pass = pass && rep.enstrophy.pass;
  return rep;
}

ContinuityReport continuity_checks(const Model& model, const LyapunovConfig& cfg, ContinuityKind kind,
                                   const SpectralVorticity& w1, const SpectralVorticity& w2, const TorusPoint& h1,
                                   const TorusPoint& h2, const std::vector<double>& times, std::size_t paths,
                                   double c0, std::uint64_t trajectory_base) {
  const auto K = lyapunov_constants(model, cfg);
  if (cfg.eta > K.eta0 * (1.0 + 1e-12)) throw InvalidArgument("Lyapunov eta exceeds eta0");
  if (paths < 2) throw InvalidArgument("continuity check needs at least 2 paths");
  const auto idx = mark_indices(model, 0.0, check_increasing(times, "continuity times"));
  ContinuityReport rep;
  rep.kind = kind;
  rep.c0 = c0;
  rep.r = growth_rate_r(K, cfg.eta, c0);
  const SpectralVorticity& start_b = kind == ContinuityKind::kSymbol ? w1 : w2;
  const TorusPoint& symbol_b = kind == ContinuityKind::kSymbol ? h2 : h1;
  if (kind == ContinuityKind::kSymbol) {
    const auto& force = model.force();
    std::vector<double> shift(h1.dim());
    for (std::size_t d = 0; d < h1.dim(); ++d) shift[d] = h2[d] - h1[d];
    double sup_sq = 0.0;
    if (!force.terms().empty())
      for (const auto& g : torus_grid(force.frequency().dim(), 64)) {
        std::vector<double> gs(g.dim());
        for (std::size_t d = 0; d < g.dim(); ++d) gs[d] = g[d] + shift[d];
        sup_sq = std::max(sup_sq, norm_sq(force.eval(g) - force.eval(TorusPoint(gs))));
      }
    rep.log_prefactor = K.log_C_hull(rep.r, cfg.c) + cfg.eta * norm_sq(w1) + log_or_minus_inf(sup_sq);
  } else {
    rep.log_prefactor = K.log_C_initial + log_or_minus_inf(norm_sq(w1 - w2)) + cfg.eta * norm_sq(w1);
  }
  const std::size_t T = idx.size();
  std::vector<double> gap(paths * T);
  parallel_for(paths, [&](std::size_t m) {
    const auto path = path_for(model, stream_id(trajectory_base, m));
    SpectralVorticity a = w1, b = start_b;
    PseudoSpectral ws(model.lattice());
    std::size_t next = 0;
    auto visit = [&](std::int64_t k) {
      while (next < T && idx[next] == k) gap[m * T + next++] = norm_sq(a - b);
    };
    visit(0);
    for (std::int64_t k = 0; k < idx.back(); ++k) {
      model.step(a, k, h1, path, ws);
      model.step(b, k, symbol_b, path, ws);
      visit(k + 1);
    }
  });
  std::vector<double> col(paths);
  rep.pass = true;
  for (std::size_t k = 0; k < T; ++k) {
    for (std::size_t m = 0; m < paths; ++m) col[m] = gap[m * T + k];
    const double t = model.time_of(idx[k]);
    const auto row = bound_row(t, mean_se(col), rep.log_prefactor + rep.r * t, 3.0);
    rep.pass = rep.pass && row.pass;
    rep.rows.push_back(row);
  }
  return rep;
}

ForwardAverageReport forward_average_check(const Model& model, const Observable& phi, const SpectralVorticity& w0,
                                           const TorusPoint& h, double K, std::size_t N, const MeasurePath& gamma,
                                           std::size_t paths, std::uint64_t trajectory_base) {
  if (!(K >= 1.0)) throw InvalidArgument("forward average needs K >= 1");
  if (N < 1 || paths < 2) throw InvalidArgument("forward average needs N >= 1 and at least 2 paths");
  gamma.validate();
  std::vector<double> marks(N);
  for (std::size_t j = 0; j < N; ++j) marks[j] = static_cast<double>(j) * K;
  std::vector<double> per_path(paths);
  const auto f = [&phi](const SpectralVorticity& w, const TorusPoint&) { return phi(w); };
  parallel_for(paths, [&](std::size_t m) {
    const auto r = integrate_along(model, w0, h, 0.0, marks, path_for(model, stream_id(trajectory_base, m)), f);
    per_path[m] = pairwise_sum(r.values) / static_cast<double>(N);
  });
  ForwardAverageReport rep;
  const auto fw = mean_se(per_path);
  rep.forward = phi.kind == ObservableKind::kConstant ? phi.parameter : fw.mean;
  rep.forward_se = fw.se;
  std::vector<MeanSe> cells(gamma.size());
  for (std::size_t g = 0; g < gamma.size(); ++g) cells[g] = measure_mean(phi, gamma.measures[g]);
  const auto ta = grid_average(cells);
  rep.torus = ta.mean;
  rep.torus_se = ta.se;
  rep.overlap = std::abs(rep.forward - rep.torus) <= kZ95 * (rep.forward_se + rep.torus_se);
  return rep;
}

}  // namespace qpns
