#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpns/error.hpp"
#include "qpns/integrator.hpp"

namespace qpns::cli {

// Malformed or invalid configuration; the message carries line and field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct NoiseDirection {
  int k1 = 1;
  int k2 = 0;
  bool sin_in_x = false;
  double amp = 0.0;
};

struct SimulateSection {
  double horizon = 10.0;
  double sample_interval = 0.1;
  double start_radius = 0.0;
};

struct InvariantSection {
  std::size_t particles = 64;
  double t_back = 10.0;
  std::size_t resolution = 4;
  double stabilization_tol = 0.05;
  bool symmetrize = false;
  double cost_eta = 0.01;
};

struct MixingSection {
  std::size_t particles = 64;
  double horizon = 8.0;
  std::size_t samples = 16;
  double start_radius = 20.0;
  double cost_eta = 0.0;
  double min_r2 = 0.9;
  double min_decades = 1.0;
};

struct SllnSection {
  std::string observable = "mode_re(1,0)";
  std::vector<double> horizons{10.0, 30.0, 100.0, 300.0, 1000.0};
  std::size_t paths = 100;
  std::vector<std::size_t> moments{1};
  double slope_min = -0.65;
  double slope_max = -0.35;
};

struct CltSection {
  std::string observable = "mode_re(1,0)";
  double horizon = 50.0;
  std::size_t paths = 2000;
  std::vector<double> sweep;
  double ks_tolerance = 0.05;
  double t_chi = 10.0;
  std::size_t corrector_paths = 200;
  std::size_t max_particles = 0;
};

struct HormanderSection {
  int max_generations = 6;
  double tolerance = 1e-10;
  int truncation = 0;  // 0 uses the model truncation
};

struct AttractorSection {
  double c0 = 0.0;  // 0 uses the empirical Ladyzhenskaya lower bound
  std::size_t seeds = 2;
  double initial_depth = 1.0;
  std::size_t doublings = 8;
  double tolerance = 1e-8;
  double radius = 0.5;
  double horizon = 4.0;
  std::size_t samples = 16;
  std::size_t starts = 6;
  double shift = 1.0;
  std::size_t p = 1;
  std::vector<double> separations{0.01, 0.02, 0.04, 0.08, 0.16};
  std::vector<double> h0{0.7, 0.2};
};

struct LyapunovSection {
  double eta_fraction = 0.25;
  double a = 0.5;
  double c = 2.0;
  double kappa = 1.0;
  double horizon = 20.0;
  std::size_t samples = 10;
  std::size_t paths = 1000;
  double start_radius = 1.0;
};

struct DiophantineSection {
  std::vector<double> alpha;  // empty: golden mean
  double K = 0.38;
  double A = 1.0;
  long long kmax = 100000;
  std::vector<std::size_t> counts{10, 30, 100, 300, 1000, 3000, 10000, 30000, 100000};
  double max_slope = -0.5;
};

struct LemmasSection {
  std::size_t multinomial_draws = 10000;
  std::size_t holder_draws = 10000;
  double multinomial_tolerance = 1e-9;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int truncation = 8;
  double nu = 0.5;
  double dt = 0.01;
  bool nonlinear = true;
  std::vector<double> alpha;  // empty: ((sqrt 5 - 1) / 2, sqrt 2 - 1)
  double holder_gamma = 1.0;
  std::vector<ForceTermSpec> force;
  std::string noise_kind = "canonical";  // canonical | directions | none
  double noise_amp = 0.05;
  std::vector<NoiseDirection> noise_directions;

  SimulateSection simulate;
  InvariantSection invariant;
  MixingSection mixing;
  SllnSection slln;
  CltSection clt;
  HormanderSection hormander;
  AttractorSection attractor;
  LyapunovSection lyapunov;
  DiophantineSection diophantine;
  LemmasSection lemmas;

  void validate() const;
};

RunConfig default_config();
RunConfig parse_config(const std::string& text, const std::string& source = "config");
RunConfig load_config(const std::string& path);

// Every field after defaults, keys in declaration order.
nlohmann::ordered_json canonical_json(const RunConfig& cfg);
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t x);
std::string config_hash(const RunConfig& cfg);

Frequency model_frequency(const RunConfig& cfg);
Model build_model(const RunConfig& cfg);

}  // namespace qpns::cli
