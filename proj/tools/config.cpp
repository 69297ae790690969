#include "config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "qpns/rng.hpp"

namespace qpns::cli {

namespace {

std::string where(const std::string& source, const toml::source_region& r) {
  return source + ":" + std::to_string(r.begin.line) + ":" + std::to_string(r.begin.column);
}

// Typed access to one table; rejects unknown keys in finish().
class Reader {
 public:
  Reader(const toml::table& table, std::string path, const std::string& source)
      : table_(table), path_(std::move(path)), source_(source) {}

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const toml::node& node, const std::string& key, const std::string& what) const {
    throw ConfigError(where(source_, node.source()) + ": field '" + field(key) + "': " + what);
  }

  const toml::node* find(const std::string& key) {
    used_.insert(key);
    return table_.get(key);
  }

  void get(const std::string& key, double& out) {
    if (const auto* n = find(key)) out = number(*n, key);
  }
  void get(const std::string& key, bool& out) {
    if (const auto* n = find(key)) {
      if (!n->is_boolean()) fail(*n, key, "expected true or false");
      out = n->as_boolean()->get();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const auto* n = find(key)) {
      if (!n->is_string()) fail(*n, key, "expected a string");
      out = n->as_string()->get();
    }
  }
  void get(const std::string& key, int& out) {
    if (const auto* n = find(key)) out = static_cast<int>(integer(*n, key, -1000000000, 1000000000));
  }
  void get(const std::string& key, long long& out) {
    if (const auto* n = find(key)) out = integer(*n, key, 0, std::numeric_limits<long long>::max());
  }
  void get(const std::string& key, std::size_t& out) {
    if (const auto* n = find(key)) out = static_cast<std::size_t>(integer(*n, key, 0, std::numeric_limits<long long>::max()));
  }
  void get_u64(const std::string& key, std::uint64_t& out) {
    if (const auto* n = find(key)) out = static_cast<std::uint64_t>(integer(*n, key, 0, std::numeric_limits<long long>::max()));
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const auto* n = find(key)) {
      out.clear();
      for (const auto& e : array(*n, key)) out.push_back(number(e, key));
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (const auto* n = find(key)) {
      out.clear();
      for (const auto& e : array(*n, key))
        out.push_back(static_cast<std::size_t>(integer(e, key, 0, std::numeric_limits<long long>::max())));
    }
  }
  void get(const std::string& key, std::vector<int>& out) {
    if (const auto* n = find(key)) {
      out.clear();
      for (const auto& e : array(*n, key)) out.push_back(static_cast<int>(integer(e, key, -1000000, 1000000)));
    }
  }

  const toml::table* table(const std::string& key) {
    const auto* n = find(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail(*n, key, "expected a table");
    return n->as_table();
  }
  const toml::array* tables(const std::string& key) {
    const auto* n = find(key);
    if (!n) return nullptr;
    if (!n->is_array() || !(n->as_array()->empty() || n->is_array_of_tables()))
      fail(*n, key, "expected an array of tables");
    return n->as_array();
  }

  void finish() const {
    for (const auto& [k, v] : table_)
      if (!used_.count(std::string(k.str()))) fail(v, std::string(k.str()), "unknown key");
  }

  const std::string& source() const { return source_; }
  const std::string& path() const { return path_; }

 private:
  double number(const toml::node& n, const std::string& key) const {
    if (n.is_floating_point()) return n.as_floating_point()->get();
    if (n.is_integer()) return static_cast<double>(n.as_integer()->get());
    fail(n, key, "expected a number");
  }
  long long integer(const toml::node& n, const std::string& key, long long lo, long long hi) const {
    if (!n.is_integer()) fail(n, key, "expected an integer");
    const long long v = n.as_integer()->get();
    if (v < lo || v > hi) fail(n, key, "integer out of range");
    return v;
  }
  const toml::array& array(const toml::node& n, const std::string& key) const {
    if (!n.is_array()) fail(n, key, "expected an array");
    return *n.as_array();
  }

  const toml::table& table_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> used_;
};

bool trig_is_sin(Reader& r, const std::string& key, bool fallback) {
  std::string s = fallback ? "sin" : "cos";
  r.get(key, s);
  if (s != "sin" && s != "cos") throw ConfigError(r.source() + ": field '" + r.field(key) + "': expected \"cos\" or \"sin\"");
  return s == "sin";
}

void read_pair(Reader& r, const std::string& key, int& a, int& b) {
  std::vector<int> v{a, b};
  r.get(key, v);
  if (v.size() != 2) throw ConfigError(r.source() + ": field '" + r.field(key) + "': expected two integers");
  a = v[0];
  b = v[1];
}

template <class F>
void section(Reader& top, const std::string& name, F&& body) {
  if (const auto* t = top.table(name)) {
    Reader r(*t, name, top.source());
    body(r);
    r.finish();
  }
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("field '" + field + "': " + what);
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.force = {{{1, 0}, false, 1, 1, 1.0, false}, {{1, 0}, true, 2, 1, 0.5, false}, {{0, 1}, false, 1, -1, 1.0, false}};
  return cfg;
}

void RunConfig::validate() const {
  require(truncation >= 1 && truncation <= 256, "model.truncation", "must be in [1, 256]");
  require(nu > 0.0 && std::isfinite(nu), "model.nu", "must be positive");
  require(dt > 0.0 && std::isfinite(dt), "model.dt", "must be positive");
  require(holder_gamma > 0.0 && holder_gamma <= 1.0, "force.holder_gamma", "must be in (0, 1]");
  require(noise_kind == "canonical" || noise_kind == "directions" || noise_kind == "none", "noise.kind",
          "must be canonical, directions or none");
  require(noise_kind != "directions" || !noise_directions.empty(), "noise.directions", "needs at least one entry");
  require(noise_amp >= 0.0, "noise.amp", "must be nonnegative");
  require(invariant.particles >= 2, "invariant.particles", "must be >= 2");
  require(invariant.resolution >= 1, "invariant.resolution", "must be >= 1");
  require(mixing.particles >= 2 && mixing.samples >= 3, "mixing", "needs >= 2 particles and >= 3 samples");
  require(!slln.horizons.empty(), "slln.horizons", "must be nonempty");
  for (auto p : slln.moments) require(p == 1 || p == 2, "slln.moments", "entries must be 1 or 2");
  require(clt.paths >= 1, "clt.paths", "must be positive");
  require(hormander.max_generations >= 1, "hormander.max_generations", "must be >= 1");
  require(attractor.seeds >= 1 && attractor.starts >= 1, "attractor", "needs >= 1 seed and start");
  require(attractor.h0.size() == (alpha.empty() ? 2 : alpha.size()), "attractor.h0", "dimension must match force.alpha");
  require(lyapunov.eta_fraction > 0.0 && lyapunov.eta_fraction <= 1.0, "lyapunov.eta_fraction", "must be in (0, 1]");
  require(lyapunov.samples >= 1, "lyapunov.samples", "must be positive");
  require(diophantine.kmax >= 1, "diophantine.kmax", "must be >= 1");
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ConfigError(where(source, e.source()) + ": " + std::string(e.description()));
  }
  RunConfig cfg = default_config();
  Reader top(root, "", source);
  top.get_u64("seed", cfg.seed);
  section(top, "model", [&](Reader& r) {
    r.get("truncation", cfg.truncation);
    r.get("nu", cfg.nu);
    r.get("dt", cfg.dt);
    r.get("nonlinear", cfg.nonlinear);
  });
  section(top, "force", [&](Reader& r) {
    r.get("alpha", cfg.alpha);
    r.get("holder_gamma", cfg.holder_gamma);
    if (const auto* terms = r.tables("terms")) {
      cfg.force.clear();
      for (const auto& node : *terms) {
        Reader t(*node.as_table(), "force.terms", source);
        ForceTermSpec s;
        s.m = {0, 0};
        t.get("m", s.m);
        s.sin_in_h = trig_is_sin(t, "h", false);
        read_pair(t, "k", s.k1, s.k2);
        s.sin_in_x = trig_is_sin(t, "x", false);
        t.get("amp", s.amp);
        t.finish();
        cfg.force.push_back(std::move(s));
      }
    }
  });
  section(top, "noise", [&](Reader& r) {
    r.get("kind", cfg.noise_kind);
    r.get("amp", cfg.noise_amp);
    if (const auto* dirs = r.tables("directions")) {
      for (const auto& node : *dirs) {
        Reader t(*node.as_table(), "noise.directions", source);
        NoiseDirection d;
        read_pair(t, "k", d.k1, d.k2);
        d.sin_in_x = trig_is_sin(t, "x", false);
        t.get("amp", d.amp);
        t.finish();
        cfg.noise_directions.push_back(d);
      }
    }
  });
  section(top, "simulate", [&](Reader& r) {
    r.get("horizon", cfg.simulate.horizon);
    r.get("sample_interval", cfg.simulate.sample_interval);
    r.get("start_radius", cfg.simulate.start_radius);
  });
  section(top, "invariant", [&](Reader& r) {
    auto& s = cfg.invariant;
    r.get("particles", s.particles);
    r.get("t_back", s.t_back);
    r.get("resolution", s.resolution);
    r.get("stabilization_tol", s.stabilization_tol);
    r.get("symmetrize", s.symmetrize);
    r.get("cost_eta", s.cost_eta);
  });
  section(top, "mixing", [&](Reader& r) {
    auto& s = cfg.mixing;
    r.get("particles", s.particles);
    r.get("horizon", s.horizon);
    r.get("samples", s.samples);
    r.get("start_radius", s.start_radius);
    r.get("cost_eta", s.cost_eta);
    r.get("min_r2", s.min_r2);
    r.get("min_decades", s.min_decades);
  });
  section(top, "slln", [&](Reader& r) {
    auto& s = cfg.slln;
    r.get("observable", s.observable);
    r.get("horizons", s.horizons);
    r.get("paths", s.paths);
    r.get("moments", s.moments);
    r.get("slope_min", s.slope_min);
    r.get("slope_max", s.slope_max);
  });
  section(top, "clt", [&](Reader& r) {
    auto& s = cfg.clt;
    r.get("observable", s.observable);
    r.get("horizon", s.horizon);
    r.get("paths", s.paths);
    r.get("sweep", s.sweep);
    r.get("ks_tolerance", s.ks_tolerance);
    r.get("t_chi", s.t_chi);
    r.get("corrector_paths", s.corrector_paths);
    r.get("max_particles", s.max_particles);
  });
  section(top, "hormander", [&](Reader& r) {
    r.get("max_generations", cfg.hormander.max_generations);
    r.get("tolerance", cfg.hormander.tolerance);
    r.get("truncation", cfg.hormander.truncation);
  });
  section(top, "attractor", [&](Reader& r) {
    auto& s = cfg.attractor;
    r.get("c0", s.c0);
    r.get("seeds", s.seeds);
    r.get("initial_depth", s.initial_depth);
    r.get("doublings", s.doublings);
    r.get("tolerance", s.tolerance);
    r.get("radius", s.radius);
    r.get("horizon", s.horizon);
    r.get("samples", s.samples);
    r.get("starts", s.starts);
    r.get("shift", s.shift);
    r.get("p", s.p);
    r.get("separations", s.separations);
    r.get("h0", s.h0);
  });
  section(top, "lyapunov", [&](Reader& r) {
    auto& s = cfg.lyapunov;
    r.get("eta_fraction", s.eta_fraction);
    r.get("a", s.a);
    r.get("c", s.c);
    r.get("kappa", s.kappa);
    r.get("horizon", s.horizon);
    r.get("samples", s.samples);
    r.get("paths", s.paths);
    r.get("start_radius", s.start_radius);
  });
  section(top, "diophantine", [&](Reader& r) {
    auto& s = cfg.diophantine;
    r.get("alpha", s.alpha);
    r.get("K", s.K);
    r.get("A", s.A);
    r.get("kmax", s.kmax);
    r.get("counts", s.counts);
    r.get("max_slope", s.max_slope);
  });
  section(top, "lemmas", [&](Reader& r) {
    r.get("multinomial_draws", cfg.lemmas.multinomial_draws);
    r.get("holder_draws", cfg.lemmas.holder_draws);
    r.get("multinomial_tolerance", cfg.lemmas.multinomial_tolerance);
  });
  top.finish();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

nlohmann::ordered_json canonical_json(const RunConfig& c) {
  using J = nlohmann::ordered_json;
  J j;
  j["seed"] = c.seed;
  j["model"] = {{"truncation", c.truncation}, {"nu", c.nu}, {"dt", c.dt}, {"nonlinear", c.nonlinear}};
  J terms = J::array();
  for (const auto& t : c.force)
    terms.push_back({{"m", t.m},
                     {"h", t.sin_in_h ? "sin" : "cos"},
                     {"k", {t.k1, t.k2}},
                     {"x", t.sin_in_x ? "sin" : "cos"},
                     {"amp", t.amp}});
  j["force"] = {{"alpha", model_frequency(c).alpha}, {"holder_gamma", c.holder_gamma}, {"terms", terms}};
  J dirs = J::array();
  for (const auto& d : c.noise_directions)
    dirs.push_back({{"k", {d.k1, d.k2}}, {"x", d.sin_in_x ? "sin" : "cos"}, {"amp", d.amp}});
  j["noise"] = {{"kind", c.noise_kind}, {"amp", c.noise_amp}, {"directions", dirs}};
  j["simulate"] = {{"horizon", c.simulate.horizon},
                   {"sample_interval", c.simulate.sample_interval},
                   {"start_radius", c.simulate.start_radius}};
  const auto& iv = c.invariant;
  j["invariant"] = {{"particles", iv.particles},         {"t_back", iv.t_back},
                    {"resolution", iv.resolution},       {"stabilization_tol", iv.stabilization_tol},
                    {"symmetrize", iv.symmetrize},       {"cost_eta", iv.cost_eta}};
  const auto& mx = c.mixing;
  j["mixing"] = {{"particles", mx.particles},   {"horizon", mx.horizon}, {"samples", mx.samples},
                 {"start_radius", mx.start_radius}, {"cost_eta", mx.cost_eta}, {"min_r2", mx.min_r2},
                 {"min_decades", mx.min_decades}};
  const auto& sl = c.slln;
  j["slln"] = {{"observable", sl.observable}, {"horizons", sl.horizons}, {"paths", sl.paths},
               {"moments", sl.moments},       {"slope_min", sl.slope_min}, {"slope_max", sl.slope_max}};
  const auto& cl = c.clt;
  j["clt"] = {{"observable", cl.observable},   {"horizon", cl.horizon},
              {"paths", cl.paths},             {"sweep", cl.sweep},
              {"ks_tolerance", cl.ks_tolerance}, {"t_chi", cl.t_chi},
              {"corrector_paths", cl.corrector_paths}, {"max_particles", cl.max_particles}};
  j["hormander"] = {{"max_generations", c.hormander.max_generations},
                    {"tolerance", c.hormander.tolerance},
                    {"truncation", c.hormander.truncation}};
  const auto& at = c.attractor;
  j["attractor"] = {{"c0", at.c0},         {"seeds", at.seeds},         {"initial_depth", at.initial_depth},
                    {"doublings", at.doublings}, {"tolerance", at.tolerance}, {"radius", at.radius},
                    {"horizon", at.horizon},  {"samples", at.samples},     {"starts", at.starts},
                    {"shift", at.shift},      {"p", at.p},                 {"separations", at.separations},
                    {"h0", at.h0}};
  const auto& ly = c.lyapunov;
  j["lyapunov"] = {{"eta_fraction", ly.eta_fraction}, {"a", ly.a},         {"c", ly.c},
                   {"kappa", ly.kappa},               {"horizon", ly.horizon}, {"samples", ly.samples},
                   {"paths", ly.paths},               {"start_radius", ly.start_radius}};
  const auto& di = c.diophantine;
  j["diophantine"] = {{"alpha", di.alpha.empty() ? std::vector<double>{(std::sqrt(5.0) - 1.0) / 2.0} : di.alpha},
                      {"K", di.K},
                      {"A", di.A},
                      {"kmax", di.kmax},
                      {"counts", di.counts},
                      {"max_slope", di.max_slope}};
  j["lemmas"] = {{"multinomial_draws", c.lemmas.multinomial_draws},
                 {"holder_draws", c.lemmas.holder_draws},
                 {"multinomial_tolerance", c.lemmas.multinomial_tolerance}};
  return j;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, x >>= 4) s[static_cast<std::size_t>(i)] = digits[x & 15];
  return s;
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(canonical_json(cfg).dump())); }

Frequency model_frequency(const RunConfig& cfg) {
  if (!cfg.alpha.empty()) return Frequency{cfg.alpha};
  return Frequency{{(std::sqrt(5.0) - 1.0) / 2.0, std::numbers::sqrt2 - 1.0}};
}

Model build_model(const RunConfig& cfg) {
  try {
    const auto lat = ModeLattice::make(cfg.truncation);
    SimConfig sim{cfg.nu, cfg.dt, lat, cfg.nonlinear};
    sim.validate();
    auto force = QuasiPeriodicForce::from_specs(model_frequency(cfg), lat, cfg.force, cfg.holder_gamma);
    const std::uint64_t noise_seed = derive_seed(cfg.seed, 1);
    NoiseConfig noise;
    if (cfg.noise_kind == "canonical") {
      noise = canonical_noise(lat, cfg.noise_amp > 0.0 ? cfg.noise_amp : 1.0, noise_seed);
    } else if (cfg.noise_kind == "directions") {
      noise.seed = noise_seed;
      for (const auto& d : cfg.noise_directions)
        noise.directions.push_back(d.sin_in_x ? SpectralVorticity::sin_mode(lat, d.k1, d.k2, d.amp)
                                              : SpectralVorticity::cos_mode(lat, d.k1, d.k2, d.amp));
    } else {
      noise.seed = noise_seed;
    }
    Model model(sim, std::move(force), std::move(noise));
    return cfg.noise_kind == "canonical" && cfg.noise_amp == 0.0 ? model.without_noise() : model;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  }
}

}  // namespace qpns::cli
