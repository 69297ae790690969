#include "app.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "qpns/parallel.hpp"
#include "qpns/rng.hpp"

namespace qpns::cli {

namespace {

using J = nlohmann::ordered_json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Removes the files named by a previous manifest so the directory has no orphans.
void clear_previous_run(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.json";
  std::ifstream in(manifest);
  if (!in) return;
  J old;
  try {
    old = J::parse(in);
  } catch (const nlohmann::json::exception&) {
    return;
  }
  if (old.value("format", "") != "qpns-run-manifest") return;
  for (const auto& e : old.value("outputs", J::array())) std::filesystem::remove(dir / e.value("path", ""));
  std::filesystem::remove(manifest);
}

}  // namespace

bool ExperimentResult::pass() const {
  for (const auto& [k, v] : checks.items())
    if (!v.get<bool>()) return false;
  return true;
}

RunConfig apply_overrides(RunConfig cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.truncation) cfg.truncation = *o.truncation;
  cfg.validate();
  return cfg;
}

int run(const std::string& sub, const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  const auto started = utc_now();
  std::filesystem::create_directories(out_dir);
  clear_previous_run(out_dir);
  OutputDir out(out_dir);
  const auto hash = config_hash(cfg);
  J report;
  report["subcommand"] = sub;
  report["config_hash"] = hash;
  report["master_seed"] = cfg.seed;
  bool pass = false;
  try {
    auto result = run_experiment(sub, cfg, out);
    report["noise_seed"] = derive_seed(cfg.seed, 1);
    for (auto& [k, v] : result.report.items()) report[k] = v;
    report["checks"] = result.checks;
    pass = result.pass();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    report["error"] = e.what();
    report["checks"] = {{"completed", false}};
  }
  report["pass"] = pass;
  out.write_json(sub + ".json", report);
  J manifest;
  manifest["format"] = "qpns-run-manifest";
  manifest["tool_version"] = kToolVersion;
  manifest["config_hash"] = hash;
  manifest["subcommand"] = sub;
  manifest["started_utc"] = started;
  manifest["finished_utc"] = utc_now();
  manifest["threads"] = thread_count();
  auto& outputs = manifest["outputs"] = J::array();
  for (const auto& e : out.entries()) outputs.push_back({{"path", e.path}, {"fnv1a", e.digest}});
  manifest["summary"] = {{"checks", report["checks"]}, {"pass", pass}};
  std::ofstream m(std::filesystem::path(out_dir) / "manifest.json");
  m << manifest.dump(2) << "\n";
  for (const auto& [k, v] : report["checks"].items()) log << sub << ": " << k << " " << (v.get<bool>() ? "pass" : "FAIL") << "\n";
  if (report.contains("error")) log << sub << ": error: " << report["error"].get<std::string>() << "\n";
  return pass ? kExitPass : kExitCheckFailed;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quasi-periodically forced stochastic Navier-Stokes experiments", "qpns"};
  std::string sub, config_path, out_dir = "qpns_out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, truncation;
  std::string names;
  for (const auto& s : subcommands()) names += (names.empty() ? "" : ", ") + s;
  app.add_option("subcommand", sub, "one of: " + names)->required();
  app.add_option("--config", config_path, "TOML configuration (defaults when absent)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed-override", seed, "replace the master seed");
  app.add_option("--threads", threads, "worker threads (default: QPNS_THREADS or 1)")->check(CLI::PositiveNumber);
  app.add_option("--truncation-override", truncation, "replace the truncation N")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitPass;
  } catch (const CLI::ParseError& e) {
    err << "qpns: " << e.what() << "\n" << app.help();
    return kExitConfigError;
  }
  const auto& all = subcommands();
  if (std::find(all.begin(), all.end(), sub) == all.end()) {
    err << "qpns: unknown subcommand '" << sub << "'\n" << app.help();
    return kExitConfigError;
  }
  if (threads) set_thread_count(*threads);
  try {
    const auto cfg = apply_overrides(config_path.empty() ? default_config() : load_config(config_path),
                                     Overrides{seed, truncation});
    return run(sub, cfg, out_dir, out);
  } catch (const ConfigError& e) {
    err << "qpns: config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "qpns: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace qpns::cli
