#include "output.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "qpns/error.hpp"

namespace qpns::cli {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

OutputDir::OutputDir(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::string file_digest(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a(ss.str()));
}

void OutputDir::record_file(const std::string& rel) {
  const auto digest = file_digest(root_ / rel);
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.path == rel; });
  if (it != entries_.end()) it->digest = digest;
  else entries_.push_back({rel, digest});
}

void OutputDir::write_text(const std::string& rel, const std::string& content) {
  const auto p = root_ / rel;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
  out.close();
  record_file(rel);
}

void OutputDir::write_json(const std::string& rel, const nlohmann::ordered_json& j) { write_text(rel, j.dump(2) + "\n"); }

void OutputDir::write_csv(const std::string& rel, const std::vector<std::string>& header,
                          const std::vector<std::vector<double>>& rows) {
  std::string s;
  for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
  s += "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw Error("csv row width mismatch in " + rel);
    for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + format_double(row[i]);
    s += "\n";
  }
  write_text(rel, s);
}

void OutputDir::record_tree(const std::string& rel) {
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root_ / rel))
    if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), root_).generic_string());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) record_file(f);
}

}  // namespace qpns::cli
