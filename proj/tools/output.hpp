#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qpns::cli {

// Shortest round-trip decimal form; locale independent.
std::string format_double(double x);

// Output directory that records every file written, with its FNV-1a digest.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::string path(const std::string& rel) const { return (root_ / rel).string(); }

  void write_text(const std::string& rel, const std::string& content);
  void write_json(const std::string& rel, const nlohmann::ordered_json& j);
  void write_csv(const std::string& rel, const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& rows);
  // Registers a file written by other code, or every file below a directory (sorted by path).
  void record_file(const std::string& rel);
  void record_tree(const std::string& rel);

  struct Entry {
    std::string path;
    std::string digest;
  };
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::filesystem::path root_;
  std::vector<Entry> entries_;
};

std::string file_digest(const std::filesystem::path& p);

}  // namespace qpns::cli
