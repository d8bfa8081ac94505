#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "plbench/dataset.hpp"

namespace plbench::cli {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Collects what a run read and wrote, then commits every output and the
// manifest in one go. Nothing touches disk before commit(), so a run that
// fails midway leaves no partial artifacts.
class Run {
 public:
  Run(std::string command, std::filesystem::path out_dir, std::uint64_t seed);

  std::filesystem::path resolve(const std::filesystem::path& name) const;

  void add_input(const std::filesystem::path& path);
  void add_seed(const std::string& name, std::uint64_t value);
  void set_config(Json config) { config_ = std::move(config); }
  /// Queue `contents` for `name` (relative names land under the output dir).
  void add_output(const std::filesystem::path& name, std::string contents);

  /// Writes outputs atomically, then manifest-<command>.json. Returns the
  /// written paths, manifest last.
  std::vector<std::filesystem::path> commit();

 private:
  std::string command_;
  std::filesystem::path out_dir_;
  std::uint64_t seed_;
  Json config_ = Json::object();
  std::vector<std::pair<std::string, std::string>> inputs_;  // path, hash
  std::vector<std::pair<std::string, std::uint64_t>> seeds_;
  std::vector<std::pair<std::filesystem::path, std::string>> outputs_;
};

}  // namespace plbench::cli
