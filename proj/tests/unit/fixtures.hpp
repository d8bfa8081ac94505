#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "plbench/dataset.hpp"
#include "plbench/random.hpp"

namespace fixtures {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("plbench-unit-" + tag + "-" + std::to_string(plbench::derive_seed(
                                                reinterpret_cast<std::uintptr_t>(this), tag)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline plbench::Embedding random_vec(std::size_t d, plbench::Rng& rng) {
  return rng.normal_vector(d);
}

// n_triples random triples of dimension d, each annotated by every user with
// a coin-flip label.
inline plbench::PreferenceDataset coin_dataset(std::size_t d, std::size_t n_users,
                                               std::size_t n_triples, std::uint64_t seed) {
  plbench::Rng rng(seed);
  std::vector<plbench::ComparisonRecord> records;
  for (std::size_t t = 0; t < n_triples; ++t) {
    auto x = random_vec(d, rng), y1 = random_vec(d, rng), y2 = random_vec(d, rng);
    for (std::size_t u = 0; u < n_users; ++u) {
      records.push_back(plbench::make_record("u" + std::to_string(u), x, y1, y2,
                                             rng.bernoulli(0.5) ? 1 : 0));
    }
  }
  return plbench::PreferenceDataset(d, std::move(records));
}

// Records labeled by a fixed linear utility w . concat(y, x*y), one user per
// entry of `users`; `flip` users get the opposite label.
plbench::PreferenceDataset linear_dataset(const plbench::Embedding& w, std::size_t n_triples,
                                          const std::vector<std::string>& users,
                                          const std::vector<bool>& flip, std::uint64_t seed);

}  // namespace fixtures
