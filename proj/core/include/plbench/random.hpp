#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace plbench {

/// Mixes (seed, tag, index) into an independent substream seed.
///
/// Every randomized component derives its own stream this way, so results
/// never depend on the order in which components consume randomness.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

/// Thin wrapper over a 64-bit Mersenne twister with the few draws the
/// library needs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                 // [0, 1)
  double normal();                  // standard normal
  double gamma(double shape);       // scale 1
  bool bernoulli(double p);
  std::size_t index(std::size_t n);  // uniform in [0, n)
  std::uint64_t next_u64() { return engine_(); }

  std::vector<double> normal_vector(std::size_t n);
  std::vector<double> dirichlet(std::size_t k, double alpha);

  /// Fisher-Yates shuffle driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace plbench
