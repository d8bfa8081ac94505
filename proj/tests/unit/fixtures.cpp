#include "fixtures.hpp"

#include "plbench/synthgen.hpp"

namespace fixtures {

plbench::PreferenceDataset linear_dataset(const plbench::Embedding& w, std::size_t n_triples,
                                          const std::vector<std::string>& users,
                                          const std::vector<bool>& flip, std::uint64_t seed) {
  const std::size_t d = w.size() / 2;
  plbench::Rng rng(seed);
  std::vector<plbench::ComparisonRecord> records;
  for (std::size_t t = 0; t < n_triples; ++t) {
    auto x = random_vec(d, rng), y1 = random_vec(d, rng), y2 = random_vec(d, rng);
    const auto f1 = plbench::feature_map(x, y1), f2 = plbench::feature_map(x, y2);
    double gap = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) gap += w[i] * (f1[i] - f2[i]);
    for (std::size_t u = 0; u < users.size(); ++u) {
      int label = gap > 0 ? 1 : 0;
      if (flip[u]) label = 1 - label;
      records.push_back(plbench::make_record(users[u], x, y1, y2, label));
    }
  }
  return plbench::PreferenceDataset(d, std::move(records));
}

}  // namespace fixtures
