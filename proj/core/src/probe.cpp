#include <cmath>

#include "plbench/error.hpp"
#include "plbench/eval.hpp"
#include "plbench/nn.hpp"

namespace plbench {

ProbeSet build_probe_set(std::span<const Archetype> archetypes, std::size_t dimension,
                         std::size_t n_probes, double margin, std::uint64_t seed,
                         std::size_t max_draws) {
  if (!(margin >= 0.0)) throw UsageError("probe margin must be >= 0");
  if (archetypes.empty()) throw UsageError("probe set needs at least one archetype");
  for (const auto& a : archetypes) {
    if (a.utility.size() != 2 * dimension) throw DataError("archetype length mismatch");
  }
  Rng rng(derive_seed(seed, "probe"));
  std::vector<ComparisonRecord> records;
  Embedding gap(2 * dimension);
  std::size_t draws = 0;
  while (records.size() < n_probes) {
    if (draws++ >= max_draws) {
      throw DataError("probe sampling budget exhausted after " + std::to_string(max_draws) +
                      " draws with " + std::to_string(records.size()) + " of " +
                      std::to_string(n_probes) + " probes (margin too large?)");
    }
    Embedding x = sample_unit_vector(dimension, rng);
    Embedding y1 = sample_unit_vector(dimension, rng);
    Embedding y2 = sample_unit_vector(dimension, rng);
    quantize_in_place(x);
    quantize_in_place(y1);
    quantize_in_place(y2);
    feature_gap(x, y1, y2, gap);
    int sign = 0;
    bool ok = true;
    for (const auto& a : archetypes) {
      const double du = nn::dot(a.utility, gap);
      const int s = du > 0.0 ? 1 : (du < 0.0 ? -1 : 0);
      if (std::abs(du) < margin || s == 0 || (sign != 0 && s != sign)) {
        ok = false;
        break;
      }
      sign = s;
    }
    if (!ok) continue;
    records.push_back(make_record("probe", std::move(x), std::move(y1), std::move(y2), sign > 0 ? 1 : 0));
  }
  ProbeSet out;
  out.margin = margin;
  DatasetMetadata meta;
  meta.generator = {{"generator", "probe"}, {"margin", margin}, {"n_probes", n_probes}};
  meta.seed = seed;
  out.dataset = PreferenceDataset(dimension, std::move(records), std::move(meta));
  return out;
}

}  // namespace plbench
