#include <algorithm>
#include <cmath>
#include <numeric>

#include "plbench/error.hpp"
#include "plbench/models.hpp"
#include "plbench/nn.hpp"

namespace plbench {

PreferenceModel build_knn(const PreferenceDataset& train, std::size_t k) {
  if (k == 0) throw UsageError("k must be >= 1");
  if (train.empty()) throw DataError("empty store");
  KnnModel model;
  model.k = k;
  for (const auto& r : train.records()) {
    model.store[r.user_id].push_back(KnnExample{r.x, r.y1, r.y2, r.label});
  }
  PreferenceModel m;
  m.dimension = train.dimension();
  m.model = std::move(model);
  Json j;
  j["method"] = "knn";
  j["k"] = k;
  m.config = std::move(j);
  return m;
}

ScoredPair knn_predict(const KnnModel& store, const std::string& user, std::span<const double> x,
                       std::span<const double> y1, std::span<const double> y2) {
  auto it = store.store.find(user);
  if (it == store.store.end() || it->second.empty()) {
    throw DataError("no examples for user '" + user + "'");
  }
  const auto& examples = it->second;
  const double xn = std::sqrt(nn::dot(x, x));
  std::vector<double> sim(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const double en = std::sqrt(nn::dot(examples[i].x, examples[i].x));
    sim[i] = (xn == 0.0 || en == 0.0) ? 0.0 : nn::dot(x, examples[i].x) / (xn * en);
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(store.k, order.size());
  // Highest similarity first; equal similarities keep store order.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return sim[a] != sim[b] ? sim[a] > sim[b] : a < b;
                    });
  std::vector<double> weight(k), vote(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto& e = examples[order[j]];
    const auto& win = e.label == 1 ? e.y1 : e.y2;
    const auto& lose = e.label == 1 ? e.y2 : e.y1;
    double s = 0.0;
    for (std::size_t c = 0; c < y1.size(); ++c) s += (y1[c] - y2[c]) * (win[c] - lose[c]);
    vote[j] = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
    weight[j] = std::max(sim[order[j]], 0.0);
  }
  double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
  if (wsum == 0.0) {
    std::fill(weight.begin(), weight.end(), 1.0);
    wsum = static_cast<double>(k);
  }
  double v = 0.0;
  for (std::size_t j = 0; j < k; ++j) v += weight[j] * vote[j];
  ScoredPair out;
  out.p_prefer_y1 = std::clamp((v / wsum + 1.0) / 2.0, 0.0, 1.0);
  return out;
}

}  // namespace plbench
