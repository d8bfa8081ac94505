#include <algorithm>
#include <cmath>

#include "plbench/bt.hpp"
#include "plbench/error.hpp"
#include "plbench/models.hpp"
#include "plbench/nn.hpp"

namespace plbench {
namespace {

constexpr const char* kTrunk = "trunk";
constexpr const char* kTable = "users.table";
constexpr const char* kGeneric = "users.generic";

// Scratch for one trunk evaluation: the input concat(features, e) and the
// hidden activations.
struct Pass {
  std::vector<double> in;
  std::vector<double> act;
  double score = 0.0;
};

}  // namespace

ParamSet PrmObjective::init(const PrmConfig& config, std::size_t n_users, std::size_t feature_dim,
                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, "prm-init"));
  ParamSet p;
  nn::TwoLayerScorer::create(p, kTrunk, feature_dim + config.user_dim, config.hidden, rng);
  p.add_normal(kTable, n_users, config.user_dim, config.embedding_init, rng);
  p.add_normal(kGeneric, config.user_dim, 1, config.embedding_init, rng);
  return p;
}

double PrmObjective::evaluate(const ParamSet& params, std::span<const std::size_t> batch,
                              ParamSet* grad, std::uint64_t) const {
  const auto trunk = nn::TwoLayerScorer::bind(params, kTrunk);
  const std::size_t table = params.index_of(kTable);
  const std::size_t generic = params.index_of(kGeneric);
  const std::size_t fd = f_.feature_dim;
  const std::size_t ed = params[table].cols;
  const std::size_t n = batch.size();

  // passes[4 * b + k]: k = 0/1 user branch (+/-), k = 2/3 generic branch (+/-).
  std::vector<Pass> passes(4 * n);
  std::vector<ScorePair> user_scores(n);
  std::vector<ScorePair> generic_scores(n);
  auto table_vals = params.values(table);
  auto generic_vals = params.values(generic);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t i = batch[b];
    std::span<const double> eu(table_vals.data() + f_.user_index[i] * ed, ed);
    for (std::size_t k = 0; k < 4; ++k) {
      Pass& p = passes[4 * b + k];
      auto phi = (k % 2 == 0) ? f_.plus_row(i) : f_.minus_row(i);
      auto e = k < 2 ? eu : generic_vals;
      p.in.assign(phi.begin(), phi.end());
      p.in.insert(p.in.end(), e.begin(), e.end());
      p.act.resize(trunk.hidden());
      p.score = trunk.forward(params, p.in, p.act);
    }
    user_scores[b] = {passes[4 * b].score, passes[4 * b + 1].score};
    generic_scores[b] = {passes[4 * b + 2].score, passes[4 * b + 3].score};
  }
  BtLoss lu = bt_loss(user_scores);
  BtLoss lg = bt_loss(generic_scores);
  const double loss = alpha_ * lu.loss + (1.0 - alpha_) * lg.loss;
  if (grad == nullptr) return loss;

  auto gtable = grad->values(table);
  auto ggeneric = grad->values(generic);
  std::vector<double> din(fd + ed);
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t u = f_.user_index[batch[b]];
    const double ds[4] = {alpha_ * lu.grad[b].r_plus, alpha_ * lu.grad[b].r_minus,
                          (1.0 - alpha_) * lg.grad[b].r_plus, (1.0 - alpha_) * lg.grad[b].r_minus};
    for (std::size_t k = 0; k < 4; ++k) {
      // A zero weight (alpha at 0 or 1) contributes nothing at all, which keeps
      // the limiting-case gradients exactly zero.
      if (ds[k] == 0.0) continue;
      const Pass& p = passes[4 * b + k];
      std::fill(din.begin(), din.end(), 0.0);
      trunk.backward(params, p.in, p.act, ds[k], *grad, din);
      double* de = k < 2 ? gtable.data() + u * ed : ggeneric.data();
      for (std::size_t j = 0; j < ed; ++j) de[j] += din[fd + j];
    }
  }
  return loss;
}

PreferenceModel train_prm(const PreferenceDataset& train, const PrmConfig& config,
                          const OptimConfig& optim, const PreferenceDataset* validation) {
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  if (config.hidden == 0 || config.user_dim == 0) {
    throw UsageError("PRM hidden width and user dimension must be >= 1");
  }
  if (train.empty()) throw DataError("no training records");
  const auto& users = train.users();
  PrmObjective objective(make_pair_features(train, users), config.alpha);
  std::optional<PrmObjective> val;
  if (validation != nullptr && !validation->empty()) {
    val.emplace(make_pair_features(*validation, users, /*skip_unknown=*/true), config.alpha);
    if (val->size() == 0) val.reset();
  }
  ParamSet init = PrmObjective::init(config, users.size(), 2 * train.dimension(), optim.seed);
  TrainResult r = optimize(objective, std::move(init), optim, val ? &*val : nullptr);
  r.params.quantize_values();

  PrmModel model;
  model.config = config;
  model.users = users;
  model.params = std::move(r.params);
  PreferenceModel m;
  m.dimension = train.dimension();
  m.model = std::move(model);
  Json j;
  j["method"] = "prm";
  j["alpha"] = config.alpha;
  j["hidden"] = config.hidden;
  j["user_dim"] = config.user_dim;
  j["optim"] = to_json(optim);
  m.config = std::move(j);
  m.seed = optim.seed;
  return m;
}

}  // namespace plbench
