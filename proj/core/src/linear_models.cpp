#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>

#include "plbench/bt.hpp"
#include "plbench/characterize.hpp"
#include "plbench/error.hpp"
#include "plbench/models.hpp"
#include "plbench/nn.hpp"
#include "plbench/synthgen.hpp"

namespace plbench {
namespace {

constexpr const char* kWeights = "w";
constexpr const char* kUserBias = "user_bias";

Json linear_config(const char* method, const OptimConfig& optim) {
  Json j;
  j["method"] = method;
  j["optim"] = to_json(optim);
  return j;
}

}  // namespace

PairFeatures make_pair_features(const PreferenceDataset& data, std::span<const std::string> users,
                                bool skip_unknown) {
  PairFeatures f;
  f.feature_dim = 2 * data.dimension();
  f.users.assign(users.begin(), users.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < users.size(); ++i) index.emplace(users[i], i);
  f.plus.reserve(data.size() * f.feature_dim);
  f.minus.reserve(data.size() * f.feature_dim);
  for (const auto& r : data.records()) {
    auto it = index.find(r.user_id);
    if (it == index.end()) {
      if (skip_unknown) continue;
      throw DataError("unseen user '" + r.user_id + "'");
    }
    Embedding p1 = feature_map(r.x, r.y1);
    Embedding p2 = feature_map(r.x, r.y2);
    const Embedding& win = r.label == 1 ? p1 : p2;
    const Embedding& lose = r.label == 1 ? p2 : p1;
    f.plus.insert(f.plus.end(), win.begin(), win.end());
    f.minus.insert(f.minus.end(), lose.begin(), lose.end());
    f.user_index.push_back(it->second);
  }
  return f;
}

ParamSet LinearBtObjective::init(std::size_t feature_dim) {
  ParamSet p;
  p.add(kWeights, feature_dim);
  return p;
}

double LinearBtObjective::evaluate(const ParamSet& params, std::span<const std::size_t> batch,
                                   ParamSet* grad, std::uint64_t) const {
  auto w = params.values(0);
  std::vector<ScorePair> scores(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    scores[b] = {nn::dot(w, f_.plus_row(batch[b])), nn::dot(w, f_.minus_row(batch[b]))};
  }
  BtLoss l = bt_loss(scores);
  if (grad != nullptr) {
    auto gw = grad->values(0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto p = f_.plus_row(batch[b]);
      auto m = f_.minus_row(batch[b]);
      for (std::size_t k = 0; k < gw.size(); ++k) {
        gw[k] += l.grad[b].r_plus * p[k] + l.grad[b].r_minus * m[k];
      }
    }
  }
  return l.loss;
}

ParamSet ConditionalObjective::init(std::size_t n_users, std::size_t feature_dim) {
  ParamSet p;
  p.add(kUserBias, n_users);
  p.add(kWeights, feature_dim);
  return p;
}

double ConditionalObjective::evaluate(const ParamSet& params, std::span<const std::size_t> batch,
                                      ParamSet* grad, std::uint64_t) const {
  auto bias = params.values(0);
  auto w = params.values(1);
  std::vector<ScorePair> scores(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double bu = bias[f_.user_index[batch[b]]];
    scores[b] = {bu + nn::dot(w, f_.plus_row(batch[b])), bu + nn::dot(w, f_.minus_row(batch[b]))};
  }
  BtLoss l = bt_loss(scores);
  if (grad != nullptr) {
    auto gb = grad->values(0);
    auto gw = grad->values(1);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      // The user bias enters both responses, so its two terms cancel.
      gb[f_.user_index[batch[b]]] += l.grad[b].r_plus + l.grad[b].r_minus;
      auto p = f_.plus_row(batch[b]);
      auto m = f_.minus_row(batch[b]);
      for (std::size_t k = 0; k < gw.size(); ++k) {
        gw[k] += l.grad[b].r_plus * p[k] + l.grad[b].r_minus * m[k];
      }
    }
  }
  return l.loss;
}

PreferenceDataset aggregate_majority(const PreferenceDataset& dataset) {
  // Triples in order of first appearance; first annotation per user.
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> first_record;
  std::unordered_map<std::string, std::vector<Annotation>> anns;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    auto [it, inserted] = first_record.emplace(r.triple_id, i);
    if (inserted) order.push_back(r.triple_id);
    auto& list = anns[r.triple_id];
    bool seen = std::any_of(list.begin(), list.end(),
                            [&](const Annotation& a) { return a.user_id == r.user_id; });
    if (!seen) list.push_back({r.user_id, r.label});
  }
  std::vector<ComparisonRecord> out;
  for (const auto& id : order) {
    const auto& list = anns[id];
    auto majority = majority_label(list);
    if (!majority) continue;
    ComparisonRecord rec = dataset[first_record[id]];
    rec.user_id = "majority";
    rec.label = *majority;
    out.push_back(std::move(rec));
  }
  return PreferenceDataset(dataset.dimension(), std::move(out), dataset.metadata());
}

Embedding finetune_linear(const Embedding& start, const PreferenceDataset& data,
                          const OptimConfig& optim, const PreferenceDataset* validation) {
  if (data.empty()) throw DataError("no training records");
  std::vector<std::string> all = data.users();
  LinearBtObjective objective(make_pair_features(data, all));
  ParamSet init = LinearBtObjective::init(2 * data.dimension());
  if (!start.empty()) {
    if (start.size() != init[0].size()) throw DataError("weight length mismatch");
    std::copy(start.begin(), start.end(), init.values(0).begin());
  }
  std::optional<LinearBtObjective> val;
  if (validation != nullptr && !validation->empty()) {
    std::vector<std::string> vusers = validation->users();
    val.emplace(make_pair_features(*validation, vusers));
  }
  TrainResult r = optimize(objective, std::move(init), optim, val ? &*val : nullptr);
  r.params.quantize_values();
  auto w = r.params.values(0);
  return Embedding(w.begin(), w.end());
}

PreferenceModel train_vanilla(const PreferenceDataset& train, const OptimConfig& optim,
                              const PreferenceDataset* validation) {
  PreferenceDataset agg = aggregate_majority(train);
  if (agg.empty()) throw DataError("majority aggregate is empty");
  std::optional<PreferenceDataset> vagg;
  if (validation != nullptr) vagg = aggregate_majority(*validation);
  PreferenceModel m;
  m.dimension = train.dimension();
  m.model = VanillaModel{finetune_linear({}, agg, optim, vagg ? &*vagg : nullptr)};
  m.config = linear_config("vanilla", optim);
  m.seed = optim.seed;
  return m;
}

PreferenceModel train_individual(const PreferenceDataset& train, const OptimConfig& optim,
                                 const PreferenceDataset* validation) {
  if (train.empty()) throw DataError("no training records");
  const auto& users = train.users();
  std::vector<Embedding> weights(users.size());
  // Every user trains with the same seed: users with identical data end up
  // with identical weights, and the result never depends on scheduling.
  std::vector<std::size_t> idx(users.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::for_each(idx.begin(), idx.end(), [&](std::size_t i) {
    const OptimConfig& c = optim;
    PreferenceDataset mine = train.for_user(users[i]);
    std::optional<PreferenceDataset> vmine;
    if (validation != nullptr) vmine = validation->for_user(users[i]);
    weights[i] = finetune_linear({}, mine, c, vmine ? &*vmine : nullptr);
  });
  IndividualModel model;
  for (std::size_t i = 0; i < users.size(); ++i) model.weights[users[i]] = std::move(weights[i]);
  PreferenceModel m;
  m.dimension = train.dimension();
  m.model = std::move(model);
  m.config = linear_config("individual", optim);
  m.seed = optim.seed;
  return m;
}

PreferenceModel train_conditional(const PreferenceDataset& train, const OptimConfig& optim,
                                  const PreferenceDataset* validation) {
  if (train.empty()) throw DataError("no training records");
  const auto& users = train.users();
  ConditionalObjective objective(make_pair_features(train, users));
  std::optional<ConditionalObjective> val;
  if (validation != nullptr && !validation->empty()) {
    val.emplace(make_pair_features(*validation, users, /*skip_unknown=*/true));
    if (val->size() == 0) val.reset();
  }
  TrainResult r = optimize(objective, ConditionalObjective::init(users.size(), 2 * train.dimension()),
                           optim, val ? &*val : nullptr);
  r.params.quantize_values();
  ConditionalModel model;
  model.users = users;
  model.user_bias.assign(r.params.values(0).begin(), r.params.values(0).end());
  model.w.assign(r.params.values(1).begin(), r.params.values(1).end());
  PreferenceModel m;
  m.dimension = train.dimension();
  m.model = std::move(model);
  m.config = linear_config("conditional", optim);
  m.seed = optim.seed;
  return m;
}

PreferenceModel adapt_finetune(const PreferenceModel& vanilla,
                               const PreferenceDataset& new_user_pairs, OptimConfig optim) {
  const auto* v = std::get_if<VanillaModel>(&vanilla.model);
  if (v == nullptr) throw UsageError("fine-tune baseline needs a vanilla model");
  if (new_user_pairs.empty()) throw DataError("no new-user pairs");
  if (new_user_pairs.dimension() != vanilla.dimension) throw DataError("dimension mismatch");
  optim.epochs = 1;
  optim.patience = 0;
  PreferenceModel out = vanilla;
  std::get<VanillaModel>(out.model).w = finetune_linear(v->w, new_user_pairs, optim);
  return out;
}

SimilarUserChoice adapt_similar_user(const PreferenceModel& individual,
                                     const PreferenceDataset& new_user_pairs) {
  const auto* ind = std::get_if<IndividualModel>(&individual.model);
  if (ind == nullptr) throw UsageError("similar-user baseline needs an individual model");
  if (ind->weights.empty()) throw DataError("individual model has no users");
  if (new_user_pairs.empty()) throw DataError("no new-user pairs");
  SimilarUserChoice best{"", -1.0};
  Embedding gap(2 * new_user_pairs.dimension());
  std::vector<Embedding> gaps;
  gaps.reserve(new_user_pairs.size());
  for (const auto& r : new_user_pairs.records()) {
    feature_gap(r.x, r.y1, r.y2, gap);
    gaps.push_back(gap);
  }
  // std::map iterates in lexicographic order, so strict '>' keeps the
  // smallest id on ties.
  for (const auto& [user, w] : ind->weights) {
    double agree = 0.0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      const double s = nn::dot(w, gaps[i]);
      // A zero score gap is a tie and earns half credit.
      if (s == 0.0) {
        agree += 0.5;
      } else {
        agree += (s > 0.0 ? 1 : 0) == new_user_pairs[i].label ? 1.0 : 0.0;
      }
    }
    const double rate = agree / static_cast<double>(gaps.size());
    if (rate > best.agreement) best = {user, rate};
  }
  return best;
}

}  // namespace plbench
