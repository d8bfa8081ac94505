#include <algorithm>

#include "model_internal.hpp"
#include "plbench/bt.hpp"
#include "plbench/error.hpp"
#include "plbench/models.hpp"
#include "plbench/nn.hpp"
#include "plbench/synthgen.hpp"

namespace plbench {

OptimConfig default_gpo_optim() {
  OptimConfig c;
  c.learning_rate = 3e-3;
  c.epochs = 400;
  c.patience = 0;
  return c;
}

MethodKind parse_method(const std::string& text) {
  if (text == "vanilla") return MethodKind::kVanilla;
  if (text == "individual") return MethodKind::kIndividual;
  if (text == "conditional") return MethodKind::kConditional;
  if (text == "prm") return MethodKind::kPrm;
  if (text == "vpl") return MethodKind::kVpl;
  if (text == "gpo") return MethodKind::kGpo;
  if (text == "knn" || text == "rag") return MethodKind::kKnn;
  throw UsageError("unknown method '" + text +
                   "' (expected vanilla, individual, conditional, prm, vpl, gpo or knn)");
}

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::kVanilla: return "vanilla";
    case MethodKind::kIndividual: return "individual";
    case MethodKind::kConditional: return "conditional";
    case MethodKind::kPrm: return "prm";
    case MethodKind::kVpl: return "vpl";
    case MethodKind::kGpo: return "gpo";
    case MethodKind::kKnn: return "knn";
  }
  return "unknown";
}

MethodKind PreferenceModel::kind() const { return static_cast<MethodKind>(model.index()); }

Json to_json(const MethodOptions& o) {
  Json j;
  j["optim"] = to_json(o.optim);
  j["prm"] = {{"alpha", o.prm.alpha},
              {"hidden", o.prm.hidden},
              {"user_dim", o.prm.user_dim},
              {"embedding_init", o.prm.embedding_init}};
  j["vpl"] = {{"latent", o.vpl.latent},
              {"beta", o.vpl.beta},
              {"context", o.vpl.context},
              {"hidden", o.vpl.hidden}};
  j["gpo"] = {{"context", o.gpo.context},
              {"width", o.gpo.width},
              {"heads", o.gpo.heads},
              {"layers", o.gpo.layers},
              {"context_min", o.gpo.context_min},
              {"context_max", o.gpo.context_max},
              {"queries_per_episode", o.gpo.queries_per_episode},
              {"episodes_per_epoch", o.gpo.episodes_per_epoch}};
  j["knn_k"] = o.knn_k;
  return j;
}

namespace {

template <typename T>
void read_field(const Json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

MethodOptions method_options_from_json(const Json& j) {
  MethodOptions o;
  try {
    if (j.contains("optim")) o.optim = optim_config_from_json(j.at("optim"));
    if (j.contains("prm")) {
      const auto& p = j.at("prm");
      read_field(p, "alpha", o.prm.alpha);
      read_field(p, "hidden", o.prm.hidden);
      read_field(p, "user_dim", o.prm.user_dim);
      read_field(p, "embedding_init", o.prm.embedding_init);
    }
    if (j.contains("vpl")) {
      const auto& v = j.at("vpl");
      read_field(v, "latent", o.vpl.latent);
      read_field(v, "beta", o.vpl.beta);
      read_field(v, "context", o.vpl.context);
      read_field(v, "hidden", o.vpl.hidden);
    }
    if (j.contains("gpo")) {
      const auto& g = j.at("gpo");
      read_field(g, "context", o.gpo.context);
      read_field(g, "width", o.gpo.width);
      read_field(g, "heads", o.gpo.heads);
      read_field(g, "layers", o.gpo.layers);
      read_field(g, "context_min", o.gpo.context_min);
      read_field(g, "context_max", o.gpo.context_max);
      read_field(g, "queries_per_episode", o.gpo.queries_per_episode);
      read_field(g, "episodes_per_epoch", o.gpo.episodes_per_epoch);
    }
    read_field(j, "knn_k", o.knn_k);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed method options: ") + e.what());
  }
  return o;
}

PreferenceModel train_method(MethodKind kind, const PreferenceDataset& train,
                             const PreferenceDataset* validation, const MethodOptions& o) {
  switch (kind) {
    case MethodKind::kVanilla: return train_vanilla(train, o.optim, validation);
    case MethodKind::kIndividual: return train_individual(train, o.optim, validation);
    case MethodKind::kConditional: return train_conditional(train, o.optim, validation);
    case MethodKind::kPrm: return train_prm(train, o.prm, o.optim, validation);
    case MethodKind::kVpl: return train_vpl(train, o.vpl, o.optim, validation);
    case MethodKind::kGpo: return train_gpo_lite(train, o.gpo, o.optim, validation);
    case MethodKind::kKnn: return build_knn(train, o.knn_k);
  }
  throw UsageError("unknown method");
}

void attach_context(PreferenceModel& model, const std::string& user_id,
                    const PreferenceDataset& pairs) {
  if (pairs.empty()) throw DataError("no context pairs for user '" + user_id + "'");
  if (pairs.dimension() != model.dimension) throw DataError("context dimension mismatch");
  if (auto* g = std::get_if<GpoModel>(&model.model)) {
    g->contexts[user_id] = to_context_pairs(pairs);
  } else if (std::holds_alternative<VplModel>(model.model)) {
    install_vpl_latent(model, user_id, pairs);
  } else if (auto* k = std::get_if<KnnModel>(&model.model)) {
    auto& list = k->store[user_id];
    list.clear();
    for (const auto& r : pairs.records()) list.push_back({r.x, r.y1, r.y2, r.label});
  } else {
    throw UsageError(to_string(model.kind()) + " models take no few-shot context");
  }
}

namespace {

[[noreturn]] void unseen(const std::string& user) {
  throw DataError("unseen user '" + user + "'");
}

double prm_score(const PrmModel& m, std::span<const double> phi, const std::string& user,
                 UserPolicy policy) {
  const auto trunk = nn::TwoLayerScorer::bind(m.params, "trunk");
  const auto& table = m.params.at("users.table");
  std::span<const double> e;
  auto it = std::lower_bound(m.users.begin(), m.users.end(), user);
  if (it != m.users.end() && *it == user) {
    const auto row = static_cast<std::size_t>(it - m.users.begin());
    e = std::span<const double>(table.values.data() + row * table.cols, table.cols);
  } else if (policy == UserPolicy::kUserAgnostic) {
    e = m.params.at("users.generic").values;
  } else {
    unseen(user);
  }
  std::vector<double> in(phi.begin(), phi.end());
  in.insert(in.end(), e.begin(), e.end());
  std::vector<double> act(trunk.hidden());
  return trunk.forward(m.params, in, act);
}

double vpl_score(const VplModel& m, std::span<const double> phi, const std::string& user,
                 UserPolicy policy) {
  const auto dec = nn::TwoLayerScorer::bind(m.params, "dec");
  std::vector<double> in(phi.begin(), phi.end());
  auto it = m.user_latents.find(user);
  if (it != m.user_latents.end()) {
    in.insert(in.end(), it->second.begin(), it->second.end());
  } else if (policy == UserPolicy::kUserAgnostic || m.config.latent == 0) {
    in.resize(phi.size() + m.config.latent, 0.0);  // prior mean
  } else {
    unseen(user);
  }
  std::vector<double> act(dec.hidden());
  return dec.forward(m.params, in, act);
}

}  // namespace

double score(const PreferenceModel& model, std::span<const double> x, std::span<const double> y,
             const std::string& user, UserPolicy policy) {
  if (x.size() != model.dimension || y.size() != model.dimension) {
    throw DataError("embedding dimension " + std::to_string(y.size()) + " does not match model (" +
                    std::to_string(model.dimension) + ")");
  }
  const Embedding phi = feature_map(x, y);
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, VanillaModel>) {
          return nn::dot(m.w, phi);
        } else if constexpr (std::is_same_v<T, IndividualModel>) {
          auto it = m.weights.find(user);
          if (it == m.weights.end()) unseen(user);
          return nn::dot(it->second, phi);
        } else if constexpr (std::is_same_v<T, ConditionalModel>) {
          auto it = std::lower_bound(m.users.begin(), m.users.end(), user);
          double bias = 0.0;
          if (it != m.users.end() && *it == user) {
            bias = m.user_bias[static_cast<std::size_t>(it - m.users.begin())];
          } else if (policy == UserPolicy::kStrict) {
            unseen(user);
          }
          return bias + nn::dot(m.w, phi);
        } else if constexpr (std::is_same_v<T, PrmModel>) {
          return prm_score(m, phi, user, policy);
        } else if constexpr (std::is_same_v<T, VplModel>) {
          return vpl_score(m, phi, user, policy);
        } else {
          throw UsageError(to_string(model.kind()) + " is not a score-based model");
        }
      },
      model.model);
}

ScoredPair score_pair(const PreferenceModel& model, const ComparisonRecord& r, UserPolicy policy) {
  if (const auto* g = std::get_if<GpoModel>(&model.model)) {
    auto it = g->contexts.find(r.user_id);
    if (it == g->contexts.end()) throw DataError("no context for user '" + r.user_id + "'");
    Embedding gap(2 * model.dimension);
    feature_gap(r.x, r.y1, r.y2, gap);
    return ScoredPair{gpo_predict(*g, it->second, gap), std::nullopt, std::nullopt};
  }
  if (const auto* k = std::get_if<KnnModel>(&model.model)) {
    return knn_predict(*k, r.user_id, r.x, r.y1, r.y2);
  }
  const double r1 = score(model, r.x, r.y1, r.user_id, policy);
  const double r2 = score(model, r.x, r.y2, r.user_id, policy);
  return ScoredPair{bt_prob(r1, r2), r1, r2};
}

int predict(const PreferenceModel& model, const ComparisonRecord& record, std::uint64_t tie_seed,
            UserPolicy policy) {
  const ScoredPair s = score_pair(model, record, policy);
  if (s.r1 && s.r2) {
    if (*s.r1 > *s.r2) return 1;
    if (*s.r1 < *s.r2) return 0;
  } else {
    if (s.p_prefer_y1 > 0.5) return 1;
    if (s.p_prefer_y1 < 0.5) return 0;
  }
  Rng coin(tie_seed);
  return coin.bernoulli(0.5) ? 1 : 0;
}

std::vector<std::string> known_users(const PreferenceModel& model) {
  std::vector<std::string> out;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IndividualModel>) {
          for (const auto& [u, w] : m.weights) out.push_back(u);
        } else if constexpr (std::is_same_v<T, ConditionalModel> || std::is_same_v<T, PrmModel>) {
          out = m.users;
        } else if constexpr (std::is_same_v<T, VplModel>) {
          for (const auto& [u, z] : m.user_latents) out.push_back(u);
        } else if constexpr (std::is_same_v<T, GpoModel>) {
          for (const auto& [u, c] : m.contexts) out.push_back(u);
        } else if constexpr (std::is_same_v<T, KnnModel>) {
          for (const auto& [u, s] : m.store) out.push_back(u);
        }
      },
      model.model);
  return out;
}

}  // namespace plbench
