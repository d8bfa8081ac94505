#include "plbench/error.hpp"
#include "plbench/models.hpp"

namespace plbench {
namespace {

constexpr int kCheckpointVersion = 1;

Json pairs_to_json(const std::vector<ContextPair>& pairs) {
  Json arr = Json::array();
  for (const auto& p : pairs) arr.push_back({{"gap", p.gap}, {"label", p.label}});
  return arr;
}

std::vector<ContextPair> pairs_from_json(const Json& j) {
  std::vector<ContextPair> out;
  for (const auto& e : j) out.push_back({e.at("gap").get<Embedding>(), e.at("label").get<int>()});
  return out;
}

Json body(const VanillaModel& m) { return {{"w", m.w}}; }

Json body(const IndividualModel& m) {
  Json w = Json::object();
  for (const auto& [u, v] : m.weights) w[u] = v;
  return {{"weights", std::move(w)}};
}

Json body(const ConditionalModel& m) {
  return {{"users", m.users}, {"user_bias", m.user_bias}, {"w", m.w}};
}

Json body(const PrmModel& m) {
  Json j;
  j["alpha"] = m.config.alpha;
  j["hidden"] = m.config.hidden;
  j["user_dim"] = m.config.user_dim;
  j["embedding_init"] = m.config.embedding_init;
  j["users"] = m.users;
  j["params"] = to_json(m.params);
  return j;
}

Json body(const VplModel& m) {
  Json j;
  j["latent"] = m.config.latent;
  j["beta"] = m.config.beta;
  j["context"] = m.config.context;
  j["hidden"] = m.config.hidden;
  j["params"] = to_json(m.params);
  Json z = Json::object();
  for (const auto& [u, v] : m.user_latents) z[u] = v;
  j["user_latents"] = std::move(z);
  return j;
}

Json body(const GpoModel& m) {
  Json j;
  j["context"] = m.config.context;
  j["width"] = m.config.width;
  j["heads"] = m.config.heads;
  j["layers"] = m.config.layers;
  j["context_min"] = m.config.context_min;
  j["context_max"] = m.config.context_max;
  j["queries_per_episode"] = m.config.queries_per_episode;
  j["episodes_per_epoch"] = m.config.episodes_per_epoch;
  j["params"] = to_json(m.params);
  Json c = Json::object();
  for (const auto& [u, pairs] : m.contexts) c[u] = pairs_to_json(pairs);
  j["contexts"] = std::move(c);
  return j;
}

Json body(const KnnModel& m) {
  Json store = Json::object();
  for (const auto& [u, list] : m.store) {
    Json arr = Json::array();
    for (const auto& e : list) {
      arr.push_back({{"x", e.x}, {"y1", e.y1}, {"y2", e.y2}, {"label", e.label}});
    }
    store[u] = std::move(arr);
  }
  return {{"k", m.k}, {"store", std::move(store)}};
}

ModelVariant variant_from_json(MethodKind kind, const Json& b) {
  switch (kind) {
    case MethodKind::kVanilla: return VanillaModel{b.at("w").get<Embedding>()};
    case MethodKind::kIndividual: {
      IndividualModel m;
      for (const auto& [u, v] : b.at("weights").items()) m.weights[u] = v.get<Embedding>();
      return m;
    }
    case MethodKind::kConditional: {
      ConditionalModel m;
      m.users = b.at("users").get<std::vector<std::string>>();
      m.user_bias = b.at("user_bias").get<Embedding>();
      m.w = b.at("w").get<Embedding>();
      if (m.user_bias.size() != m.users.size()) throw DataError("user bias length mismatch");
      return m;
    }
    case MethodKind::kPrm: {
      PrmModel m;
      m.config.alpha = b.at("alpha").get<double>();
      m.config.hidden = b.at("hidden").get<std::size_t>();
      m.config.user_dim = b.at("user_dim").get<std::size_t>();
      m.config.embedding_init = b.at("embedding_init").get<double>();
      m.users = b.at("users").get<std::vector<std::string>>();
      m.params = param_set_from_json(b.at("params"));
      if (m.params.at("users.table").rows != m.users.size()) {
        throw DataError("user table does not cover the listed users");
      }
      return m;
    }
    case MethodKind::kVpl: {
      VplModel m;
      m.config.latent = b.at("latent").get<std::size_t>();
      m.config.beta = b.at("beta").get<double>();
      m.config.context = b.at("context").get<std::size_t>();
      m.config.hidden = b.at("hidden").get<std::size_t>();
      m.params = param_set_from_json(b.at("params"));
      for (const auto& [u, v] : b.at("user_latents").items()) m.user_latents[u] = v.get<Embedding>();
      return m;
    }
    case MethodKind::kGpo: {
      GpoModel m;
      m.config.context = b.at("context").get<std::size_t>();
      m.config.width = b.at("width").get<std::size_t>();
      m.config.heads = b.at("heads").get<std::size_t>();
      m.config.layers = b.at("layers").get<std::size_t>();
      m.config.context_min = b.at("context_min").get<std::size_t>();
      m.config.context_max = b.at("context_max").get<std::size_t>();
      m.config.queries_per_episode = b.at("queries_per_episode").get<std::size_t>();
      m.config.episodes_per_epoch = b.at("episodes_per_epoch").get<std::size_t>();
      m.params = param_set_from_json(b.at("params"));
      for (const auto& [u, v] : b.at("contexts").items()) m.contexts[u] = pairs_from_json(v);
      return m;
    }
    case MethodKind::kKnn: {
      KnnModel m;
      m.k = b.at("k").get<std::size_t>();
      if (m.k == 0) throw DataError("k must be >= 1");
      for (const auto& [u, arr] : b.at("store").items()) {
        auto& list = m.store[u];
        for (const auto& e : arr) {
          list.push_back({e.at("x").get<Embedding>(), e.at("y1").get<Embedding>(),
                          e.at("y2").get<Embedding>(), e.at("label").get<int>()});
        }
      }
      return m;
    }
  }
  throw DataError("unknown model type");
}

}  // namespace

Json to_json(const PreferenceModel& model) {
  Json j;
  j["format_version"] = kCheckpointVersion;
  j["model_type"] = to_string(model.kind());
  j["dimension"] = model.dimension;
  j["seed"] = model.seed;
  j["config"] = model.config;
  j["model"] = std::visit([](const auto& m) { return body(m); }, model.model);
  return j;
}

PreferenceModel model_from_json(const Json& j) {
  try {
    if (j.at("format_version").get<int>() != kCheckpointVersion) {
      throw DataError("unsupported checkpoint format_version");
    }
    PreferenceModel m;
    MethodKind kind;
    try {
      kind = parse_method(j.at("model_type").get<std::string>());
    } catch (const UsageError& e) {
      throw DataError(std::string("checkpoint: ") + e.what());
    }
    m.dimension = j.at("dimension").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    m.model = variant_from_json(kind, j.at("model"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const PreferenceModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(model).dump() + "\n");
}

PreferenceModel load_checkpoint(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": not a checkpoint (" + e.what() + ")");
  }
  return model_from_json(j);
}

}  // namespace plbench
