#include "plbench/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "plbench/error.hpp"

namespace plbench {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void normalize(std::vector<double>& v) {
  double n = norm(v);
  if (n > 0.0) {
    for (auto& x : v) x /= n;
  }
}

// Removes the components of v along each (unit) basis vector.
void orthogonalize(std::vector<double>& v, const std::vector<Embedding>& basis) {
  for (const auto& b : basis) {
    double c = dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
  }
}

std::string user_id_for(std::size_t i, std::size_t n) {
  std::size_t width = std::max<std::size_t>(2, std::to_string(n).size());
  std::string digits = std::to_string(i + 1);
  return "u" + std::string(width - digits.size(), '0') + digits;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

bool is_power_of_two(std::size_t k) { return k > 0 && (k & (k - 1)) == 0; }

}  // namespace

GeneratorMode parse_generator_mode(const std::string& text) {
  if (text == "soups" || text == "soups-like") return GeneratorMode::kSoups;
  if (text == "personalllm" || text == "personalllm-like") return GeneratorMode::kPersonalLlm;
  if (text == "tldr" || text == "tldr-like") return GeneratorMode::kTldr;
  throw UsageError("unknown generator mode '" + text + "' (expected soups, personalllm or tldr)");
}

std::string to_string(GeneratorMode mode) {
  switch (mode) {
    case GeneratorMode::kSoups:
      return "soups";
    case GeneratorMode::kPersonalLlm:
      return "personalllm";
    case GeneratorMode::kTldr:
      return "tldr";
  }
  return "unknown";
}

double default_tau(GeneratorMode mode) { return mode == GeneratorMode::kTldr ? 0.05 : 0.0; }

double effective_tau(const GeneratorConfig& c) { return c.tau ? *c.tau : default_tau(c.mode); }

void validate(const GeneratorConfig& c) {
  if (c.n_users == 0) throw UsageError("n_users must be positive");
  if (c.n_triples == 0) throw UsageError("n_triples must be positive");
  if (c.dimension == 0) throw UsageError("dimension must be positive");
  if (!(c.shared_weight >= 0.0) || !std::isfinite(c.shared_weight)) {
    throw UsageError("shared_weight must be finite and >= 0");
  }
  if (c.tau && (!std::isfinite(*c.tau) || *c.tau < 0.0)) throw UsageError("tau must be finite and >= 0");
  if (!(c.duplicate_fraction >= 0.0 && c.duplicate_fraction <= 1.0)) {
    throw UsageError("duplicate_fraction must lie in [0, 1]");
  }
  if (c.minority_count >= c.n_users && c.minority_count > 0) {
    throw UsageError("minority_count must leave at least one majority user");
  }
  switch (c.mode) {
    case GeneratorMode::kSoups: {
      if (c.sign_dimensions == 0 || c.sign_dimensions > 16) {
        throw UsageError("sign_dimensions must lie in [1, 16]");
      }
      if (2 * c.dimension < c.sign_dimensions + 1) {
        throw UsageError("dimension too small for the requested sign blocks");
      }
      std::size_t k = std::size_t{1} << c.sign_dimensions;
      if (c.n_users % 2 != 0 || c.n_users < 2 || c.n_users > k) {
        throw UsageError("soups mode needs an even user count in [2, " + std::to_string(k) +
                         "]; opposed personas are drawn from the sign patterns, got " +
                         std::to_string(c.n_users));
      }
      if (c.minority_count != 0) throw UsageError("soups mode does not take minority users");
      break;
    }
    case GeneratorMode::kPersonalLlm:
      if (c.n_archetypes == 0) throw UsageError("n_archetypes must be positive");
      if (!(c.dirichlet_alpha > 0.0)) throw UsageError("dirichlet_alpha must be positive");
      if (!(c.minority_weight >= 0.9 && c.minority_weight <= 1.0)) {
        throw UsageError("minority_weight must lie in [0.9, 1]");
      }
      break;
    case GeneratorMode::kTldr:
      if (c.minority_count != 0) throw UsageError("tldr mode does not take minority users");
      if (c.perturbation_scale && !(*c.perturbation_scale >= 0.0)) {
        throw UsageError("perturbation_scale must be >= 0");
      }
      break;
  }
}

Json to_json(const GeneratorConfig& c) {
  Json j;
  j["mode"] = to_string(c.mode);
  j["n_users"] = c.n_users;
  j["n_triples"] = c.n_triples;
  j["dimension"] = c.dimension;
  j["tau"] = effective_tau(c);
  j["minority_count"] = c.minority_count;
  j["duplicate_fraction"] = c.duplicate_fraction;
  j["seed"] = c.seed;
  j["sign_dimensions"] = c.sign_dimensions;
  j["n_archetypes"] = c.n_archetypes;
  j["dirichlet_alpha"] = c.dirichlet_alpha;
  j["minority_weight"] = c.minority_weight;
  if (c.perturbation_scale) j["perturbation_scale"] = *c.perturbation_scale;
  j["divergence_target"] = c.divergence_target;
  j["shared_weight"] = c.shared_weight;
  return j;
}

GeneratorConfig generator_config_from_json(const Json& j) {
  GeneratorConfig c;
  try {
    if (j.contains("mode")) c.mode = parse_generator_mode(j.at("mode").get<std::string>());
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_users", c.n_users);
    get("n_triples", c.n_triples);
    get("dimension", c.dimension);
    if (j.contains("tau")) c.tau = j.at("tau").get<double>();
    get("minority_count", c.minority_count);
    get("duplicate_fraction", c.duplicate_fraction);
    get("seed", c.seed);
    get("sign_dimensions", c.sign_dimensions);
    get("n_archetypes", c.n_archetypes);
    get("shared_weight", c.shared_weight);
    get("dirichlet_alpha", c.dirichlet_alpha);
    get("minority_weight", c.minority_weight);
    get("divergence_target", c.divergence_target);
    if (j.contains("perturbation_scale")) {
      c.perturbation_scale = j.at("perturbation_scale").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed generator config: ") + e.what());
  }
  return c;
}

Embedding feature_map(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("feature_map: x and y dimensions differ");
  const std::size_t d = y.size();
  Embedding out(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = y[i];
    out[d + i] = x[i] * y[i];
  }
  return out;
}

void feature_gap(std::span<const double> x, std::span<const double> y1,
                 std::span<const double> y2, std::span<double> out) {
  const std::size_t d = x.size();
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = y1[i] - y2[i];
    out[d + i] = x[i] * y1[i] - x[i] * y2[i];
  }
}

Embedding sample_unit_vector(std::size_t dimension, Rng& rng) {
  Embedding v = rng.normal_vector(dimension);
  while (norm(v) == 0.0) v = rng.normal_vector(dimension);
  normalize(v);
  return v;
}

Embedding consensus_direction(std::size_t dimension, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "consensus"));
  return sample_unit_vector(2 * dimension, rng);
}

std::vector<Archetype> make_archetypes(std::size_t k, GeneratorMode mode, std::size_t dimension,
                                       std::uint64_t seed, double perturbation_scale,
                                       double shared_weight) {
  if (k == 0) throw UsageError("archetype count must be >= 1");
  if (dimension == 0) throw UsageError("dimension must be positive");
  const std::size_t f = 2 * dimension;
  std::vector<Archetype> out;
  out.reserve(k);
  switch (mode) {
    case GeneratorMode::kSoups: {
      if (!is_power_of_two(k)) {
        throw UsageError("soups archetypes need a power-of-two count, got " + std::to_string(k));
      }
      const std::size_t blocks = static_cast<std::size_t>(std::countr_zero(k));
      if (blocks == 0) {
        out.push_back({0, consensus_direction(dimension, seed)});
        return out;
      }
      if (blocks + 1 > f) throw UsageError("dimension too small for the requested sign blocks");
      // Orthonormal sign directions, all orthogonal to the consensus direction.
      std::vector<Embedding> basis{consensus_direction(dimension, seed)};
      Rng rng(derive_seed(seed, "soups-blocks"));
      for (std::size_t j = 0; j < blocks; ++j) {
        Embedding v;
        do {
          v = rng.normal_vector(f);
          orthogonalize(v, basis);
        } while (norm(v) < 1e-6);
        normalize(v);
        basis.push_back(std::move(v));
      }
      const double scale = 1.0 / std::sqrt(static_cast<double>(blocks));
      for (std::size_t i = 0; i < k; ++i) {
        Embedding a(f, 0.0);
        for (std::size_t j = 0; j < blocks; ++j) {
          double sign = ((i >> j) & 1U) ? 1.0 : -1.0;
          for (std::size_t t = 0; t < f; ++t) a[t] += sign * scale * basis[j + 1][t];
        }
        for (std::size_t t = 0; t < f; ++t) a[t] += shared_weight * basis[0][t];
        normalize(a);
        out.push_back({static_cast<int>(i), std::move(a)});
      }
      return out;
    }
    case GeneratorMode::kPersonalLlm: {
      Rng rng(derive_seed(seed, "personalllm-archetypes"));
      for (std::size_t i = 0; i < k; ++i) {
        out.push_back({static_cast<int>(i), sample_unit_vector(f, rng)});
      }
      return out;
    }
    case GeneratorMode::kTldr: {
      const Embedding base = consensus_direction(dimension, seed);
      Rng rng(derive_seed(seed, "tldr-perturbations"));
      for (std::size_t i = 0; i < k; ++i) {
        Embedding a = base;
        Embedding noise = rng.normal_vector(f);
        for (std::size_t t = 0; t < f; ++t) a[t] += perturbation_scale * noise[t];
        normalize(a);
        out.push_back({static_cast<int>(i), std::move(a)});
      }
      return out;
    }
  }
  return out;
}

Embedding user_direction(const UserProfile& user, std::span<const Archetype> archetypes) {
  if (user.mixture_weights.size() != archetypes.size()) {
    throw DataError("user " + user.user_id + " has " +
                    std::to_string(user.mixture_weights.size()) + " mixture weights for " +
                    std::to_string(archetypes.size()) + " archetypes");
  }
  if (archetypes.empty()) throw DataError("no archetypes");
  Embedding w(archetypes.front().utility.size(), 0.0);
  for (std::size_t k = 0; k < archetypes.size(); ++k) {
    if (archetypes[k].utility.size() != w.size()) throw DataError("archetype length mismatch");
    double weight = user.mixture_weights[k];
    if (weight == 0.0) continue;
    for (std::size_t t = 0; t < w.size(); ++t) w[t] += weight * archetypes[k].utility[t];
  }
  return w;
}

double user_utility(const UserProfile& user, std::span<const Archetype> archetypes,
                    std::span<const double> x, std::span<const double> y) {
  Embedding w = user_direction(user, archetypes);
  if (w.size() != 2 * x.size()) throw DataError("utility: embedding dimension mismatch");
  Embedding phi = feature_map(x, y);
  return dot(w, phi);
}

double preference_probability(double utility_gap, double tau) {
  if (tau == 0.0) {
    if (utility_gap > 0.0) return 1.0;
    if (utility_gap < 0.0) return 0.0;
    return 0.5;
  }
  return sigmoid(utility_gap / tau);
}

namespace {

int draw_label(double gap, double tau, Rng& rng) {
  if (tau == 0.0 && gap != 0.0) return gap > 0.0 ? 1 : 0;
  return rng.bernoulli(preference_probability(gap, tau)) ? 1 : 0;
}

}  // namespace

int sample_comparison(const UserProfile& user, std::span<const Archetype> archetypes,
                      std::span<const double> x, std::span<const double> y1,
                      std::span<const double> y2, Rng& rng) {
  double gap = user_utility(user, archetypes, x, y1) - user_utility(user, archetypes, x, y2);
  return draw_label(gap, user.tau, rng);
}

std::vector<std::size_t> soups_persona_order(std::size_t n_users, std::size_t sign_dimensions) {
  // Opposed pairs (p, ~p): the population's block components cancel exactly.
  const std::size_t k = std::size_t{1} << sign_dimensions;
  const std::size_t mask = k - 1;
  std::vector<std::size_t> order;
  for (std::size_t p = 0; order.size() < std::min(n_users, k); ++p) {
    if (std::find(order.begin(), order.end(), p) != order.end()) continue;
    order.push_back(p);
    order.push_back(p ^ mask);
  }
  order.resize(std::min(n_users, k));
  return order;
}

namespace {

struct Population {
  std::vector<Archetype> archetypes;
  std::vector<UserProfile> users;
  std::vector<Embedding> directions;  // cached user_direction per user
};

Population build_population(const GeneratorConfig& c, double perturbation_scale) {
  Population pop;
  switch (c.mode) {
    case GeneratorMode::kSoups: {
      const std::size_t k = std::size_t{1} << c.sign_dimensions;
      pop.archetypes = make_archetypes(k, c.mode, c.dimension, c.seed, 0.0, c.shared_weight);
      for (std::size_t i = 0; auto persona : soups_persona_order(c.n_users, c.sign_dimensions)) {
        UserProfile u{user_id_for(i, c.n_users), std::vector<double>(k, 0.0), effective_tau(c)};
        u.mixture_weights[persona] = 1.0;
        pop.users.push_back(std::move(u));
        ++i;
      }
      break;
    }
    case GeneratorMode::kPersonalLlm: {
      pop.archetypes = make_archetypes(c.n_archetypes, c.mode, c.dimension, c.seed);
      const std::size_t k = c.n_archetypes;
      const std::size_t total_k = k + c.minority_count;
      const std::size_t n_major = c.n_users - c.minority_count;
      Rng rng(derive_seed(c.seed, "personalllm-users"));
      const std::size_t f = 2 * c.dimension;
      Embedding mean(f, 0.0);
      for (std::size_t i = 0; i < n_major; ++i) {
        auto w = rng.dirichlet(k, c.dirichlet_alpha);
        w.resize(total_k, 0.0);
        UserProfile u{user_id_for(i, c.n_users), std::move(w), effective_tau(c)};
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t t = 0; t < f; ++t) mean[t] += u.mixture_weights[a] * pop.archetypes[a].utility[t];
        }
        pop.users.push_back(std::move(u));
      }
      normalize(mean);
      // Each minority user gets a dedicated archetype pointing away from the
      // population mean: dot(archetype, mean) = -0.75.
      for (std::size_t m = 0; m < c.minority_count; ++m) {
        Embedding r;
        do {
          r = rng.normal_vector(f);
          orthogonalize(r, {mean});
        } while (norm(r) < 1e-6);
        normalize(r);
        const double along = -0.75;
        const double across = std::sqrt(1.0 - along * along);
        Embedding a(f);
        for (std::size_t t = 0; t < f; ++t) a[t] = along * mean[t] + across * r[t];
        normalize(a);
        pop.archetypes.push_back({static_cast<int>(k + m), std::move(a)});
        auto rest = rng.dirichlet(k, c.dirichlet_alpha);
        std::vector<double> w(total_k, 0.0);
        for (std::size_t a2 = 0; a2 < k; ++a2) w[a2] = (1.0 - c.minority_weight) * rest[a2];
        w[k + m] = c.minority_weight;
        pop.users.push_back({user_id_for(n_major + m, c.n_users), std::move(w), effective_tau(c)});
      }
      break;
    }
    case GeneratorMode::kTldr: {
      pop.archetypes = make_archetypes(c.n_users, c.mode, c.dimension, c.seed, perturbation_scale);
      for (std::size_t i = 0; i < c.n_users; ++i) {
        UserProfile u{user_id_for(i, c.n_users), std::vector<double>(c.n_users, 0.0), effective_tau(c)};
        u.mixture_weights[i] = 1.0;
        pop.users.push_back(std::move(u));
      }
      break;
    }
  }
  for (const auto& u : pop.users) pop.directions.push_back(user_direction(u, pop.archetypes));
  return pop;
}

struct Triple {
  Embedding x, y1, y2;
  Embedding gap;  // feature gap
};

Triple sample_triple(std::size_t d, Rng& rng) {
  Triple t;
  t.x = sample_unit_vector(d, rng);
  t.y1 = sample_unit_vector(d, rng);
  t.y2 = sample_unit_vector(d, rng);
  quantize_in_place(t.x);
  quantize_in_place(t.y1);
  quantize_in_place(t.y2);
  t.gap.assign(2 * d, 0.0);
  feature_gap(t.x, t.y1, t.y2, t.gap);
  return t;
}

double pilot_divergence(const GeneratorConfig& c, double scale) {
  Population pop = build_population(c, scale);
  const std::size_t pilot = 2000;
  std::size_t divergent = 0;
  for (std::size_t t = 0; t < pilot; ++t) {
    Rng rng(derive_seed(c.seed, "tldr-calibration", t));
    Triple tr = sample_triple(c.dimension, rng);
    int ones = 0;
    for (std::size_t u = 0; u < pop.users.size(); ++u) {
      ones += draw_label(dot(pop.directions[u], tr.gap), effective_tau(c), rng);
    }
    if (ones != 0 && ones != static_cast<int>(pop.users.size())) ++divergent;
  }
  return static_cast<double>(divergent) / static_cast<double>(pilot);
}

}  // namespace

double calibrate_tldr_perturbation(const GeneratorConfig& config) {
  GeneratorConfig c = config;
  c.mode = GeneratorMode::kTldr;
  if (c.n_users < 2) return 0.0;
  double lo = 0.0;
  double hi = 2.0;
  if (pilot_divergence(c, lo) >= c.divergence_target) return lo;
  for (int iter = 0; iter < 30; ++iter) {
    double mid = 0.5 * (lo + hi);
    if (pilot_divergence(c, mid) < c.divergence_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return quantize(0.5 * (lo + hi));
}

GeneratedData generate_dataset(const GeneratorConfig& config) {
  validate(config);
  GeneratorConfig c = config;
  c.tau = effective_tau(c);
  double scale = 0.0;
  if (c.mode == GeneratorMode::kTldr) {
    scale = c.perturbation_scale ? *c.perturbation_scale : calibrate_tldr_perturbation(c);
    c.perturbation_scale = scale;
  }
  Population pop = build_population(c, scale);

  const std::size_t n_users = pop.users.size();
  std::vector<ComparisonRecord> records;
  records.reserve(c.n_triples * n_users * (c.duplicate_fraction > 0 ? 2 : 1));
  std::vector<int> labels(n_users);
  for (std::size_t t = 0; t < c.n_triples; ++t) {
    Rng rng(derive_seed(c.seed, "triple", t));
    Triple tr = sample_triple(c.dimension, rng);
    const bool duplicate = rng.uniform() < c.duplicate_fraction;
    const std::string id = make_triple_id(tr.x, tr.y1, tr.y2);
    const int passes = duplicate ? 2 : 1;
    for (int pass = 0; pass < passes; ++pass) {
      for (std::size_t u = 0; u < n_users; ++u) {
        ComparisonRecord r;
        r.triple_id = id;
        r.user_id = pop.users[u].user_id;
        r.x = tr.x;
        r.y1 = tr.y1;
        r.y2 = tr.y2;
        r.label = draw_label(dot(pop.directions[u], tr.gap), pop.users[u].tau, rng);
        records.push_back(std::move(r));
      }
    }
  }
  DatasetMetadata meta;
  meta.generator = to_json(c);
  meta.seed = c.seed;
  return GeneratedData{PreferenceDataset(c.dimension, std::move(records), std::move(meta)),
                       std::move(pop.users), std::move(pop.archetypes)};
}

std::filesystem::path profiles_path_for(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  auto stem = p.stem().string();
  return p.replace_filename(stem + ".profiles.jsonl");
}

std::string profiles_to_string(std::span<const Archetype> archetypes,
                               std::span<const UserProfile> users, std::size_t dimension) {
  Json header;
  header["format_version"] = kDatasetFormatVersion;
  header["kind"] = "profiles";
  header["dimension"] = dimension;
  Json arr = Json::array();
  for (const auto& a : archetypes) {
    Embedding q = a.utility;
    quantize_in_place(q);
    arr.push_back(Json{{"id", a.id}, {"utility", q}});
  }
  header["archetypes"] = std::move(arr);
  std::string out = header.dump() + "\n";
  for (const auto& u : users) {
    std::vector<double> w = u.mixture_weights;
    quantize_in_place(w);
    Json j;
    j["user_id"] = u.user_id;
    j["mixture_weights"] = w;
    j["tau"] = quantize(u.tau);
    out += j.dump() + "\n";
  }
  return out;
}

void save_profiles(const std::filesystem::path& path, std::span<const Archetype> archetypes,
                   std::span<const UserProfile> users, std::size_t dimension) {
  write_file_atomic(path, profiles_to_string(archetypes, users, dimension));
}

PopulationFile load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open profiles file: " + path.string());
  PopulationFile pop;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      Json j = Json::parse(line);
      if (!have_header) {
        pop.dimension = j.at("dimension").get<std::size_t>();
        for (const auto& a : j.at("archetypes")) {
          pop.archetypes.push_back(
              {a.at("id").get<int>(), a.at("utility").get<std::vector<double>>()});
        }
        have_header = true;
        continue;
      }
      pop.users.push_back({j.at("user_id").get<std::string>(),
                           j.at("mixture_weights").get<std::vector<double>>(),
                           j.at("tau").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed profiles record: " +
                      e.what());
    }
  }
  if (!have_header) throw DataError("empty profiles file");
  return pop;
}

}  // namespace plbench
