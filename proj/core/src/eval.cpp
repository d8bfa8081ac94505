#include "plbench/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "plbench/error.hpp"
#include "plbench/parallel.hpp"

namespace plbench {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

EvalReport evaluate(const PreferenceModel& model, const PreferenceDataset& test, UserPolicy policy,
                    std::uint64_t seed) {
  if (test.empty()) throw UsageError("evaluate: empty test set");
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // correct, total
  for (const auto& r : test.records()) {
    const int pred = predict(model, r, derive_seed(seed, r.triple_id + "|" + r.user_id), policy);
    auto& [correct, total] = counts[r.user_id];
    correct += pred == r.label ? 1 : 0;
    total += 1;
  }
  EvalReport rep;
  rep.method = to_string(model.kind());
  rep.seed = seed;
  rep.config = model.config;
  std::size_t all_correct = 0;
  for (const auto& [user, c] : counts) {
    rep.per_user[user] = static_cast<double>(c.first) / static_cast<double>(c.second);
    rep.n_test[user] = c.second;
    all_correct += c.first;
  }
  rep.accuracy = static_cast<double>(all_correct) / static_cast<double>(test.size());
  return rep;
}

Json to_json(const EvalReport& r) {
  Json j;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["accuracy"] = r.accuracy;
  Json users = Json::object();
  for (const auto& [u, acc] : r.per_user) {
    users[u] = {{"accuracy", acc}, {"n_test", r.n_test.at(u)}};
  }
  j["per_user"] = std::move(users);
  j["config"] = r.config;
  return j;
}

EvalReport eval_report_from_json(const Json& j) {
  try {
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    for (const auto& [u, v] : j.at("per_user").items()) {
      r.per_user[u] = v.at("accuracy").get<double>();
      r.n_test[u] = v.at("n_test").get<std::size_t>();
    }
    if (j.contains("config")) r.config = j.at("config");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

UserTable per_user_table(std::span<const EvalReport> reports) {
  UserTable t;
  if (reports.empty()) return t;
  for (const auto& [u, acc] : reports.front().per_user) t.users.push_back(u);
  for (const auto& r : reports) {
    std::vector<std::string> users;
    for (const auto& [u, acc] : r.per_user) users.push_back(u);
    if (users != t.users) throw DataError("user-set mismatch between reports");
    t.methods.push_back(r.method);
    std::vector<double> row;
    std::vector<bool> flags;
    for (const auto& u : t.users) {
      const double acc = r.per_user.at(u);
      row.push_back(acc);
      flags.push_back(acc < 0.5);
    }
    t.accuracy.push_back(std::move(row));
    t.flagged.push_back(std::move(flags));
  }
  return t;
}

std::string render_user_table(const UserTable& t) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-12s", "method");
  out << buf;
  for (const auto& u : t.users) {
    std::snprintf(buf, sizeof(buf), " %9s", u.c_str());
    out << buf;
  }
  out << "\n";
  for (std::size_t m = 0; m < t.methods.size(); ++m) {
    std::snprintf(buf, sizeof(buf), "%-12s", t.methods[m].c_str());
    out << buf;
    for (std::size_t u = 0; u < t.users.size(); ++u) {
      std::snprintf(buf, sizeof(buf), " %8.3f%c", t.accuracy[m][u], t.flagged[m][u] ? '*' : ' ');
      out << buf;
    }
    out << "\n";
  }
  out << "(* accuracy below 0.5)\n";
  return out.str();
}

std::string to_csv(const UserTable& t) {
  std::string out = "method,user,accuracy,flagged\n";
  for (std::size_t m = 0; m < t.methods.size(); ++m) {
    for (std::size_t u = 0; u < t.users.size(); ++u) {
      out += t.methods[m] + "," + t.users[u] + "," + num(t.accuracy[m][u]) + "," +
             (t.flagged[m][u] ? "1" : "0") + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> adaptation_methods() {
  return {"gpo", "similar-user", "finetune", "individual"};
}

AdaptationCurve adaptation_protocol(const DatasetSplit& split, const AdaptationConfig& config,
                                    const PreferenceModel* gpo) {
  if (config.budgets.empty()) throw UsageError("no adaptation budgets");
  for (std::size_t i = 1; i < config.budgets.size(); ++i) {
    if (config.budgets[i] <= config.budgets[i - 1]) {
      throw UsageError("adaptation budgets must be strictly increasing");
    }
  }
  if (config.budgets.front() == 0) throw UsageError("adaptation budgets must be positive");
  const auto known = adaptation_methods();
  for (const auto& m : config.methods) {
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw UsageError("unknown adaptation method '" + m +
                       "' (expected gpo, similar-user, finetune or individual)");
    }
  }
  if (config.n_test == 0) throw UsageError("n_test must be >= 1");
  const auto& held_out = split.test.users();
  if (held_out.empty()) throw DataError("no held-out users");
  const auto& train_users = split.train.users();
  for (const auto& u : held_out) {
    if (std::binary_search(train_users.begin(), train_users.end(), u)) {
      throw DataError("held-out user '" + u + "' also appears in training data");
    }
  }

  // Pool (first records) and test (last n_test records) per held-out user.
  const std::size_t max_budget = config.budgets.back();
  std::vector<std::vector<std::size_t>> pool(held_out.size());
  std::vector<std::size_t> test_idx;
  for (std::size_t k = 0; k < held_out.size(); ++k) {
    auto idx = split.test.indices_for_user(held_out[k]);
    if (idx.size() < max_budget + config.n_test) {
      throw DataError("insufficient held-out data for user '" + held_out[k] + "': " +
                      std::to_string(idx.size()) + " records, need " +
                      std::to_string(max_budget + config.n_test));
    }
    const std::size_t cut = idx.size() - config.n_test;
    pool[k].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  }
  std::sort(test_idx.begin(), test_idx.end());
  const PreferenceDataset test = split.test.subset(test_idx);
  auto budget_data = [&](std::size_t b) {
    std::vector<std::size_t> idx;
    for (const auto& p : pool) idx.insert(idx.end(), p.begin(), p.begin() + static_cast<std::ptrdiff_t>(b));
    std::sort(idx.begin(), idx.end());
    return split.test.subset(idx);
  };
  auto has = [&](const char* m) {
    return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
  };

  const OptimConfig& optim = config.options.optim;
  const PreferenceDataset* val = split.validation.empty() ? nullptr : &split.validation;
  std::optional<PreferenceModel> individual_train, vanilla_train, gpo_model;
  if (has("similar-user")) individual_train = train_individual(split.train, optim);
  if (has("finetune")) vanilla_train = train_vanilla(split.train, optim, val);
  if (has("gpo")) {
    gpo_model = gpo != nullptr ? *gpo
                               : train_gpo_lite(split.train, config.options.gpo, config.gpo_optim, val);
  }

  AdaptationCurve curve;
  curve.budgets = config.budgets;
  curve.held_out_users = held_out;
  curve.seed = config.seed;
  const std::size_t nb = config.budgets.size();
  for (const auto& m : config.methods) curve.accuracy[m].assign(nb, 0.0);

  // Cells: every (method, budget) plus the upper bound.
  const std::size_t n_cells = config.methods.size() * nb + 1;
  std::vector<double> results(n_cells, 0.0);
  parallel_for(n_cells, config.workers, [&](std::size_t cell) {
    if (cell == n_cells - 1) {
      std::vector<std::size_t> all;
      for (const auto& p : pool) all.insert(all.end(), p.begin(), p.end());
      std::sort(all.begin(), all.end());
      PreferenceModel upper = train_individual(split.test.subset(all), optim);
      results[cell] = evaluate(upper, test, UserPolicy::kStrict, config.seed).accuracy;
      return;
    }
    const std::string& method = config.methods[cell / nb];
    const std::size_t b = config.budgets[cell % nb];
    const PreferenceDataset few = budget_data(b);
    PreferenceModel model;
    if (method == "gpo") {
      model = *gpo_model;
      std::get<GpoModel>(model.model).contexts.clear();
      for (const auto& u : held_out) attach_context(model, u, few.for_user(u));
    } else if (method == "individual") {
      model = train_individual(few, optim);
    } else {
      IndividualModel per_user;
      for (const auto& u : held_out) {
        const PreferenceDataset mine = few.for_user(u);
        if (method == "similar-user") {
          auto choice = adapt_similar_user(*individual_train, mine);
          per_user.weights[u] = std::get<IndividualModel>(individual_train->model).weights.at(choice.user_id);
        } else {
          OptimConfig c = optim;
          c.seed = derive_seed(optim.seed, "finetune:" + u);
          per_user.weights[u] = std::get<VanillaModel>(adapt_finetune(*vanilla_train, mine, c).model).w;
        }
      }
      model.model = std::move(per_user);
      model.dimension = split.test.dimension();
    }
    results[cell] = evaluate(model, test, UserPolicy::kStrict, config.seed).accuracy;
  });
  for (std::size_t cell = 0; cell + 1 < n_cells; ++cell) {
    curve.accuracy[config.methods[cell / nb]][cell % nb] = results[cell];
  }
  curve.upper_bound = results.back();
  return curve;
}

Json to_json(const AdaptationCurve& c) {
  Json j;
  j["budgets"] = c.budgets;
  Json acc = Json::object();
  for (const auto& [m, v] : c.accuracy) acc[m] = v;
  j["accuracy"] = std::move(acc);
  j["upper_bound"] = c.upper_bound;
  j["held_out_users"] = c.held_out_users;
  j["seed"] = c.seed;
  return j;
}

std::string to_csv(const AdaptationCurve& c) {
  std::string out = "method,budget,accuracy\n";
  for (const auto& [m, v] : c.accuracy) {
    for (std::size_t i = 0; i < c.budgets.size(); ++i) {
      out += m + "," + std::to_string(c.budgets[i]) + "," + num(v[i]) + "\n";
    }
  }
  for (auto b : c.budgets) out += "upper-bound," + std::to_string(b) + "," + num(c.upper_bound) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

TaxReport personalization_tax(const PreferenceModel& pretrained, const PreferenceDataset& user_data,
                              const ProbeSet& probe, const OptimConfig& optim, std::uint64_t seed) {
  const auto* v = std::get_if<VanillaModel>(&pretrained.model);
  if (v == nullptr) throw UsageError("the tax experiment fine-tunes a vanilla model");
  if (user_data.size() < 2) throw DataError("tax experiment needs at least two user records");
  if (probe.dataset.empty()) throw DataError("empty probe set");
  const std::size_t n_train = user_data.size() * 4 / 5;
  std::vector<std::size_t> tr(n_train), te(user_data.size() - n_train);
  std::iota(tr.begin(), tr.end(), std::size_t{0});
  std::iota(te.begin(), te.end(), n_train);
  const PreferenceDataset train = user_data.subset(tr);
  const PreferenceDataset test = user_data.subset(te);

  PreferenceModel tuned = pretrained;
  std::get<VanillaModel>(tuned.model).w = finetune_linear(v->w, train, optim);

  TaxReport r;
  r.user_id = user_data.users().size() == 1 ? user_data.users().front() : std::string("mixed");
  r.n_train = train.size();
  r.n_test = test.size();
  const auto policy = UserPolicy::kUserAgnostic;
  r.probe_before = evaluate(pretrained, probe.dataset, policy, seed).accuracy;
  r.probe_after = evaluate(tuned, probe.dataset, policy, seed).accuracy;
  r.user_before = evaluate(pretrained, test, policy, seed).accuracy;
  r.user_after = evaluate(tuned, test, policy, seed).accuracy;
  r.probe_delta = r.probe_after - r.probe_before;
  r.user_delta = r.user_after - r.user_before;
  return r;
}

Json to_json(const TaxReport& r) {
  Json j;
  j["user_id"] = r.user_id;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["probe_before"] = r.probe_before;
  j["probe_after"] = r.probe_after;
  j["probe_delta"] = r.probe_delta;
  j["user_before"] = r.user_before;
  j["user_after"] = r.user_after;
  j["user_delta"] = r.user_delta;
  return j;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> nested_subset(std::size_t n, std::size_t size, std::uint64_t seed) {
  if (size > n) {
    throw UsageError("training size " + std::to_string(size) + " exceeds the " +
                     std::to_string(n) + " available records");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "sweep-order"));
  rng.shuffle(perm);
  perm.resize(size);
  std::sort(perm.begin(), perm.end());
  return perm;
}

std::vector<SweepCell> sample_efficiency_sweep(std::span<const std::string> methods,
                                               const DatasetSplit& split,
                                               std::span<const std::size_t> sizes,
                                               const MethodOptions& options, std::uint64_t seed,
                                               std::size_t workers) {
  std::vector<MethodKind> kinds;
  for (const auto& m : methods) kinds.push_back(parse_method(m));
  for (auto s : sizes) nested_subset(split.train.size(), s, seed);  // validates sizes up front
  std::vector<SweepCell> cells(kinds.size() * sizes.size());
  const PreferenceDataset* val = split.validation.empty() ? nullptr : &split.validation;
  parallel_for(cells.size(), workers, [&](std::size_t c) {
    const MethodKind kind = kinds[c / sizes.size()];
    const std::size_t size = sizes[c % sizes.size()];
    const PreferenceDataset train = split.train.subset(nested_subset(split.train.size(), size, seed));
    const PreferenceModel model = train_method(kind, train, val, options);
    cells[c] = {to_string(kind), size, evaluate(model, split.test, UserPolicy::kStrict, seed).accuracy};
  });
  return cells;
}

std::string to_csv(std::span<const SweepCell> cells) {
  std::string out = "method,size,accuracy\n";
  for (const auto& c : cells) out += c.method + "," + std::to_string(c.size) + "," + num(c.accuracy) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

std::vector<EmbeddingRow> export_user_embeddings(const PreferenceModel& model) {
  std::vector<EmbeddingRow> rows;
  if (const auto* m = std::get_if<IndividualModel>(&model.model)) {
    for (const auto& [u, w] : m->weights) rows.push_back({u, "weights", w});
  } else if (const auto* m = std::get_if<PrmModel>(&model.model)) {
    const auto& table = m->params.at("users.table");
    for (std::size_t i = 0; i < m->users.size(); ++i) {
      auto b = table.values.begin() + static_cast<std::ptrdiff_t>(i * table.cols);
      rows.push_back({m->users[i], "embedding", Embedding(b, b + static_cast<std::ptrdiff_t>(table.cols))});
    }
    rows.push_back({"u0", "embedding", m->params.at("users.generic").values});
  } else if (const auto* m = std::get_if<VplModel>(&model.model)) {
    for (const auto& [u, z] : m->user_latents) rows.push_back({u, "latent", z});
  } else if (const auto* m = std::get_if<ConditionalModel>(&model.model)) {
    for (std::size_t i = 0; i < m->users.size(); ++i) {
      rows.push_back({m->users[i], "bias", Embedding{m->user_bias[i]}});
    }
  } else {
    throw UsageError(to_string(model.kind()) + " models carry no per-user embedding");
  }
  return rows;
}

std::string to_csv(std::span<const EmbeddingRow> rows) {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.values.size());
  std::string out = "user,kind";
  for (std::size_t i = 0; i < width; ++i) out += ",c" + std::to_string(i);
  out += "\n";
  for (const auto& r : rows) {
    out += r.user_id + "," + r.kind;
    for (double v : r.values) out += "," + num(v);
    out += "\n";
  }
  return out;
}

}  // namespace plbench
