#include <cmath>
#include <cstdlib>

#include "doctest.h"
#include "fixtures.hpp"
#include "plbench/error.hpp"
#include "plbench/eval.hpp"
#include "plbench/experiments.hpp"
#include "plbench/models.hpp"
#include "plbench/synthgen.hpp"

#ifndef PLBENCH_TEST_DATA_DIR
#define PLBENCH_TEST_DATA_DIR "."
#endif

using namespace plbench;

namespace {

const Embedding kW{1.0, -0.5, 0.3, 0.0, 0.8, -0.2};
const Embedding kW2{-0.2, 0.9, 0.1, 0.5, -0.3, 0.6};

PreferenceModel linear_model(Embedding w) {
  PreferenceModel m;
  m.model = VanillaModel{std::move(w)};
  m.dimension = 3;
  return m;
}

OptimConfig quick(std::size_t epochs = 40) {
  OptimConfig c;
  c.epochs = epochs;
  c.learning_rate = 0.05;
  c.patience = 0;
  return c;
}

PreferenceDataset concat(const std::vector<PreferenceDataset>& parts) {
  std::vector<ComparisonRecord> r;
  for (const auto& p : parts) r.insert(r.end(), p.records().begin(), p.records().end());
  return PreferenceDataset(parts.front().dimension(), std::move(r));
}

}  // namespace

TEST_CASE("evaluate: oracle, constant model, empty set") {
  const auto test = fixtures::linear_dataset(kW, 400, {"a", "b"}, {false, false}, 1);
  const auto r = evaluate(linear_model(kW), test);
  CHECK(r.accuracy == 1.0);
  CHECK(r.per_user.at("a") == 1.0);
  CHECK(r.n_test.at("b") == 400);

  const auto flat = evaluate(linear_model(Embedding(6, 0.0)), test, UserPolicy::kStrict, 3);
  CHECK(flat.accuracy == doctest::Approx(0.5).epsilon(0.1));
  // Tie coins depend only on (seed, triple, user), not on record order.
  auto recs = test.records();
  std::reverse(recs.begin(), recs.end());
  CHECK(evaluate(linear_model(Embedding(6, 0.0)), PreferenceDataset(3, recs), UserPolicy::kStrict, 3)
            .accuracy == flat.accuracy);

  CHECK_THROWS_AS(evaluate(linear_model(kW), PreferenceDataset(3, {})), UsageError);
  CHECK(eval_report_from_json(to_json(r)) == r);
}

TEST_CASE("per-user table flags cells below one half") {
  const auto test = fixtures::linear_dataset(kW, 200, {"a", "b"}, {false, true}, 2);
  std::vector<EvalReport> oracles{evaluate(linear_model(kW), test.for_user("a")),
                                  evaluate(linear_model(kW), test.for_user("a"))};
  oracles[0].method = "x";
  oracles[1].method = "y";
  const auto clean = per_user_table(oracles);
  for (const auto& row : clean.flagged) {
    for (bool f : row) CHECK_FALSE(f);
  }

  auto r = evaluate(linear_model(kW), test);
  r.method = "vanilla";
  const auto t = per_user_table(std::vector<EvalReport>{r});
  REQUIRE(t.users == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(t.flagged[0][0]);
  CHECK(t.flagged[0][1]);
  CHECK(render_user_table(t).find('*') != std::string::npos);
  CHECK(to_csv(t).rfind("method,user,accuracy,flagged\n", 0) == 0);

  CHECK_THROWS_AS(per_user_table(std::vector<EvalReport>{r, oracles[0]}), DataError);
}

TEST_CASE("similar-user adaptation on a clone equals that user's individual accuracy") {
  const auto train = concat({fixtures::linear_dataset(kW, 300, {"a"}, {false}, 3),
                             fixtures::linear_dataset(kW2, 300, {"b"}, {false}, 4)});
  const auto held = fixtures::linear_dataset(kW, 500, {"n"}, {false}, 5);
  DatasetSplit s{train, PreferenceDataset(3, {}), held, SplitMode::kByUser};

  AdaptationConfig cfg;
  cfg.budgets = {30, 300};
  cfg.n_test = 200;
  cfg.methods = {"similar-user", "individual"};
  cfg.options.optim = quick();
  cfg.seed = 7;
  const auto curve = adaptation_protocol(s, cfg);

  const auto ind = train_individual(train, cfg.options.optim);
  PreferenceModel clone;
  clone.dimension = 3;
  clone.model = IndividualModel{{{"n", std::get<IndividualModel>(ind.model).weights.at("a")}}};
  std::vector<std::size_t> last;
  for (std::size_t i = 300; i < 500; ++i) last.push_back(i);
  const double direct = evaluate(clone, held.subset(last), UserPolicy::kStrict, 7).accuracy;
  CHECK(curve.accuracy.at("similar-user")[0] == direct);
  CHECK(curve.accuracy.at("similar-user")[1] == direct);
  // Large budgets bring per-user training close to the upper bound.
  CHECK(std::abs(curve.accuracy.at("individual")[1] - curve.upper_bound) <= 0.03);

  cfg.budgets = {30, 10};
  CHECK_THROWS_AS(adaptation_protocol(s, cfg), UsageError);
  cfg.budgets = {400};
  CHECK_THROWS_AS(adaptation_protocol(s, cfg), DataError);
}

TEST_CASE("probe sets") {
  const auto base = make_archetypes(1, GeneratorMode::kPersonalLlm, 4, 2);
  const std::vector<Archetype> same{base[0], base[0], base[0]};
  // Margin 0 over identical archetypes: no draw is ever rejected.
  CHECK(build_probe_set(same, 4, 50, 0.0, 1, 50).dataset.size() == 50);

  Archetype neg = base[0];
  for (auto& v : neg.utility) v = -v;
  const std::vector<Archetype> opposed{base[0], neg};
  CHECK_THROWS_AS(build_probe_set(opposed, 4, 1, 0.0, 1, 2000), DataError);

  const auto many = make_archetypes(6, GeneratorMode::kTldr, 4, 3, 0.2);
  const auto probe = build_probe_set(many, 4, 100, 0.1, 5);
  for (const auto& r : probe.dataset.records()) {
    const auto f1 = feature_map(r.x, r.y1), f2 = feature_map(r.x, r.y2);
    for (const auto& a : many) {
      double du = 0.0;
      for (std::size_t i = 0; i < f1.size(); ++i) du += a.utility[i] * (f1[i] - f2[i]);
      CHECK(std::abs(du) >= 0.1);
      CHECK((du > 0 ? 1 : 0) == r.label);
    }
  }
}

TEST_CASE("personalization tax with zero fine-tuning steps has zero deltas") {
  const auto arch = make_archetypes(4, GeneratorMode::kTldr, 3, 4, 0.1);
  const auto probe = build_probe_set(arch, 3, 100, 0.1, 6);
  const auto pre = train_probe_model(probe, quick());
  OptimConfig none = quick();
  none.epochs = 0;
  const auto user = fixtures::linear_dataset(kW2, 100, {"u"}, {false}, 7);
  const auto r = personalization_tax(pre, user, probe, none, 1);
  CHECK(r.probe_delta == 0.0);
  CHECK(r.user_delta == 0.0);
  CHECK(r.n_train == 80);
  CHECK(r.n_test == 20);
}

TEST_CASE("sweep at full size matches a direct train and evaluate") {
  const auto data = concat({fixtures::linear_dataset(kW, 150, {"a"}, {false}, 8),
                            fixtures::linear_dataset(kW2, 150, {"b"}, {false}, 9)});
  const auto s = split_dataset(data, SplitMode::kByTriple, {0.6, 0.2, 0.2}, 3);
  MethodOptions opts;
  opts.optim = quick();
  const std::vector<std::string> methods{"vanilla", "individual"};
  const std::vector<std::size_t> sizes{50, s.train.size()};
  const auto cells = sample_efficiency_sweep(methods, s, sizes, opts, 11);
  REQUIRE(cells.size() == 4);
  for (std::size_t m = 0; m < 2; ++m) {
    const auto direct = train_method(parse_method(methods[m]), s.train, &s.validation, opts);
    CHECK(cells[m * 2 + 1].accuracy == evaluate(direct, s.test, UserPolicy::kStrict, 11).accuracy);
  }
  // Nested prefixes.
  const auto small = nested_subset(100, 20, 4), big = nested_subset(100, 60, 4);
  for (auto i : small) CHECK(std::binary_search(big.begin(), big.end(), i));
  CHECK_THROWS_AS(nested_subset(10, 11, 1), UsageError);
}

TEST_CASE("PRM accuracy on a fixed test set matches the stored regression value") {
  GeneratorConfig g;
  g.mode = GeneratorMode::kPersonalLlm;
  g.n_users = 4;
  g.n_triples = 300;
  g.dimension = 4;
  g.seed = 13;
  const auto data = generate_dataset(g).dataset;
  const auto s = split_dataset(data, SplitMode::kByTriple, {0.7, 0.1, 0.2}, 13);
  OptimConfig o = quick(30);
  o.seed = 13;
  const auto m = train_prm(s.train, PrmConfig{}, o, &s.validation);
  const double acc = evaluate(m, s.test, UserPolicy::kStrict, 13).accuracy;
  const std::filesystem::path golden = std::filesystem::path(PLBENCH_TEST_DATA_DIR) / "prm_eval.json";
  if (std::getenv("PLBENCH_WRITE_GOLDEN")) write_file_atomic(golden, Json{{"accuracy", acc}}.dump() + "\n");
  REQUIRE(std::filesystem::exists(golden));
  CHECK(acc == doctest::Approx(Json::parse(read_file(golden))["accuracy"].get<double>()).epsilon(1e-12));
}

TEST_CASE("user embedding export") {
  const auto train = fixtures::linear_dataset(kW, 60, {"a", "b"}, {false, true}, 10);
  const auto ind = train_individual(train, quick(5));
  const auto rows = export_user_embeddings(ind);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].kind == "weights");
  CHECK(to_csv(rows).rfind("user,kind,c0,", 0) == 0);
  CHECK_THROWS_AS(export_user_embeddings(linear_model(kW)), UsageError);
}
