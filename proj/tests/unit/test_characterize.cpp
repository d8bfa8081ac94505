#include <cmath>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "plbench/characterize.hpp"
#include "plbench/error.hpp"
#include "plbench/synthgen.hpp"

using namespace plbench;

namespace {

// Builds a dataset from a label table: table[t][u] is user u's label on
// triple t, or -1 when u skipped it.
PreferenceDataset from_table(const std::vector<std::vector<int>>& table) {
  std::vector<ComparisonRecord> records;
  for (std::size_t t = 0; t < table.size(); ++t) {
    const double v = double(t + 1);
    for (std::size_t u = 0; u < table[t].size(); ++u) {
      if (table[t][u] < 0) continue;
      records.push_back(make_record("u" + std::to_string(u), {v, 0}, {0, v}, {v, v}, table[t][u]));
    }
  }
  return PreferenceDataset(2, std::move(records));
}

std::vector<Annotation> anns(std::initializer_list<int> labels) {
  std::vector<Annotation> out;
  int i = 0;
  for (int l : labels) out.push_back({"u" + std::to_string(i++), l});
  return out;
}

}  // namespace

TEST_CASE("divergence on hand tables") {
  CHECK(divergence_rate(from_table({{1, 1, 1}, {0, 0, 0}})) == 0.0);
  CHECK(divergence_rate(from_table({{1, 1, 1}, {0, 1, 0}, {0, 0, 0}, {1, 1, 0}})) == 0.5);
  // Single-annotator triples do not count.
  CHECK_FALSE(divergence_rate(from_table({{1, -1}, {-1, 0}})).has_value());
}

TEST_CASE("high divergence threshold is inclusive") {
  std::vector<int> two(10, 1), three(10, 1);
  two[0] = two[1] = 0;
  three[0] = three[1] = three[2] = 0;
  CHECK(high_divergence_rate(from_table({two})) == 0.0);
  CHECK(high_divergence_rate(from_table({three})) == 1.0);
  CHECK(high_divergence_rate(from_table({two, three})) == 0.5);
}

TEST_CASE("majority label") {
  CHECK(majority_label(anns({1, 1, 0})) == 1);
  CHECK_FALSE(majority_label(anns({1, 0})).has_value());
  CHECK_THROWS_AS(majority_label(std::vector<Annotation>{}), UsageError);
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Annotation> a;
    int ones = 0;
    for (int i = 0; i < 7; ++i) {
      const int l = rng.bernoulli(0.5) ? 1 : 0;
      ones += l;
      a.push_back({"u" + std::to_string(i), l});
    }
    CHECK(majority_label(a) == (ones >= 4 ? 1 : 0));
  }
}

TEST_CASE("mv accuracy on trivial populations") {
  const auto agree = mv_accuracy(from_table({{1, 1, 1}, {0, 0, 0}}));
  CHECK(agree.at("u0") == 1.0);
  const auto opposite = mv_accuracy(from_table({{0, 1, 1}, {1, 0, 0}}));
  CHECK(opposite.at("u0") == 0.0);
  CHECK(opposite.at("u1") == 1.0);
}

TEST_CASE("mv accuracy on a 5-user, 6-triple table") {
  const std::vector<std::vector<int>> table{
      {1, 1, 1, 0, 0}, {0, 0, 1, 1, -1}, {1, 0, 1, 0, 1}, {1, -1, -1, -1, -1},
      {0, 0, 0, 0, 1}, {1, 1, 0, 0, -1}};
  const auto mv = mv_accuracy(from_table(table));
  // Enumeration: strict majority over the users present, ties earn 0.5,
  // triples with a single annotator are skipped.
  for (std::size_t u = 0; u < 5; ++u) {
    double credit = 0.0;
    int n = 0;
    for (const auto& row : table) {
      int present = 0, ones = 0;
      for (int l : row) {
        if (l >= 0) {
          ++present;
          ones += l;
        }
      }
      if (present < 2 || row[u] < 0) continue;
      ++n;
      const int zeros = present - ones;
      if (ones == zeros) credit += 0.5;
      else credit += ((ones > zeros ? 1 : 0) == row[u]) ? 1.0 : 0.0;
    }
    const auto got = mv.at("u" + std::to_string(u));
    REQUIRE(got.has_value());
    CHECK(*got == doctest::Approx(credit / n));
  }
}

TEST_CASE("minority cutoff is strict and room is arithmetic") {
  DatasetProfile p;
  p.mv_acc = {{"a", 0.5}, {"b", 0.33}, {"c", 0.9}, {"d", std::nullopt}};
  CHECK(minority_users(p) == std::set<std::string>{"b"});
  p.mv_acc = {{"a", 0.5}, {"c", 0.9}};
  CHECK(minority_users(p).empty());

  DatasetProfile q;
  q.mv_acc = {{"a", 0.5}, {"b", 0.6}};
  q.consistency = {{"a", 1.0}, {"b", 1.0}};
  CHECK(*room_for_personalization(q) == doctest::Approx(0.45));
  q.mv_acc = {{"a", 1.0}, {"b", 1.0}};
  CHECK(*room_for_personalization(q) == 0.0);
  q.consistency.clear();
  CHECK_FALSE(room_for_personalization(q).has_value());
}

TEST_CASE("consistency of coin-flip duplicates is near one half") {
  Rng rng(12);
  std::vector<ComparisonRecord> records;
  for (int t = 0; t < 4000; ++t) {
    const double v = t + 1.0;
    for (int k = 0; k < 2; ++k) {
      records.push_back(make_record("u0", {v, 0}, {0, v}, {v, v}, rng.bernoulli(0.5) ? 1 : 0));
    }
  }
  const auto c = consistency_estimate(PreferenceDataset(2, std::move(records)));
  CHECK(*c.at("u0") == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("consistency at tau 1 matches the expected agreement of each duplicate") {
  GeneratorConfig c;
  c.mode = GeneratorMode::kPersonalLlm;
  c.n_users = 8;
  c.n_triples = 2000;
  c.duplicate_fraction = 0.5;
  c.tau = 1.0;
  c.seed = 31;
  const auto g = generate_dataset(c);
  // Oracle: mean of p^2 + (1 - p)^2 over the duplicated triples, with p the
  // ground-truth label probability.
  std::map<std::string, const UserProfile*> prof;
  for (const auto& u : g.users) prof[u.user_id] = &u;
  std::map<std::pair<std::string, std::string>, int> seen;
  double oracle = 0.0;
  int n = 0;
  for (const auto& r : g.dataset.records()) {
    if (++seen[{r.user_id, r.triple_id}] != 2) continue;
    const auto& u = *prof.at(r.user_id);
    const double gap = user_utility(u, g.archetypes, r.x, r.y1) - user_utility(u, g.archetypes, r.x, r.y2);
    const double p = preference_probability(gap, u.tau);
    oracle += p * p + (1 - p) * (1 - p);
    ++n;
  }
  REQUIRE(n > 1000);
  oracle /= n;
  double mean = 0.0;
  int users = 0;
  for (const auto& [u, v] : consistency_estimate(g.dataset)) {
    REQUIRE(v.has_value());
    mean += *v;
    ++users;
  }
  mean /= users;
  CHECK(std::abs(mean - oracle) <= 0.02);
}

TEST_CASE("profile of a single-annotator dataset leaves divergence unavailable") {
  const auto p = profile_dataset(from_table({{1}, {0}, {1}}));
  CHECK_FALSE(p.divergence_rate.has_value());
  CHECK(p.n_records == 3);
  CHECK(p.n_triples == 3);
  CHECK(p.n_users == 1);
  const auto j = to_json(p);
  CHECK(j["divergence_rate"] == "unavailable");
  CHECK(render_profile_table("single", p).find("single") != std::string::npos);
}
