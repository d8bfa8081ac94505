#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "plbench/dataset.hpp"
#include "plbench/error.hpp"

using namespace plbench;

namespace {

std::set<std::string> user_set(const PreferenceDataset& d) {
  return {d.users().begin(), d.users().end()};
}

std::set<std::string> triple_set(const PreferenceDataset& d) {
  std::set<std::string> s;
  for (const auto& r : d.records()) s.insert(r.triple_id);
  return s;
}

std::multiset<std::string> record_keys(const PreferenceDataset& d) {
  std::multiset<std::string> s;
  for (const auto& r : d.records()) s.insert(r.triple_id + "/" + r.user_id + "/" + std::to_string(r.label));
  return s;
}

}  // namespace

TEST_CASE("quantize keeps 9 significant digits and is idempotent") {
  CHECK(quantize(0.1234567891234) == doctest::Approx(0.123456789).epsilon(1e-15));
  CHECK(quantize(quantize(3.14159265358979)) == quantize(3.14159265358979));
  CHECK(quantize(0.0) == 0.0);
}

TEST_CASE("triple ids depend only on rounded content") {
  const Embedding x{0.1, 0.2}, y1{0.3, 0.4}, y2{0.5, 0.6};
  CHECK(make_triple_id(x, y1, y2) == make_triple_id(x, y1, y2));
  CHECK(make_triple_id(x, y1, y2) != make_triple_id(x, y2, y1));
  const Embedding x_noisy{0.1 + 1e-13, 0.2};
  CHECK(make_record("a", x_noisy, y1, y2, 1).triple_id == make_record("a", x, y1, y2, 0).triple_id);
}

TEST_CASE("dataset constructor rejects bad records") {
  CHECK_THROWS_AS(PreferenceDataset(2, {make_record("a", {1, 2}, {1, 2}, {1}, 1)}), DataError);
  CHECK_THROWS_AS(PreferenceDataset(2, {make_record("a", {1, 2}, {1, 2}, {3, 4}, 2)}), DataError);
  const PreferenceDataset d(2, {make_record("b", {1, 2}, {1, 2}, {3, 4}, 1),
                                make_record("a", {1, 2}, {1, 2}, {3, 4}, 0)});
  CHECK(d.users() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("load_dataset on an empty file reports an empty dataset") {
  fixtures::TempDir dir("empty");
  std::ofstream(dir / "e.jsonl").close();
  try {
    load_dataset(dir / "e.jsonl");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("empty dataset") != std::string::npos);
  }
}

TEST_CASE("load_dataset names the line holding a truncated vector") {
  fixtures::TempDir dir("trunc");
  const auto d = fixtures::coin_dataset(16, 2, 5, 3);
  save_dataset(d, dir / "d.jsonl");
  // Line 1 is the header; line 7 holds record 6 (0-based 5).
  std::ifstream in(dir / "d.jsonl");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 11);
  auto j = Json::parse(lines[6]);
  j["y1"].erase(j["y1"].size() - 1);
  lines[6] = j.dump();
  std::ofstream out(dir / "bad.jsonl");
  for (const auto& l : lines) out << l << "\n";
  out.close();
  try {
    load_dataset(dir / "bad.jsonl");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).rfind("line 7:", 0) == 0);
  }
}

TEST_CASE("save/load round trip is exact and saving is deterministic") {
  fixtures::TempDir dir("rt");
  DatasetMetadata meta;
  meta.generator = Json{{"mode", "test"}, {"alpha", 0.25}};
  meta.seed = 99;
  const auto base = fixtures::coin_dataset(4, 3, 20, 11);
  const PreferenceDataset d(4, base.records(), meta);
  save_dataset(d, dir / "a.jsonl");
  save_dataset(d, dir / "b.jsonl");
  CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));
  CHECK(load_dataset(dir / "a.jsonl") == d);
}

TEST_CASE("empty-record dataset saves as a header-only file") {
  fixtures::TempDir dir("hdr");
  const PreferenceDataset d(3, {}, DatasetMetadata{Json::object(), 5});
  save_dataset(d, dir / "h.jsonl");
  const auto text = read_file(dir / "h.jsonl");
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  const auto back = load_dataset(dir / "h.jsonl");
  CHECK(back.empty());
  CHECK(back.dimension() == 3);
  CHECK(back.metadata().seed == 5);
}

TEST_CASE("split fractions (1, 0, 0) put everything in train") {
  const auto d = fixtures::coin_dataset(2, 3, 10, 1);
  for (auto mode : {SplitMode::kByTriple, SplitMode::kByUser}) {
    const auto s = split_dataset(d, mode, {1.0, 0.0, 0.0}, 4);
    CHECK(s.train == d);
    CHECK(s.validation.empty());
    CHECK(s.test.empty());
  }
}

TEST_CASE("by-user split of 8 users at (0.75, 0, 0.25)") {
  const auto d = fixtures::coin_dataset(2, 8, 10, 2);
  const auto s = split_dataset(d, SplitMode::kByUser, {0.75, 0.0, 0.25}, 1);
  const auto tr = user_set(s.train), te = user_set(s.test);
  CHECK(tr.size() == 6);
  CHECK(te.size() == 2);
  std::vector<std::string> both;
  std::set_intersection(tr.begin(), tr.end(), te.begin(), te.end(), std::back_inserter(both));
  CHECK(both.empty());
  CHECK(s.train.size() + s.test.size() == d.size());
}

TEST_CASE("by-triple split partitions records with disjoint triples") {
  const auto d = fixtures::coin_dataset(2, 3, 50, 5);
  const auto s = split_dataset(d, SplitMode::kByTriple, {0.6, 0.2, 0.2}, 9);
  const auto a = triple_set(s.train), b = triple_set(s.validation), c = triple_set(s.test);
  for (const auto& t : a) CHECK((b.count(t) == 0 && c.count(t) == 0));
  for (const auto& t : b) CHECK(c.count(t) == 0);
  auto all = record_keys(s.train);
  for (const auto* p : {&s.validation, &s.test}) {
    const auto k = record_keys(*p);
    all.insert(k.begin(), k.end());
  }
  CHECK(all == record_keys(d));
}

TEST_CASE("split is a pure function of the seed") {
  const auto d = fixtures::coin_dataset(2, 4, 40, 6);
  const auto s1 = split_dataset(d, SplitMode::kByTriple, {0.5, 0.25, 0.25}, 1);
  const auto s1b = split_dataset(d, SplitMode::kByTriple, {0.5, 0.25, 0.25}, 1);
  const auto s2 = split_dataset(d, SplitMode::kByTriple, {0.5, 0.25, 0.25}, 2);
  CHECK(s1.train == s1b.train);
  CHECK(s1.test == s1b.test);
  CHECK_FALSE(s1.train == s2.train);
}

TEST_CASE("split preconditions") {
  const auto d = fixtures::coin_dataset(2, 2, 10, 7);
  CHECK_THROWS_AS(split_dataset(d, SplitMode::kByTriple, {0.5, 0.2, 0.2}, 1), UsageError);
  CHECK_THROWS_AS(split_dataset(d, SplitMode::kByTriple, {1.2, -0.2, 0.0}, 1), UsageError);
  CHECK_THROWS_AS(split_dataset(d, SplitMode::kByUser, {0.4, 0.3, 0.3}, 1), DataError);
  CHECK(parse_split_mode("by-user") == SplitMode::kByUser);
  CHECK_THROWS_AS(parse_split_mode("users"), UsageError);
}

TEST_CASE("group_by_triple on small fixtures") {
  const PreferenceDataset one(2, {make_record("a", {1, 0}, {0, 1}, {1, 1}, 1)});
  const auto g1 = group_by_triple(one);
  REQUIRE(g1.size() == 1);
  CHECK(g1.begin()->second == std::vector<Annotation>{{"a", 1}});

  const auto d = fixtures::coin_dataset(2, 3, 4, 8);
  const auto g = group_by_triple(d);
  CHECK(g.size() == 4);
  for (const auto& [id, anns] : g) CHECK(anns.size() == 3);
}

TEST_CASE("group_by_triple matches a quadratic scan") {
  Rng rng(21);
  std::vector<ComparisonRecord> pool;
  for (int t = 0; t < 15; ++t) {
    pool.push_back(make_record("u0", rng.normal_vector(2), rng.normal_vector(2),
                               rng.normal_vector(2), 0));
  }
  std::vector<ComparisonRecord> records;
  for (int i = 0; i < 100; ++i) {
    auto r = pool[rng.index(pool.size())];
    r.user_id = "u" + std::to_string(rng.index(6));
    r.label = rng.bernoulli(0.5) ? 1 : 0;
    records.push_back(r);
  }
  const PreferenceDataset d(2, records);
  const auto g = group_by_triple(d);
  std::size_t total = 0;
  for (const auto& [id, anns] : g) total += anns.size();
  CHECK(total == d.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::vector<Annotation> expect;
    for (std::size_t j = 0; j < records.size(); ++j) {
      if (records[j].triple_id == records[i].triple_id) {
        expect.push_back({records[j].user_id, records[j].label});
      }
    }
    CHECK(g.at(records[i].triple_id) == expect);
  }
}

TEST_CASE("derive_seed separates tags and indices") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}
