// Microbenchmarks for the hot loops: BT loss, objective gradients, GPO
// forward passes and dataset generation.

#include <benchmark/benchmark.h>

#include <numeric>

#include "plbench/bt.hpp"
#include "plbench/models.hpp"
#include "plbench/synthgen.hpp"

using namespace plbench;

namespace {

PreferenceDataset population(std::size_t users, std::size_t triples) {
  GeneratorConfig c;
  c.mode = GeneratorMode::kPersonalLlm;
  c.n_users = users;
  c.n_triples = triples;
  c.seed = 1;
  return generate_dataset(c).dataset;
}

std::vector<std::size_t> iota_batch(std::size_t n) {
  std::vector<std::size_t> b(n);
  std::iota(b.begin(), b.end(), std::size_t{0});
  return b;
}

void BM_BtLoss(benchmark::State& state) {
  Rng rng(1);
  std::vector<ScorePair> s(static_cast<std::size_t>(state.range(0)));
  for (auto& p : s) p = {rng.normal(), rng.normal()};
  for (auto _ : state) benchmark::DoNotOptimize(bt_loss(s));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BtLoss)->Arg(64)->Arg(4096);

void BM_LinearGradient(benchmark::State& state) {
  const auto data = population(4, 256);
  std::vector<std::string> users{data.users().begin(), data.users().end()};
  LinearBtObjective obj(make_pair_features(data, users));
  auto p = LinearBtObjective::init(2 * data.dimension());
  auto g = p.zeros_like();
  const auto batch = iota_batch(64);
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(p, batch, &g, 0));
}
BENCHMARK(BM_LinearGradient);

void BM_PrmGradient(benchmark::State& state) {
  const auto data = population(4, 256);
  std::vector<std::string> users{data.users().begin(), data.users().end()};
  PrmObjective obj(make_pair_features(data, users), 0.8);
  auto p = PrmObjective::init(PrmConfig{}, users.size(), 2 * data.dimension(), 1);
  auto g = p.zeros_like();
  const auto batch = iota_batch(64);
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(p, batch, &g, 0));
}
BENCHMARK(BM_PrmGradient);

void BM_GpoPredict(benchmark::State& state) {
  GpoModel m;
  m.params = GpoObjective::init(m.config, 16, 1);
  Rng rng(2);
  std::vector<ContextPair> ctx;
  for (std::int64_t i = 0; i < state.range(0); ++i) ctx.push_back({rng.normal_vector(16), int(i % 2)});
  const auto q = rng.normal_vector(16);
  for (auto _ : state) benchmark::DoNotOptimize(gpo_predict(m, ctx, q));
}
BENCHMARK(BM_GpoPredict)->Arg(30)->Arg(100)->Arg(300);

void BM_GpoEpisodeGradient(benchmark::State& state) {
  const auto data = population(8, 200);
  GpoConfig cfg;
  GpoObjective obj(data, cfg, 8);
  auto p = GpoObjective::init(cfg, 2 * data.dimension(), 1);
  auto g = p.zeros_like();
  const std::vector<std::size_t> batch{0};
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(p, batch, &g, 3));
}
BENCHMARK(BM_GpoEpisodeGradient);

void BM_Generate(benchmark::State& state) {
  GeneratorConfig c;
  c.mode = GeneratorMode::kSoups;
  c.n_users = 6;
  c.n_triples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(c));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 6);
}
BENCHMARK(BM_Generate)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
