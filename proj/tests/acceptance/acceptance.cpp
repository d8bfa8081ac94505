// Acceptance gate: one PASS/FAIL line per criterion.
//
//   plbench_acceptance [--only N[,M...]] [--workers K]
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <filesystem>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "plbench/bt.hpp"
#include "plbench/characterize.hpp"
#include "plbench/error.hpp"
#include "plbench/eval.hpp"
#include "plbench/experiments.hpp"
#include "plbench/grad_check.hpp"
#include "plbench/models.hpp"
#include "plbench/synthgen.hpp"

using namespace plbench;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::size_t g_workers = 1;

// ---------------------------------------------------------------------------
// 1. Metric oracles against brute-force enumeration.

PreferenceDataset random_small_dataset(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n_users = 1 + rng.index(10);
  const std::size_t n_triples = 1 + rng.index(50);
  std::vector<ComparisonRecord> records;
  for (std::size_t t = 0; t < n_triples; ++t) {
    Embedding x{rng.normal(), rng.normal()};
    Embedding y1{rng.normal(), rng.normal()};
    Embedding y2{rng.normal(), rng.normal()};
    for (std::size_t u = 0; u < n_users; ++u) {
      if (rng.bernoulli(0.3)) continue;  // user skips this triple
      const std::size_t times = rng.bernoulli(0.25) ? 2 + rng.index(2) : 1;
      for (std::size_t k = 0; k < times; ++k) {
        records.push_back(make_record("u" + std::to_string(u), x, y1, y2, rng.bernoulli(0.5) ? 1 : 0));
      }
    }
  }
  // Interleave annotations of different triples.
  rng.shuffle(records);
  return PreferenceDataset(2, std::move(records));
}

struct Oracle {
  std::optional<double> div, high;
  std::map<std::string, std::optional<double>> mv, cons;
};

// Direct enumeration over the record list; no grouping helpers.
Oracle brute_force(const PreferenceDataset& d, double threshold) {
  Oracle o;
  const auto& recs = d.records();
  std::set<std::string> triples;
  for (const auto& r : recs) triples.insert(r.triple_id);
  std::size_t multi = 0, divergent = 0, high = 0;
  std::map<std::string, std::pair<double, double>> mv;
  for (const auto& t : triples) {
    std::vector<std::string> seen;
    std::vector<int> labels;
    for (const auto& r : recs) {
      if (r.triple_id != t) continue;
      if (std::find(seen.begin(), seen.end(), r.user_id) != seen.end()) continue;
      seen.push_back(r.user_id);
      labels.push_back(r.label);
    }
    if (seen.size() < 2) continue;
    ++multi;
    int ones = 0;
    for (int l : labels) ones += l;
    const int n = static_cast<int>(labels.size());
    if (ones > 0 && ones < n) ++divergent;
    const int minority = std::min(ones, n - ones);
    // minority / n >= threshold with exact rational comparison for 0.30
    if (minority > 0 && 10 * minority >= static_cast<int>(std::lround(threshold * 10)) * n) ++high;
    for (std::size_t i = 0; i < seen.size(); ++i) {
      double credit = 2 * ones == n ? 0.5 : ((2 * ones > n ? 1 : 0) == labels[i] ? 1.0 : 0.0);
      mv[seen[i]].first += credit;
      mv[seen[i]].second += 1.0;
    }
  }
  if (multi > 0) {
    o.div = static_cast<double>(divergent) / static_cast<double>(multi);
    o.high = static_cast<double>(high) / static_cast<double>(multi);
  }
  std::set<std::string> users;
  for (const auto& r : recs) users.insert(r.user_id);
  for (const auto& u : users) {
    o.mv[u] = mv.count(u) ? std::optional<double>(mv[u].first / mv[u].second) : std::nullopt;
    // Consistency: over all unordered pairs of this user's annotations of the
    // same triple, the fraction that agree.
    double agree = 0, total = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (recs[i].user_id != u) continue;
      for (std::size_t j = i + 1; j < recs.size(); ++j) {
        if (recs[j].user_id != u || recs[j].triple_id != recs[i].triple_id) continue;
        total += 1;
        agree += recs[i].label == recs[j].label ? 1 : 0;
      }
    }
    o.cons[u] = total > 0 ? std::optional<double>(agree / total) : std::nullopt;
  }
  return o;
}

Outcome criterion1() {
  std::size_t mismatches = 0;
  std::string first;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const PreferenceDataset d = random_small_dataset(derive_seed(1001, "metric-oracle", s));
    const Oracle o = brute_force(d, 0.30);
    bool ok = divergence_rate(d) == o.div && high_divergence_rate(d, 0.30) == o.high &&
              mv_accuracy(d) == o.mv && consistency_estimate(d) == o.cons;
    if (!ok) {
      ++mismatches;
      if (first.empty()) first = " (first at dataset " + std::to_string(s) + ")";
    }
  }
  return {mismatches == 0, "200 random datasets, " + std::to_string(mismatches) + " mismatches" + first};
}

// ---------------------------------------------------------------------------
// 2. Table-1 regimes.

Outcome criterion2() {
  GeneratorConfig soups;
  soups.mode = GeneratorMode::kSoups;
  soups.n_users = 6;
  soups.n_triples = 2000;
  soups.seed = 11;
  auto ps = profile_dataset(generate_dataset(soups).dataset);
  double min_cons = 1.0;
  for (const auto& [u, c] : ps.consistency) min_cons = std::min(min_cons, c.value_or(0.0));

  GeneratorConfig tldr;
  tldr.mode = GeneratorMode::kTldr;
  tldr.n_users = 6;
  tldr.n_triples = 2000;
  tldr.seed = 12;
  auto pt = profile_dataset(generate_dataset(tldr).dataset);

  GeneratorConfig pl;
  pl.mode = GeneratorMode::kPersonalLlm;
  pl.n_users = 8;
  pl.n_triples = 2000;
  pl.minority_count = 1;
  pl.seed = 13;
  auto pp = profile_dataset(generate_dataset(pl).dataset);
  double min_mv = 1.0;
  for (const auto& [u, v] : pp.mv_acc) min_mv = std::min(min_mv, v.value_or(1.0));

  const double sd = ps.divergence_rate.value_or(0.0);
  const double td = pt.divergence_rate.value_or(0.0);
  bool pass = sd >= 0.98 && min_cons == 1.0 && td >= 0.4 && td <= 0.6 && min_mv < 0.5;
  return {pass, "soups div " + fmt("%.3f", sd) + " consistency " + fmt("%.3f", min_cons) +
                    "; tldr div " + fmt("%.3f", td) + "; personalllm min MV-ACC " +
                    fmt("%.3f", min_mv)};
}

// ---------------------------------------------------------------------------
// 3. Gradient checks.

Outcome criterion3() {
  GeneratorConfig g;
  g.mode = GeneratorMode::kPersonalLlm;
  g.n_users = 4;
  g.n_triples = 40;
  g.tau = 0.1;
  g.seed = 21;
  const PreferenceDataset d = generate_dataset(g).dataset;
  const auto& users = d.users();
  std::vector<std::size_t> batch(32);
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  const std::size_t fd = 2 * d.dimension();

  std::vector<std::pair<std::string, double>> errs;
  auto check = [&](const std::string& name, const Objective& obj, const ParamSet& p,
                   std::vector<std::size_t> b) {
    auto r = grad_check(as_loss_fn(obj, std::move(b), 99), p, 100, derive_seed(3, name));
    errs.emplace_back(name, r.max_error);
  };
  {
    LinearBtObjective obj(make_pair_features(d, users));
    ParamSet p = LinearBtObjective::init(fd);
    Rng rng(5);
    for (auto& v : p[0].values) v = rng.normal();
    check("vanilla", obj, p, batch);
  }
  {
    ConditionalObjective obj(make_pair_features(d, users));
    ParamSet p = ConditionalObjective::init(users.size(), fd);
    Rng rng(6);
    for (std::size_t t = 0; t < p.tensor_count(); ++t) {
      for (auto& v : p[t].values) v = rng.normal();
    }
    check("conditional", obj, p, batch);
  }
  {
    PrmObjective obj(make_pair_features(d, users), 0.8);
    check("prm", obj, PrmObjective::init(PrmConfig{}, users.size(), fd, 7), batch);
  }
  {
    VplObjective obj(d, VplConfig{});
    check("vpl", obj, VplObjective::init(VplConfig{}, fd, 8), batch);
  }
  {
    GpoConfig c;
    c.context_min = 5;
    c.context_max = 12;
    c.queries_per_episode = 4;
    GpoObjective obj(d, c, 8);
    check("gpo", obj, GpoObjective::init(c, fd, 9), {0, 1, 2, 3});
  }
  bool pass = true;
  std::string detail;
  for (const auto& [n, e] : errs) {
    pass = pass && e < 1e-4;
    detail += n + " " + fmt("%.1e", e) + "; ";
  }
  return {pass, detail + "100 probes each, tolerance 1e-4"};
}

// ---------------------------------------------------------------------------
// Shared training settings.

MethodOptions default_options() { return MethodOptions{}; }

std::map<std::string, double> by_method(const std::vector<EvalReport>& reps) {
  std::map<std::string, double> m;
  for (const auto& r : reps) m[r.method] = r.accuracy;
  return m;
}

// 4. High-divergence ordering.
Outcome criterion4() {
  bool pass = true;
  std::ostringstream detail;
  for (std::uint64_t seed : {41, 42, 43}) {
    GeneratorConfig g;
    g.mode = GeneratorMode::kSoups;
    g.n_users = 6;
    g.n_triples = 3030;  // about 20k records with 10% re-annotation
    g.tau = 0.0;
    g.seed = seed;
    const PreferenceDataset d = generate_dataset(g).dataset;
    ComparisonConfig c;
    c.methods = {"vanilla", "conditional", "individual", "prm"};
    c.options = default_options();
    c.seed = seed;
    c.workers = g_workers;
    auto reps = run_method_comparison(d, c);
    auto a = by_method(reps);
    const double spread = accuracy_spread(reps);
    bool ok = a["vanilla"] >= 0.45 && a["vanilla"] <= 0.55 && a["conditional"] >= 0.45 &&
              a["conditional"] <= 0.55 && a["individual"] >= 0.75 &&
              a["prm"] >= a["individual"] - 0.01 && spread >= 0.25;
    pass = pass && ok;
    detail << "seed " << seed << " (" << d.size() << " rec): van " << fmt("%.3f", a["vanilla"])
           << " cond " << fmt("%.3f", a["conditional"]) << " ind " << fmt("%.3f", a["individual"])
           << " prm " << fmt("%.3f", a["prm"]) << " (>= " << fmt("%.3f", a["individual"] - 0.01)
           << ") spread " << fmt("%.3f", spread) << "; ";
  }
  return {pass, detail.str()};
}

// 5. Low-divergence compression.
Outcome criterion5() {
  GeneratorConfig g;
  g.mode = GeneratorMode::kTldr;
  g.n_users = 6;
  g.n_triples = 2000;
  g.seed = 51;
  const PreferenceDataset d = generate_dataset(g).dataset;
  ComparisonConfig c;
  c.methods = {"vanilla", "conditional", "individual", "prm", "vpl"};
  c.seed = 51;
  c.workers = g_workers;
  auto reps = run_method_comparison(d, c);
  std::ostringstream detail;
  for (const auto& r : reps) detail << r.method << " " << fmt("%.3f", r.accuracy) << " ";
  const double spread = accuracy_spread(reps);
  detail << "spread " << fmt("%.3f", spread) << " (<= 0.08)";
  return {spread <= 0.08, detail.str()};
}

// 6. Minority protection.
Outcome criterion6() {
  GeneratorConfig g;
  g.mode = GeneratorMode::kPersonalLlm;
  g.n_users = 8;
  g.n_triples = 2000;
  g.minority_count = 1;
  g.seed = 61;
  const auto gen = generate_dataset(g);
  const std::string minority = gen.users.back().user_id;
  ComparisonConfig c;
  c.methods = {"vanilla", "individual", "prm"};
  c.seed = 61;
  c.workers = g_workers;
  auto reps = run_method_comparison(gen.dataset, c);
  std::map<std::string, double> m;
  for (const auto& r : reps) m[r.method] = r.per_user.at(minority);
  bool pass = m["vanilla"] < 0.5 && m["individual"] >= 0.65 && m["prm"] >= m["vanilla"] + 0.1;
  return {pass, "minority " + minority + ": vanilla " + fmt("%.3f", m["vanilla"]) + " individual " +
                    fmt("%.3f", m["individual"]) + " prm " + fmt("%.3f", m["prm"])};
}

// 7. Cold-start adaptation.
Outcome criterion7() {
  GeneratorConfig g;
  g.mode = GeneratorMode::kPersonalLlm;
  g.n_users = 40;
  g.n_triples = 1400;
  g.duplicate_fraction = 0.0;
  g.seed = 71;
  const PreferenceDataset d = generate_dataset(g).dataset;
  const DatasetSplit split = split_dataset(d, SplitMode::kByUser, {0.7, 0.1, 0.2}, 71);
  AdaptationConfig a;
  a.seed = 71;
  a.workers = g_workers;
  a.gpo_optim = default_gpo_optim();
  a.gpo_optim.seed = 71;
  a.options.optim.seed = 71;
  const AdaptationCurve curve = adaptation_protocol(split, a);
  const auto& gpo = curve.accuracy.at("gpo");
  bool pass = curve.upper_bound - gpo[0] <= 0.07;
  for (std::size_t i = 0; i < curve.budgets.size(); ++i) {
    pass = pass && gpo[i] > curve.accuracy.at("similar-user")[i] &&
           gpo[i] > curve.accuracy.at("finetune")[i];
    if (i > 0) pass = pass && gpo[i] >= gpo[i - 1] - 0.03;
  }
  std::ostringstream detail;
  detail << "upper " << fmt("%.3f", curve.upper_bound) << ", gap at " << curve.budgets[0] << " "
         << fmt("%.3f", curve.upper_bound - gpo[0]) << " (<= 0.07)";
  for (const auto& [m, v] : curve.accuracy) {
    detail << "; " << m;
    for (double x : v) detail << " " << fmt("%.3f", x);
  }
  return {pass, detail.str()};
}

// 8. Personalization tax direction.
Outcome criterion8() {
  TaxExperimentConfig c;
  c.seed = 81;
  const auto r = run_tax_experiment(c);
  bool pass = r.divergent.user_delta >= 0.1 && r.divergent.probe_delta <= -0.05 &&
              std::abs(r.aligned.probe_delta) <= 0.02;
  return {pass, "divergent user +" + fmt("%.3f", r.divergent.user_delta) + " probe " +
                    fmt("%+.3f", r.divergent.probe_delta) + "; aligned probe " +
                    fmt("%+.3f", r.aligned.probe_delta)};
}

// 9. Determinism and persistence.
Outcome criterion9() {
  GeneratorConfig g;
  g.mode = GeneratorMode::kPersonalLlm;
  g.n_users = 4;
  g.n_triples = 300;
  g.tau = 0.05;
  g.seed = 91;
  const PreferenceDataset d = generate_dataset(g).dataset;
  ComparisonConfig c;
  c.methods = {"vanilla", "individual", "conditional", "prm", "vpl", "knn"};
  c.seed = 91;
  c.options.optim.epochs = 20;
  auto dump = [&] {
    std::string s;
    for (const auto& r : run_method_comparison(d, c)) s += to_json(r).dump() + "\n";
    return s;
  };
  const bool reports_equal = dump() == dump();

  // Checkpoint round trip on a 1k-record fixture for every model type.
  GeneratorConfig f = g;
  f.n_triples = 250;
  f.seed = 92;
  const PreferenceDataset fixture = generate_dataset(f).dataset;
  const DatasetSplit split = split_dataset(fixture, SplitMode::kByTriple, {}, 92);
  MethodOptions o;
  o.optim.epochs = 10;
  o.gpo.episodes_per_epoch = 32;
  o.gpo.context_min = 5;
  o.gpo.context_max = 20;
  std::size_t mismatched = 0;
  std::size_t checked = 0;
  const auto dir = std::filesystem::temp_directory_path() / "plbench-acceptance";
  std::filesystem::create_directories(dir);
  for (auto kind : {MethodKind::kVanilla, MethodKind::kIndividual, MethodKind::kConditional,
                    MethodKind::kPrm, MethodKind::kVpl, MethodKind::kGpo, MethodKind::kKnn}) {
    const PreferenceModel m = train_method(kind, split.train, &split.validation, o);
    const auto path = dir / (to_string(kind) + ".json");
    save_checkpoint(m, path);
    const PreferenceModel back = load_checkpoint(path);
    for (const auto& r : fixture.records()) {
      ++checked;
      const ScoredPair a = score_pair(m, r);
      const ScoredPair b = score_pair(back, r);
      if (a.p_prefer_y1 != b.p_prefer_y1 || a.r1 != b.r1 || a.r2 != b.r2) ++mismatched;
    }
  }
  std::filesystem::remove_all(dir);
  const bool pass = reports_equal && mismatched == 0 && fixture.size() >= 1000;
  return {pass, std::string("reports ") + (reports_equal ? "identical" : "DIFFER") + "; " +
                    std::to_string(checked) + " checkpoint predictions, " +
                    std::to_string(mismatched) + " mismatches (fixture " +
                    std::to_string(fixture.size()) + " records)"};
}

// 10. Structural invariants as randomized property tests.
Outcome criterion10() {
  const std::size_t cases = 1000;
  GeneratorConfig g;
  g.mode = GeneratorMode::kPersonalLlm;
  g.n_users = 4;
  g.n_triples = 300;
  g.tau = 0.1;
  g.seed = 101;
  const PreferenceDataset d = generate_dataset(g).dataset;
  MethodOptions o;
  o.optim.epochs = 5;
  std::vector<PreferenceModel> models;
  for (auto k : {MethodKind::kVanilla, MethodKind::kIndividual, MethodKind::kConditional,
                 MethodKind::kPrm, MethodKind::kVpl}) {
    models.push_back(train_method(k, d, nullptr, o));
  }
  Rng rng(102);
  auto random_record = [&](const std::string& user) {
    return make_record(user, sample_unit_vector(8, rng), sample_unit_vector(8, rng),
                       sample_unit_vector(8, rng), 0);
  };
  // Antisymmetry.
  double worst_anti = 0.0;
  for (std::size_t i = 0; i < cases; ++i) {
    const auto& m = models[i % models.size()];
    ComparisonRecord r = random_record(d.users()[rng.index(d.users().size())]);
    ComparisonRecord s = r;
    std::swap(s.y1, s.y2);
    worst_anti = std::max(worst_anti, std::abs(score_pair(m, r).p_prefer_y1 + score_pair(m, s).p_prefer_y1 - 1.0));
  }
  // Translation invariance: shifting every reward of a user by a constant.
  std::size_t flips = 0;
  for (std::size_t i = 0; i < cases; ++i) {
    PreferenceModel shifted = models[2];
    auto& cm = std::get<ConditionalModel>(shifted.model);
    const double c = 20.0 * rng.uniform() - 10.0;
    for (auto& b : cm.user_bias) b += c;
    ComparisonRecord r = random_record(d.users()[rng.index(d.users().size())]);
    if (predict(models[2], r, 7) != predict(shifted, r, 7)) ++flips;
  }
  // GPO permutation invariance.
  GpoConfig gc;
  GpoModel gpo{gc, GpoObjective::init(gc, 16, 103), {}};
  double worst_perm = 0.0;
  const auto pairs = to_context_pairs(d);
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t n = 1 + rng.index(60);
    std::vector<ContextPair> ctx;
    for (std::size_t k = 0; k < n; ++k) ctx.push_back(pairs[rng.index(pairs.size())]);
    const auto& q = pairs[rng.index(pairs.size())].gap;
    const double a = gpo_predict(gpo, ctx, q);
    rng.shuffle(ctx);
    worst_perm = std::max(worst_perm, std::abs(a - gpo_predict(gpo, ctx, q)));
  }
  // PRM alpha limits.
  std::size_t nonzero = 0;
  const auto feats = make_pair_features(d, d.users());
  for (std::size_t i = 0; i < cases; ++i) {
    const double alpha = i % 2 == 0 ? 1.0 : 0.0;
    PrmObjective obj(feats, alpha);
    ParamSet p = PrmObjective::init(PrmConfig{}, d.users().size(), 16, derive_seed(104, "case", i));
    std::vector<std::size_t> batch(1 + rng.index(16));
    for (auto& b : batch) b = rng.index(feats.size());
    ParamSet grad = p.zeros_like();
    obj.evaluate(p, batch, &grad, 0);
    const auto& target = alpha == 1.0 ? grad.at("users.generic") : grad.at("users.table");
    for (double v : target.values) nonzero += v != 0.0 ? 1 : 0;
  }
  bool pass = worst_anti <= 1e-12 && flips == 0 && worst_perm <= 1e-6 && nonzero == 0;
  return {pass, std::to_string(cases) + " cases each: antisymmetry err " + fmt("%.1e", worst_anti) +
                    "; translation flips " + std::to_string(flips) + "; permutation err " +
                    fmt("%.1e", worst_perm) + "; alpha-limit nonzero grads " + std::to_string(nonzero)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (a == "--workers" && i + 1 < argc) {
      g_workers = static_cast<std::size_t>(std::stoul(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: %s [--only N[,M...]] [--workers K]\n", argv[0]);
      return 1;
    }
  }
  if (const char* w = std::getenv("PLBENCH_WORKERS"); w != nullptr && g_workers == 1) {
    g_workers = static_cast<std::size_t>(std::max(1L, std::atol(w)));
  }
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
