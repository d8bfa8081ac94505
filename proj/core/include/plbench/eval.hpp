#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "plbench/dataset.hpp"
#include "plbench/models.hpp"
#include "plbench/synthgen.hpp"

namespace plbench {

struct EvalReport {
  std::string method;
  double accuracy = 0.0;
  std::map<std::string, double> per_user;
  std::map<std::string, std::size_t> n_test;
  std::uint64_t seed = 0;
  Json config = Json::object();

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Per-user and overall accuracy of predicted labels. Ties are broken by a
/// coin seeded from (seed, triple_id, user_id), so the report does not depend
/// on record order. Throws UsageError on an empty test set.
EvalReport evaluate(const PreferenceModel& model, const PreferenceDataset& test,
                    UserPolicy policy = UserPolicy::kStrict, std::uint64_t seed = 0);

Json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const Json& j);

/// Method x user accuracy matrix; cells below 0.5 are flagged.
struct UserTable {
  std::vector<std::string> methods;
  std::vector<std::string> users;
  std::vector<std::vector<double>> accuracy;  // [method][user]
  std::vector<std::vector<bool>> flagged;
};

/// Throws DataError when the reports cover different user sets.
UserTable per_user_table(std::span<const EvalReport> reports);
/// Text rendering; flagged cells carry a trailing '*'.
std::string render_user_table(const UserTable& table);
/// One row per method/user cell: method,user,accuracy,flagged.
std::string to_csv(const UserTable& table);

// ---------------------------------------------------------------------------
// Cold-start adaptation.

struct AdaptationConfig {
  std::vector<std::size_t> budgets{30, 100, 300};
  /// Test pairs per held-out user: the last n_test records of that user.
  std::size_t n_test = 1000;
  std::vector<std::string> methods{"gpo", "similar-user", "finetune", "individual"};
  MethodOptions options;
  /// Optimizer for the in-context learner's meta-training.
  OptimConfig gpo_optim = default_gpo_optim();
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct AdaptationCurve {
  std::vector<std::size_t> budgets;
  std::map<std::string, std::vector<double>> accuracy;  // method -> per budget
  double upper_bound = 0.0;
  std::vector<std::string> held_out_users;
  std::uint64_t seed = 0;
};

std::vector<std::string> adaptation_methods();

/// Runs the few-shot protocol on the test users of a by-user split. Training
/// users come from split.train (split.validation feeds early stopping). Every
/// method sees the first b pool pairs of each held-out user for budget b.
/// `gpo` may supply an already meta-trained model.
AdaptationCurve adaptation_protocol(const DatasetSplit& split, const AdaptationConfig& config,
                                    const PreferenceModel* gpo = nullptr);

Json to_json(const AdaptationCurve& curve);
/// One row per method/budget cell plus an "upper-bound" row per budget.
std::string to_csv(const AdaptationCurve& curve);

// ---------------------------------------------------------------------------
// Probe set and personalization tax.

struct ProbeSet {
  PreferenceDataset dataset;  // single synthetic annotator "probe"
  double margin = 0.5;
};

/// Rejection-samples triples on which every archetype prefers the same
/// response by at least `margin` utility. Throws DataError when `max_draws`
/// candidates do not yield `n_probes` qualifying triples.
ProbeSet build_probe_set(std::span<const Archetype> archetypes, std::size_t dimension,
                         std::size_t n_probes, double margin, std::uint64_t seed,
                         std::size_t max_draws = 1000000);

struct TaxReport {
  double probe_before = 0.0;
  double probe_after = 0.0;
  double user_before = 0.0;
  double user_after = 0.0;
  double probe_delta = 0.0;
  double user_delta = 0.0;
  std::string user_id;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

/// Fine-tunes a copy of the pretrained vanilla model on the first 80% of
/// `user_data` and measures probe and held-out user accuracy before and after.
TaxReport personalization_tax(const PreferenceModel& pretrained, const PreferenceDataset& user_data,
                              const ProbeSet& probe, const OptimConfig& optim,
                              std::uint64_t seed = 0);

Json to_json(const TaxReport& report);

// ---------------------------------------------------------------------------
// Sample-efficiency sweep.

struct SweepCell {
  std::string method;
  std::size_t size = 0;
  double accuracy = 0.0;
};

/// Trains every method on nested subsets of split.train (prefixes of one
/// seeded permutation, restored to dataset order) and evaluates on split.test.
std::vector<SweepCell> sample_efficiency_sweep(std::span<const std::string> methods,
                                               const DatasetSplit& split,
                                               std::span<const std::size_t> sizes,
                                               const MethodOptions& options, std::uint64_t seed,
                                               std::size_t workers = 1);

std::string to_csv(std::span<const SweepCell> cells);

/// Nested training subset used by the sweep for `size`.
std::vector<std::size_t> nested_subset(std::size_t n, std::size_t size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// User embeddings for external projection plots.

struct EmbeddingRow {
  std::string user_id;
  std::string kind;  // "weights", "embedding", "latent"
  Embedding values;
};

/// Individual weights, PRM user embeddings (plus "u0"), or VPL latents.
std::vector<EmbeddingRow> export_user_embeddings(const PreferenceModel& model);
std::string to_csv(std::span<const EmbeddingRow> rows);

}  // namespace plbench
