#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "plbench/dataset.hpp"
#include "plbench/optim.hpp"
#include "plbench/params.hpp"

namespace plbench {

enum class MethodKind { kVanilla, kIndividual, kConditional, kPrm, kVpl, kGpo, kKnn };

MethodKind parse_method(const std::string& text);
std::string to_string(MethodKind kind);

// ---------------------------------------------------------------------------
// Model variants. Linear models score r(x, y) = w . feature_map(x, y).

struct VanillaModel {
  Embedding w;
  friend bool operator==(const VanillaModel&, const VanillaModel&) = default;
};

struct IndividualModel {
  std::map<std::string, Embedding> weights;
  friend bool operator==(const IndividualModel&, const IndividualModel&) = default;
};

/// Linear model over concat(one-hot(user), features).
struct ConditionalModel {
  std::vector<std::string> users;  // sorted; row order of user_bias
  Embedding user_bias;
  Embedding w;
  friend bool operator==(const ConditionalModel&, const ConditionalModel&) = default;
};

struct PrmConfig {
  double alpha = 0.8;
  std::size_t hidden = 32;
  std::size_t user_dim = 8;
  double embedding_init = 0.5;
  friend bool operator==(const PrmConfig&, const PrmConfig&) = default;
};

/// Two-layer trunk over concat(features, e_u) with a learned user table and a
/// shared user-agnostic embedding e_{u0}.
struct PrmModel {
  PrmConfig config;
  std::vector<std::string> users;  // sorted; row order of "users.table"
  ParamSet params;                 // trunk.w1, trunk.b1, trunk.v, users.table, users.generic
  friend bool operator==(const PrmModel&, const PrmModel&) = default;
};

struct VplConfig {
  std::size_t latent = 8;
  double beta = 0.1;
  std::size_t context = 8;
  std::size_t hidden = 32;
  friend bool operator==(const VplConfig&, const VplConfig&) = default;
};

/// Variational user model: a mean-pooling encoder maps context pairs to a
/// Gaussian posterior over z, a decoder scores (features, z).
struct VplModel {
  VplConfig config;
  ParamSet params;
  std::map<std::string, Embedding> user_latents;  // posterior means for known users
  friend bool operator==(const VplModel&, const VplModel&) = default;
};

struct GpoConfig {
  std::size_t context = 30;  // default context size at evaluation
  std::size_t width = 32;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t context_min = 10;  // episode context sizes are drawn from [min, max]
  std::size_t context_max = 60;
  std::size_t queries_per_episode = 16;
  std::size_t episodes_per_epoch = 512;
  friend bool operator==(const GpoConfig&, const GpoConfig&) = default;
};

/// Meta-training optimizer for the in-context learner: lr 3e-3 for 400
/// epochs keeping the best validation epoch. The shared defaults stop it far
/// too early, because episode validation loss is noisy.
OptimConfig default_gpo_optim();

/// One labeled comparison as seen by the in-context learner.
struct ContextPair {
  Embedding gap;  // feature_map(x, y1) - feature_map(x, y2)
  int label = 0;
  friend bool operator==(const ContextPair&, const ContextPair&) = default;
};

/// Permutation-invariant in-context learner: a query token attends over
/// embedded (gap, label) context tokens.
struct GpoModel {
  GpoConfig config;
  ParamSet params;
  std::map<std::string, std::vector<ContextPair>> contexts;
  friend bool operator==(const GpoModel&, const GpoModel&) = default;
};

struct KnnExample {
  Embedding x;
  Embedding y1;
  Embedding y2;
  int label = 0;
  friend bool operator==(const KnnExample&, const KnnExample&) = default;
};

/// Retrieval vote over each user's stored comparisons.
struct KnnModel {
  std::size_t k = 3;
  std::map<std::string, std::vector<KnnExample>> store;
  friend bool operator==(const KnnModel&, const KnnModel&) = default;
};

using ModelVariant = std::variant<VanillaModel, IndividualModel, ConditionalModel, PrmModel,
                                  VplModel, GpoModel, KnnModel>;

struct PreferenceModel {
  ModelVariant model;
  std::size_t dimension = 0;  // embedding dimension d (features have length 2d)
  Json config = Json::object();
  std::uint64_t seed = 0;

  MethodKind kind() const;
  friend bool operator==(const PreferenceModel&, const PreferenceModel&) = default;
};

struct ScoredPair {
  double p_prefer_y1 = 0.5;
  std::optional<double> r1;
  std::optional<double> r2;
};

/// How user-table models treat users they were not trained on.
enum class UserPolicy {
  kStrict,        // throw DataError("unseen user ...")
  kUserAgnostic,  // PRM uses e_{u0}, VPL uses the prior mean, Conditional drops the bias
};

// ---------------------------------------------------------------------------
// Training.

struct MethodOptions {
  OptimConfig optim;
  PrmConfig prm;
  VplConfig vpl;
  GpoConfig gpo;
  std::size_t knn_k = 3;
};

Json to_json(const MethodOptions& options);
MethodOptions method_options_from_json(const Json& j);

/// One record per multi-annotator triple carrying the strict-majority label
/// (first annotation per user); tied triples are dropped, single-annotator
/// triples pass through. The aggregate annotator is named "majority".
PreferenceDataset aggregate_majority(const PreferenceDataset& dataset);

PreferenceModel train_vanilla(const PreferenceDataset& train, const OptimConfig& optim,
                              const PreferenceDataset* validation = nullptr);
PreferenceModel train_individual(const PreferenceDataset& train, const OptimConfig& optim,
                                 const PreferenceDataset* validation = nullptr);
PreferenceModel train_conditional(const PreferenceDataset& train, const OptimConfig& optim,
                                  const PreferenceDataset* validation = nullptr);
PreferenceModel train_prm(const PreferenceDataset& train, const PrmConfig& config,
                          const OptimConfig& optim, const PreferenceDataset* validation = nullptr);
PreferenceModel train_vpl(const PreferenceDataset& train, const VplConfig& config,
                          const OptimConfig& optim, const PreferenceDataset* validation = nullptr);
/// Meta-trains on the users of `train`; `validation` users (if any) provide
/// fixed validation episodes. Needs at least two training users.
PreferenceModel train_gpo_lite(const PreferenceDataset& train, const GpoConfig& config,
                               const OptimConfig& optim,
                               const PreferenceDataset* validation = nullptr);
PreferenceModel build_knn(const PreferenceDataset& train, std::size_t k = 3);

PreferenceModel train_method(MethodKind kind, const PreferenceDataset& train,
                             const PreferenceDataset* validation, const MethodOptions& options);

/// Warm-started linear fine-tune: optimizes `start` on `data` under `optim`.
Embedding finetune_linear(const Embedding& start, const PreferenceDataset& data,
                          const OptimConfig& optim, const PreferenceDataset* validation = nullptr);

// ---------------------------------------------------------------------------
// Cold-start adaptation.

struct SimilarUserChoice {
  std::string user_id;
  double agreement = 0.0;
};

/// Existing user whose individual model agrees most often with the new user's
/// labels; ties go to the lexicographically smallest user id.
SimilarUserChoice adapt_similar_user(const PreferenceModel& individual,
                                     const PreferenceDataset& new_user_pairs);

/// One epoch of `optim` on the new user's pairs, starting from the vanilla
/// weights. The input model is left untouched.
PreferenceModel adapt_finetune(const PreferenceModel& vanilla,
                               const PreferenceDataset& new_user_pairs, OptimConfig optim);

/// Installs few-shot context for `user_id`: GPO keeps the pairs, VPL stores
/// the encoder's posterior mean, KNN stores the examples.
void attach_context(PreferenceModel& model, const std::string& user_id,
                    const PreferenceDataset& pairs);

// ---------------------------------------------------------------------------
// Scoring.

/// Scalar reward r(x, y, u) for score-based models (all but GPO and KNN).
double score(const PreferenceModel& model, std::span<const double> x, std::span<const double> y,
             const std::string& user, UserPolicy policy = UserPolicy::kStrict);

ScoredPair score_pair(const PreferenceModel& model, const ComparisonRecord& record,
                      UserPolicy policy = UserPolicy::kStrict);

/// 1 iff y1 is predicted to win; exact ties are broken by a fair coin drawn
/// from `tie_seed`.
int predict(const PreferenceModel& model, const ComparisonRecord& record, std::uint64_t tie_seed,
            UserPolicy policy = UserPolicy::kStrict);

ScoredPair knn_predict(const KnnModel& store, const std::string& user, std::span<const double> x,
                       std::span<const double> y1, std::span<const double> y2);

double gpo_predict(const GpoModel& model, std::span<const ContextPair> context,
                   std::span<const double> query_gap);

/// Users with a trained entry (user table, per-user weights, stored context).
std::vector<std::string> known_users(const PreferenceModel& model);

// ---------------------------------------------------------------------------
// Checkpoints.

Json to_json(const PreferenceModel& model);
PreferenceModel model_from_json(const Json& j);
void save_checkpoint(const PreferenceModel& model, const std::filesystem::path& path);
PreferenceModel load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Objectives, exposed for gradient checking and benchmarks.

/// Oriented feature gaps of a dataset: row i is phi(preferred) and
/// phi(dispreferred) for record i.
struct PairFeatures {
  std::size_t feature_dim = 0;
  std::vector<double> plus;
  std::vector<double> minus;
  std::vector<std::size_t> user_index;  // into `users`
  std::vector<std::string> users;

  std::size_t size() const { return user_index.size(); }
  std::span<const double> plus_row(std::size_t i) const {
    return {plus.data() + i * feature_dim, feature_dim};
  }
  std::span<const double> minus_row(std::size_t i) const {
    return {minus.data() + i * feature_dim, feature_dim};
  }
};

/// `users` fixes the user index order; records of other users are skipped
/// when `skip_unknown`, otherwise rejected.
PairFeatures make_pair_features(const PreferenceDataset& data,
                                std::span<const std::string> users, bool skip_unknown = false);

class LinearBtObjective : public Objective {
 public:
  explicit LinearBtObjective(PairFeatures features) : f_(std::move(features)) {}
  std::size_t size() const override { return f_.size(); }
  double evaluate(const ParamSet& params, std::span<const std::size_t> batch, ParamSet* grad,
                  std::uint64_t noise_seed) const override;
  static ParamSet init(std::size_t feature_dim);

 private:
  PairFeatures f_;
};

class ConditionalObjective : public Objective {
 public:
  explicit ConditionalObjective(PairFeatures features) : f_(std::move(features)) {}
  std::size_t size() const override { return f_.size(); }
  double evaluate(const ParamSet& params, std::span<const std::size_t> batch, ParamSet* grad,
                  std::uint64_t noise_seed) const override;
  static ParamSet init(std::size_t n_users, std::size_t feature_dim);

 private:
  PairFeatures f_;
};

class PrmObjective : public Objective {
 public:
  PrmObjective(PairFeatures features, double alpha) : f_(std::move(features)), alpha_(alpha) {}
  std::size_t size() const override { return f_.size(); }
  double evaluate(const ParamSet& params, std::span<const std::size_t> batch, ParamSet* grad,
                  std::uint64_t noise_seed) const override;
  static ParamSet init(const PrmConfig& config, std::size_t n_users, std::size_t feature_dim,
                       std::uint64_t seed);

 private:
  PairFeatures f_;
  double alpha_;
};

class VplObjective : public Objective {
 public:
  VplObjective(const PreferenceDataset& data, const VplConfig& config);
  std::size_t size() const override { return f_.size(); }
  double evaluate(const ParamSet& params, std::span<const std::size_t> batch, ParamSet* grad,
                  std::uint64_t noise_seed) const override;
  static ParamSet init(const VplConfig& config, std::size_t feature_dim, std::uint64_t seed);

 private:
  PairFeatures f_;
  std::vector<ContextPair> pairs_;                     // unoriented gap + label per record
  std::vector<std::vector<std::size_t>> by_user_;      // record indices per user
  std::vector<std::size_t> pos_in_user_;               // position of each record in by_user_
  VplConfig config_;
};

class GpoObjective : public Objective {
 public:
  GpoObjective(const PreferenceDataset& data, const GpoConfig& config, std::size_t episodes);
  std::size_t size() const override { return episodes_; }
  double evaluate(const ParamSet& params, std::span<const std::size_t> batch, ParamSet* grad,
                  std::uint64_t noise_seed) const override;
  static ParamSet init(const GpoConfig& config, std::size_t feature_dim, std::uint64_t seed);

 private:
  std::vector<std::vector<ContextPair>> by_user_;
  GpoConfig config_;
  std::size_t episodes_;
};

/// Encoder posterior mean for a context (length config.latent).
Embedding vpl_encode_mean(const VplModel& model, std::span<const ContextPair> context);

std::vector<ContextPair> to_context_pairs(const PreferenceDataset& data);

}  // namespace plbench
