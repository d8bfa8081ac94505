#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plbench/dataset.hpp"
#include "plbench/random.hpp"

namespace plbench {

/// Population archetypes the generator can reproduce.
///  - kSoups: opposing sign patterns over a few orthogonal directions plus a
///    weak shared component; users come in opposed pairs, every user
///    annotates every triple and disagreement is near-universal.
///  - kPersonalLlm: users are Dirichlet mixtures of random archetypes, with
///    optional adversarial minority users.
///  - kTldr: users share one consensus direction plus a small perturbation.
enum class GeneratorMode { kSoups, kPersonalLlm, kTldr };

GeneratorMode parse_generator_mode(const std::string& text);
std::string to_string(GeneratorMode mode);

struct Archetype {
  int id = 0;
  Embedding utility;  // length 2 * dimension, unit norm

  friend bool operator==(const Archetype&, const Archetype&) = default;
};

struct UserProfile {
  std::string user_id;
  std::vector<double> mixture_weights;  // over archetypes, sums to 1
  double tau = 0.0;                     // consistency temperature

  friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

struct GeneratorConfig {
  GeneratorMode mode = GeneratorMode::kSoups;
  std::size_t n_users = 6;
  std::size_t n_triples = 1000;
  std::size_t dimension = 8;
  /// Label noise temperature; unset means the mode default (default_tau).
  std::optional<double> tau;
  std::size_t minority_count = 0;
  double duplicate_fraction = 0.1;
  std::uint64_t seed = 0;

  std::size_t sign_dimensions = 3;  // soups: number of opposing directions
  /// soups: weight of the consensus direction in every persona. Opposed pairs
  /// tie on every triple without it, which leaves no majority labels.
  double shared_weight = 0.1;
  std::size_t n_archetypes = 8;     // personalllm: archetype count
  double dirichlet_alpha = 1.0;     // personalllm: mixture concentration
  double minority_weight = 0.92;    // personalllm: weight on the isolated archetype
  /// tldr: perturbation scale; calibrated by bisection when unset.
  std::optional<double> perturbation_scale;
  double divergence_target = 0.49;  // tldr calibration target
};

/// 0.05 for kTldr (moderate annotator noise), 0 otherwise.
double default_tau(GeneratorMode mode);
/// config.tau when set, else the mode default.
double effective_tau(const GeneratorConfig& config);

/// Validates counts and ranges; throws UsageError naming the first violation.
void validate(const GeneratorConfig& config);

Json to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const Json& j);

struct GeneratedData {
  PreferenceDataset dataset;
  std::vector<UserProfile> users;
  std::vector<Archetype> archetypes;
};

/// concat(y, x * y) with * the elementwise product.
Embedding feature_map(std::span<const double> x, std::span<const double> y);
/// feature_map(x, y1) - feature_map(x, y2), written without temporaries.
void feature_gap(std::span<const double> x, std::span<const double> y1,
                 std::span<const double> y2, std::span<double> out);

/// Unit direction shared by every population built from `seed`.
Embedding consensus_direction(std::size_t dimension, std::uint64_t seed);

/// Builds k archetypes of length 2d. kSoups requires k to be a power of two;
/// kTldr perturbs the consensus direction by `perturbation_scale`; kSoups adds
/// `shared_weight` times the consensus direction before normalizing.
std::vector<Archetype> make_archetypes(std::size_t k, GeneratorMode mode, std::size_t dimension,
                                       std::uint64_t seed, double perturbation_scale = 0.0,
                                       double shared_weight = 0.0);

/// Mixture-weighted utility direction of a user.
Embedding user_direction(const UserProfile& user, std::span<const Archetype> archetypes);
double user_utility(const UserProfile& user, std::span<const Archetype> archetypes,
                    std::span<const double> x, std::span<const double> y);
/// Probability that the user labels y1 as preferred.
double preference_probability(double utility_gap, double tau);
int sample_comparison(const UserProfile& user, std::span<const Archetype> archetypes,
                      std::span<const double> x, std::span<const double> y1,
                      std::span<const double> y2, Rng& rng);

/// Unit-normalized standard normal vector.
Embedding sample_unit_vector(std::size_t dimension, Rng& rng);

/// Persona indices used for the first n soups-like users.
std::vector<std::size_t> soups_persona_order(std::size_t n_users, std::size_t sign_dimensions);

double calibrate_tldr_perturbation(const GeneratorConfig& config);

GeneratedData generate_dataset(const GeneratorConfig& config);

std::filesystem::path profiles_path_for(const std::filesystem::path& dataset_path);

struct PopulationFile {
  std::vector<Archetype> archetypes;
  std::vector<UserProfile> users;
  std::size_t dimension = 0;
};

std::string profiles_to_string(std::span<const Archetype> archetypes,
                               std::span<const UserProfile> users, std::size_t dimension);
void save_profiles(const std::filesystem::path& path, std::span<const Archetype> archetypes,
                   std::span<const UserProfile> users, std::size_t dimension);
PopulationFile load_profiles(const std::filesystem::path& path);

}  // namespace plbench
