#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "plbench/dataset.hpp"

namespace plbench {

// Inter-personal metrics use each user's first annotation of a triple; later
// re-annotations only feed the consistency estimate. A triple counts as
// multi-annotator when at least two distinct users labeled it.

/// Fraction of multi-annotator triples where not all users agree.
/// nullopt when the dataset has no multi-annotator triple.
std::optional<double> divergence_rate(const PreferenceDataset& dataset);

/// Fraction of multi-annotator triples whose minority-label share is at
/// least `threshold`.
std::optional<double> high_divergence_rate(const PreferenceDataset& dataset,
                                           double threshold = 0.30);

/// Strict majority label; nullopt on a tie. Throws UsageError on empty input.
std::optional<int> majority_label(std::span<const Annotation> annotations);

/// Per-user agreement with the majority label of each shared triple. A tied
/// triple earns 0.5 credit. nullopt for users without multi-annotator triples.
std::map<std::string, std::optional<double>> mv_accuracy(const PreferenceDataset& dataset);

/// Duplicate-agreement rate per user: the fraction of pairs of annotations of
/// the same triple by the same user that carry the same label.
std::map<std::string, std::optional<double>> consistency_estimate(
    const PreferenceDataset& dataset);

struct DatasetProfile {
  std::optional<double> divergence_rate;
  std::optional<double> high_divergence_rate;
  double high_divergence_threshold = 0.30;
  std::map<std::string, std::optional<double>> mv_acc;
  std::set<std::string> minority_users;
  std::map<std::string, std::optional<double>> consistency;
  std::optional<double> room;
  std::size_t n_records = 0;
  std::size_t n_triples = 0;
  std::size_t n_users = 0;

  friend bool operator==(const DatasetProfile&, const DatasetProfile&) = default;
};

/// Users with MV-ACC strictly below `cutoff`.
std::set<std::string> minority_users(const DatasetProfile& profile, double cutoff = 0.5);

/// Mean over users of (consistency - MV-ACC), clipped to [-1, 1]. Users
/// lacking either value are skipped; nullopt if none remain.
std::optional<double> room_for_personalization(const DatasetProfile& profile);

DatasetProfile profile_dataset(const PreferenceDataset& dataset, double threshold = 0.30,
                               double minority_cutoff = 0.5);

Json to_json(const DatasetProfile& profile);
/// One Table-1 style text row plus a per-user block.
std::string render_profile_table(const std::string& name, const DatasetProfile& profile);

}  // namespace plbench
