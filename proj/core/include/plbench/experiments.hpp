#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "plbench/eval.hpp"
#include "plbench/synthgen.hpp"

namespace plbench {

/// Train every method on one split of `data` and evaluate on its test part.
struct ComparisonConfig {
  std::vector<std::string> methods{"vanilla", "individual", "conditional", "prm", "vpl"};
  MethodOptions options;
  SplitMode split = SplitMode::kByTriple;
  SplitFractions fractions;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

std::vector<EvalReport> run_method_comparison(const PreferenceDataset& data,
                                              const ComparisonConfig& config);

/// Max minus min overall accuracy across reports.
double accuracy_spread(const std::vector<EvalReport>& reports);

/// The pretrained model of the tax experiment: a vanilla model fit to a probe
/// sample, the stand-in for a capability-aligned reward model.
PreferenceModel train_probe_model(const ProbeSet& sample, const OptimConfig& optim);

struct TaxExperimentConfig {
  std::size_t dimension = 8;
  std::size_t n_users = 6;
  std::size_t user_triples = 1000;  // triples in each personal dataset
  std::size_t n_probes = 500;
  double margin = 0.5;
  std::size_t pretrain_probes = 2000;
  std::string user_id = "u01";
  OptimConfig pretrain_optim;
  OptimConfig finetune_optim;
  std::uint64_t seed = 0;
};

struct TaxExperimentResult {
  TaxReport divergent;  // soups-like user
  TaxReport aligned;    // tldr-like user
};

/// Builds the probe from the tldr-like population of `seed`, pretrains on a
/// separate probe sample, then fine-tunes on one soups-like and one tldr-like
/// user generated from the same seed.
TaxExperimentResult run_tax_experiment(const TaxExperimentConfig& config);

Json to_json(const TaxExperimentResult& result);

}  // namespace plbench
