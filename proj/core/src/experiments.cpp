#include "plbench/experiments.hpp"

#include <algorithm>

#include "plbench/error.hpp"
#include "plbench/parallel.hpp"

namespace plbench {

std::vector<EvalReport> run_method_comparison(const PreferenceDataset& data,
                                              const ComparisonConfig& config) {
  if (config.methods.empty()) throw UsageError("no methods requested");
  std::vector<MethodKind> kinds;
  for (const auto& m : config.methods) kinds.push_back(parse_method(m));
  const DatasetSplit split = split_dataset(data, config.split, config.fractions, config.seed);
  std::vector<EvalReport> reports(kinds.size());
  const PreferenceDataset* val = split.validation.empty() ? nullptr : &split.validation;
  parallel_for(kinds.size(), config.workers, [&](std::size_t i) {
    MethodOptions o = config.options;
    o.optim.seed = derive_seed(config.seed, "train:" + to_string(kinds[i]));
    const PreferenceModel model = train_method(kinds[i], split.train, val, o);
    reports[i] = evaluate(model, split.test, UserPolicy::kStrict, config.seed);
  });
  return reports;
}

double accuracy_spread(const std::vector<EvalReport>& reports) {
  if (reports.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(reports.begin(), reports.end(),
                                      [](const EvalReport& a, const EvalReport& b) {
                                        return a.accuracy < b.accuracy;
                                      });
  return hi->accuracy - lo->accuracy;
}

PreferenceModel train_probe_model(const ProbeSet& sample, const OptimConfig& optim) {
  return train_vanilla(sample.dataset, optim);
}

TaxExperimentResult run_tax_experiment(const TaxExperimentConfig& c) {
  GeneratorConfig tldr;
  tldr.mode = GeneratorMode::kTldr;
  tldr.n_users = c.n_users;
  tldr.n_triples = c.user_triples;
  tldr.dimension = c.dimension;
  tldr.duplicate_fraction = 0.0;
  tldr.seed = c.seed;
  const GeneratedData aligned = generate_dataset(tldr);

  GeneratorConfig soups = tldr;
  soups.mode = GeneratorMode::kSoups;
  const GeneratedData divergent = generate_dataset(soups);

  const ProbeSet probe =
      build_probe_set(aligned.archetypes, c.dimension, c.n_probes, c.margin, derive_seed(c.seed, "probe-eval"));
  const ProbeSet pretrain_sample = build_probe_set(aligned.archetypes, c.dimension, c.pretrain_probes,
                                                   c.margin, derive_seed(c.seed, "probe-pretrain"));
  const PreferenceModel pretrained = train_probe_model(pretrain_sample, c.pretrain_optim);

  TaxExperimentResult r;
  r.divergent = personalization_tax(pretrained, divergent.dataset.for_user(c.user_id), probe,
                                    c.finetune_optim, c.seed);
  r.aligned = personalization_tax(pretrained, aligned.dataset.for_user(c.user_id), probe,
                                  c.finetune_optim, c.seed);
  return r;
}

Json to_json(const TaxExperimentResult& r) {
  Json j;
  j["divergent"] = to_json(r.divergent);
  j["aligned"] = to_json(r.aligned);
  return j;
}

}  // namespace plbench
