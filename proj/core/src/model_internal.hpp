#pragma once

#include <string>

#include "plbench/models.hpp"

namespace plbench {

// Stores the posterior-mean latent for `user_id` from a seeded draw of its pairs.
void install_vpl_latent(PreferenceModel& model, const std::string& user_id,
                        const PreferenceDataset& pairs);

}  // namespace plbench

namespace plbench {

// In-context probabilities for queries of a user with stored context.
std::vector<double> gpo_predict_batch(const GpoModel& model, const std::string& user,
                                      std::span<const ContextPair> queries);

}  // namespace plbench
