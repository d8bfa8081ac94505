#pragma once

#include <cstdint>
#include <functional>

#include "plbench/optim.hpp"

namespace plbench {

/// Loss with analytic gradient: returns the loss and, when `grad` is non-null,
/// adds d loss / d params into it.
using LossFn = std::function<double(const ParamSet& params, ParamSet* grad)>;

struct GradCheckResult {
  double max_error = 0.0;
  std::size_t worst_coordinate = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the analytic gradient with central differences at `n_probes`
/// random coordinates (step 1e-5 scaled by max(1, |theta|)). The error is
/// relative, or absolute when both gradients are below 1e-5 in magnitude.
GradCheckResult grad_check(const LossFn& loss, const ParamSet& params, std::size_t n_probes,
                           std::uint64_t seed);

/// Fixed-batch, fixed-noise view of an objective.
LossFn as_loss_fn(const Objective& objective, std::vector<std::size_t> batch,
                  std::uint64_t noise_seed);

}  // namespace plbench
