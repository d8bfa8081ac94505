#include "plbench/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "plbench/error.hpp"

namespace plbench {

GradCheckResult grad_check(const LossFn& loss, const ParamSet& params, std::size_t n_probes,
                           std::uint64_t seed) {
  const std::size_t total = params.total_size();
  if (total == 0) throw UsageError("grad_check: empty parameter set");
  ParamSet analytic = params.zeros_like();
  loss(params, &analytic);

  GradCheckResult result;
  Rng rng(derive_seed(seed, "grad-check"));
  ParamSet probe = params;
  for (std::size_t p = 0; p < n_probes; ++p) {
    const std::size_t k = rng.index(total);
    const double theta = params.coord(k);
    const double h = 1e-5 * std::max(1.0, std::abs(theta));
    probe.coord(k) = theta + h;
    const double up = loss(probe, nullptr);
    probe.coord(k) = theta - h;
    const double down = loss(probe, nullptr);
    probe.coord(k) = theta;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.coord(k);
    const double scale = std::max(std::abs(a), std::abs(numeric));
    const double err = scale < 1e-5 ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
    if (err > result.max_error || p == 0) {
      result.max_error = std::max(result.max_error, err);
      if (err >= result.max_error) {
        result.worst_coordinate = k;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

LossFn as_loss_fn(const Objective& objective, std::vector<std::size_t> batch,
                  std::uint64_t noise_seed) {
  return [&objective, batch = std::move(batch), noise_seed](const ParamSet& p, ParamSet* g) {
    return objective.evaluate(p, batch, g, noise_seed);
  };
}

}  // namespace plbench
