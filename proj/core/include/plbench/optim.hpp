#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plbench/params.hpp"

namespace plbench {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer(const std::string& text);
std::string to_string(OptimizerKind kind);

struct OptimConfig {
  double learning_rate = 1e-2;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 10;

  friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

void validate(const OptimConfig& config);
Json to_json(const OptimConfig& config);
OptimConfig optim_config_from_json(const Json& j);

/// A differentiable training objective over a fixed set of examples.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t size() const = 0;

  /// Mean loss over `batch`. When `grad` is non-null the gradient of that mean
  /// is added into it. `noise_seed` drives any sampling inside the loss
  /// (reparameterization noise, context draws); equal seeds give equal values.
  virtual double evaluate(const ParamSet& params, std::span<const std::size_t> batch,
                          ParamSet* grad, std::uint64_t noise_seed) const = 0;

  /// Mean loss over every example with a fixed noise seed.
  double full_loss(const ParamSet& params, std::uint64_t noise_seed) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> validation_loss;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingTrace {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool early_stopped = false;

  friend bool operator==(const TrainingTrace&, const TrainingTrace&) = default;
};

struct TrainResult {
  ParamSet params;
  TrainingTrace trace;
};

/// Mini-batch optimization of `objective` from `initial`. With a validation
/// objective, the parameters with the lowest validation loss are returned and
/// training stops after `patience` epochs without improvement. Throws
/// NumericError naming the epoch and batch if the loss becomes non-finite.
TrainResult optimize(const Objective& objective, ParamSet initial, const OptimConfig& config,
                     const Objective* validation = nullptr);

Json to_json(const TrainingTrace& trace);

}  // namespace plbench
