#include "plbench/optim.hpp"

#include <cmath>
#include <numeric>

#include "plbench/error.hpp"

namespace plbench {

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd" || text == "plain-stochastic") return OptimizerKind::kSgd;
  if (text == "adam" || text == "adaptive-moment") return OptimizerKind::kAdam;
  throw UsageError("unknown optimizer '" + text + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

void validate(const OptimConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    throw UsageError("learning_rate must be finite and >= 0");
  }
  if (c.batch_size == 0) throw UsageError("batch_size must be >= 1");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw UsageError("moment decay rates must lie in [0, 1)");
  }
  if (!(c.epsilon > 0.0)) throw UsageError("epsilon must be positive");
}

Json to_json(const OptimConfig& c) {
  Json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["optimizer"] = to_string(c.optimizer);
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["seed"] = c.seed;
  j["patience"] = c.patience;
  return j;
}

OptimConfig optim_config_from_json(const Json& j) {
  OptimConfig c;
  try {
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("learning_rate", c.learning_rate);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("epsilon", c.epsilon);
    get("seed", c.seed);
    get("patience", c.patience);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed optimizer config: ") + e.what());
  }
  return c;
}

double Objective::full_loss(const ParamSet& params, std::uint64_t noise_seed) const {
  std::vector<std::size_t> all(size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (all.empty()) return 0.0;
  return evaluate(params, all, nullptr, noise_seed);
}

namespace {

class Stepper {
 public:
  Stepper(const OptimConfig& config, const ParamSet& shape)
      : config_(config), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

  void step(ParamSet& params, const ParamSet& grad) {
    ++t_;
    const double lr = config_.learning_rate;
    if (config_.optimizer == OptimizerKind::kSgd) {
      params.axpy(-lr, grad);
      return;
    }
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.tensor_count(); ++i) {
      auto p = params.values(i);
      auto g = grad.values(i);
      auto m = m_.values(i);
      auto v = v_.values(i);
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
      }
    }
  }

 private:
  const OptimConfig& config_;
  ParamSet m_;
  ParamSet v_;
  std::size_t t_ = 0;
};

}  // namespace

TrainResult optimize(const Objective& objective, ParamSet initial, const OptimConfig& config,
                     const Objective* validation) {
  validate(config);
  TrainResult result;
  result.params = std::move(initial);
  const std::size_t n = objective.size();
  if (n == 0) throw DataError("optimize: objective has no examples");

  Stepper stepper(config, result.params);
  ParamSet grad = result.params.zeros_like();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  const bool use_validation = validation != nullptr && validation->size() > 0;
  const std::uint64_t val_seed = derive_seed(config.seed, "validation-noise");
  std::optional<double> best_val;
  ParamSet best_params;
  std::size_t since_best = 0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, "epoch-order", epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      grad.set_zero();
      const double loss =
          objective.evaluate(result.params, batch, &grad, derive_seed(config.seed, "batch-noise", step++));
      if (!std::isfinite(loss) || !grad.all_finite()) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      loss_sum += loss * static_cast<double>(batch.size());
      stepper.step(result.params, grad);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(n), std::nullopt};
    if (use_validation) {
      const double v = validation->full_loss(result.params, val_seed);
      if (!std::isfinite(v)) {
        throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
      }
      rec.validation_loss = v;
      if (!best_val || v < *best_val) {
        best_val = v;
        best_params = result.params;
        result.trace.best_epoch = epoch;
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      result.trace.best_epoch = epoch;
    }
    result.trace.epochs.push_back(rec);
    if (use_validation && config.patience > 0 && since_best >= config.patience) {
      result.trace.early_stopped = true;
      break;
    }
  }
  if (use_validation && best_val) result.params = std::move(best_params);
  return result;
}

Json to_json(const TrainingTrace& trace) {
  Json epochs = Json::array();
  for (const auto& e : trace.epochs) {
    Json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["validation_loss"] = e.validation_loss ? Json(*e.validation_loss) : Json(nullptr);
    epochs.push_back(std::move(j));
  }
  Json j;
  j["epochs"] = std::move(epochs);
  j["best_epoch"] = trace.best_epoch;
  j["early_stopped"] = trace.early_stopped;
  return j;
}

}  // namespace plbench
