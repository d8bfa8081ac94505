#include "plbench/bt.hpp"

#include <cmath>

#include "plbench/error.hpp"

namespace plbench {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

double bt_prob(double r_plus, double r_minus) { return sigmoid(r_plus - r_minus); }

BtLoss bt_loss(std::span<const ScorePair> scores) {
  if (scores.empty()) throw UsageError("bt_loss: empty batch");
  BtLoss out;
  out.grad.resize(scores.size());
  const double inv_n = 1.0 / static_cast<double>(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double diff = scores[i].r_plus - scores[i].r_minus;
    total -= log_sigmoid(diff);
    // 1 - sigmoid(diff) == sigmoid(-diff)
    const double miss = sigmoid(-diff);
    out.grad[i] = ScorePair{-miss * inv_n, miss * inv_n};
  }
  out.loss = total * inv_n;
  return out;
}

}  // namespace plbench
