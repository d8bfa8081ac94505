#pragma once

#include <span>
#include <utility>
#include <vector>

namespace plbench {

/// Logistic function, stable for large |z|.
double sigmoid(double z);
/// log(sigmoid(z)) without overflow or cancellation.
double log_sigmoid(double z);

/// Bradley-Terry probability that the response scored r_plus beats the one
/// scored r_minus.
double bt_prob(double r_plus, double r_minus);

struct ScorePair {
  double r_plus = 0.0;
  double r_minus = 0.0;
};

struct BtLoss {
  double loss = 0.0;
  /// d loss / d (r_plus, r_minus) for each pair; already divided by the batch size.
  std::vector<ScorePair> grad;
};

/// Mean negative log-likelihood of the batch under the BT model.
BtLoss bt_loss(std::span<const ScorePair> scores);

}  // namespace plbench
