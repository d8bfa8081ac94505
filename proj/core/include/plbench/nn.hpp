#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "plbench/params.hpp"

namespace plbench::nn {

double dot(std::span<const double> a, std::span<const double> b);

/// y = W x + b with W stored row-major as (out x in). `b` may be empty.
void affine(std::span<const double> W, std::span<const double> b, std::span<const double> x,
            std::span<double> y);

/// Backward pass of `affine`: dW += dy x^T, db += dy, dx += W^T dy.
/// Empty `db` or `dx` spans are skipped.
void affine_backward(std::span<const double> W, std::span<const double> x,
                     std::span<const double> dy, std::span<double> dW, std::span<double> db,
                     std::span<double> dx);

/// s(in) = v . tanh(W in + b): the scalar reward head shared by the
/// personalized trunk and the latent-variable decoder.
class TwoLayerScorer {
 public:
  TwoLayerScorer() = default;

  static TwoLayerScorer create(ParamSet& params, const std::string& prefix, std::size_t in_dim,
                               std::size_t hidden, Rng& rng);
  static TwoLayerScorer bind(const ParamSet& params, const std::string& prefix);

  std::size_t in_dim() const { return in_dim_; }
  std::size_t hidden() const { return hidden_; }

  /// Writes tanh activations into `act` (size hidden) and returns the score.
  double forward(const ParamSet& params, std::span<const double> in, std::span<double> act) const;
  /// Adds d(ds * s)/d params into `grad`; adds d(ds * s)/d in into `din` if non-empty.
  void backward(const ParamSet& params, std::span<const double> in, std::span<const double> act,
                double ds, ParamSet& grad, std::span<double> din) const;

 private:
  std::size_t w_ = 0, b_ = 0, v_ = 0;
  std::size_t in_dim_ = 0, hidden_ = 0;
};

}  // namespace plbench::nn
