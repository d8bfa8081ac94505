#include "plbench/nn.hpp"

#include <cmath>
#include <vector>

#include "plbench/error.hpp"

namespace plbench::nn {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void affine(std::span<const double> W, std::span<const double> b, std::span<const double> x,
            std::span<double> y) {
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    const double* row = W.data() + o * in;
    double s = b.empty() ? 0.0 : b[o];
    for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

void affine_backward(std::span<const double> W, std::span<const double> x,
                     std::span<const double> dy, std::span<double> dW, std::span<double> db,
                     std::span<double> dx) {
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    double* drow = dW.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) drow[i] += g * x[i];
    if (!db.empty()) db[o] += g;
    if (!dx.empty()) {
      const double* row = W.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dx[i] += g * row[i];
    }
  }
}

TwoLayerScorer TwoLayerScorer::create(ParamSet& params, const std::string& prefix,
                                      std::size_t in_dim, std::size_t hidden, Rng& rng) {
  TwoLayerScorer s;
  s.in_dim_ = in_dim;
  s.hidden_ = hidden;
  s.w_ = params.add_normal(prefix + ".w1", hidden, in_dim, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
  s.b_ = params.add(prefix + ".b1", hidden, 1);
  s.v_ = params.add_normal(prefix + ".v", hidden, 1, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  return s;
}

TwoLayerScorer TwoLayerScorer::bind(const ParamSet& params, const std::string& prefix) {
  TwoLayerScorer s;
  s.w_ = params.index_of(prefix + ".w1");
  s.b_ = params.index_of(prefix + ".b1");
  s.v_ = params.index_of(prefix + ".v");
  s.hidden_ = params[s.w_].rows;
  s.in_dim_ = params[s.w_].cols;
  if (params[s.b_].size() != s.hidden_ || params[s.v_].size() != s.hidden_) {
    throw DataError("scorer '" + prefix + "' has inconsistent shapes");
  }
  return s;
}

double TwoLayerScorer::forward(const ParamSet& params, std::span<const double> in,
                               std::span<double> act) const {
  affine(params.values(w_), params.values(b_), in, act);
  for (auto& a : act) a = std::tanh(a);
  return dot(params.values(v_), act);
}

void TwoLayerScorer::backward(const ParamSet& params, std::span<const double> in,
                              std::span<const double> act, double ds, ParamSet& grad,
                              std::span<double> din) const {
  auto v = params.values(v_);
  auto dv = grad.values(v_);
  double pre[256];
  std::vector<double> pre_heap;
  std::span<double> dpre;
  if (hidden_ <= 256) {
    dpre = std::span<double>(pre, hidden_);
  } else {
    pre_heap.resize(hidden_);
    dpre = pre_heap;
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    dv[h] += ds * act[h];
    dpre[h] = ds * v[h] * (1.0 - act[h] * act[h]);
  }
  affine_backward(params.values(w_), in, dpre, grad.values(w_), grad.values(b_), din);
}

}  // namespace plbench::nn
