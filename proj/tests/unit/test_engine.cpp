#include <cmath>
#include <limits>

#include "doctest.h"
#include "fixtures.hpp"
#include "plbench/bt.hpp"
#include "plbench/error.hpp"
#include "plbench/grad_check.hpp"
#include "plbench/models.hpp"
#include "plbench/nn.hpp"
#include "plbench/optim.hpp"
#include "plbench/synthgen.hpp"

using namespace plbench;

TEST_CASE("bt_prob values") {
  CHECK(bt_prob(1.3, 1.3) == 0.5);
  CHECK(bt_prob(std::log(3.0), 0.0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(bt_prob(2.5, 0.5) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
  CHECK(bt_prob(2.0, 0.0) == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(std::isfinite(log_sigmoid(-800.0)));
  CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
  CHECK(sigmoid(800.0) == 1.0);
}

TEST_CASE("bt_loss limits") {
  const std::vector<ScorePair> equal{{0.2, 0.2}, {-1.0, -1.0}, {3.0, 3.0}};
  CHECK(bt_loss(equal).loss == doctest::Approx(std::log(2.0)));
  const std::vector<ScorePair> far{{500.0, -500.0}};
  CHECK(bt_loss(far).loss < 1e-100);
}

TEST_CASE("bt_loss gradient matches central differences") {
  Rng rng(5);
  std::vector<ScorePair> s(16);
  for (auto& p : s) p = {2 * rng.normal(), 2 * rng.normal()};
  const auto l = bt_loss(s);
  const double h = 1e-6;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (int side = 0; side < 2; ++side) {
      auto up = s, down = s;
      (side ? up[i].r_minus : up[i].r_plus) += h;
      (side ? down[i].r_minus : down[i].r_plus) -= h;
      const double numeric = (bt_loss(up).loss - bt_loss(down).loss) / (2 * h);
      const double analytic = side ? l.grad[i].r_minus : l.grad[i].r_plus;
      CHECK(std::abs(numeric - analytic) <= 1e-6 * std::max(1e-3, std::abs(analytic)) + 1e-10);
    }
  }
}

TEST_CASE("ParamSet bookkeeping") {
  ParamSet p;
  Rng rng(1);
  p.add("a", 2, 3);
  p.add_normal("b", 4, 1, 0.1, rng);
  CHECK(p.total_size() == 10);
  CHECK_THROWS_AS(p.add("a", 1), UsageError);
  p.coord(7) = 2.0;
  CHECK(p.at("b").values[1] == 2.0);
  auto g = p.zeros_like();
  CHECK(g.same_shapes(p));
  g.coord(0) = 1.0;
  p.axpy(-3.0, g);
  CHECK(p.coord(0) == -3.0);
  p.quantize_values();  // the text form keeps 9 significant digits
  CHECK(param_set_from_json(to_json(p)) == p);
  p.coord(1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(p.all_finite());
}

TEST_CASE("affine backward matches its definition") {
  const std::vector<double> W{1, 2, 3, 4, 5, 6}, b{0.5, -0.5}, x{1, -1, 2};
  std::vector<double> y(2);
  nn::affine(W, b, x, y);
  CHECK(y == std::vector<double>{1 - 2 + 6 + 0.5, 4 - 5 + 12 - 0.5});
  std::vector<double> dW(6), db(2), dx(3);
  const std::vector<double> dy{1.0, 2.0};
  nn::affine_backward(W, x, dy, dW, db, dx);
  CHECK(dW == std::vector<double>{1, -1, 2, 2, -2, 4});
  CHECK(db == dy);
  CHECK(dx == std::vector<double>{9, 12, 15});
}

namespace {

PreferenceDataset separable(std::uint64_t seed) {
  return fixtures::linear_dataset({1.0, -0.5, 0.0, 0.0}, 200, {"u0"}, {false}, seed);
}

LinearBtObjective linear_objective(const PreferenceDataset& d) {
  std::vector<std::string> users{"u0"};
  return LinearBtObjective(make_pair_features(d, users));
}

double train_accuracy(const ParamSet& p, const PreferenceDataset& d) {
  const auto& w = p[0].values;
  int ok = 0;
  for (const auto& r : d.records()) {
    const auto f1 = feature_map(r.x, r.y1), f2 = feature_map(r.x, r.y2);
    double g = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) g += w[i] * (f1[i] - f2[i]);
    ok += ((g > 0) ? 1 : 0) == r.label;
  }
  return double(ok) / d.size();
}

}  // namespace

TEST_CASE("optimize with zero learning rate leaves parameters unchanged") {
  const auto d = separable(1);
  const auto obj = linear_objective(d);
  auto init = LinearBtObjective::init(4);
  init.coord(0) = 0.3;
  OptimConfig c;
  c.learning_rate = 0.0;
  c.epochs = 5;
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kSgd}) {
    c.optimizer = kind;
    CHECK(optimize(obj, init, c).params == init);
  }
}

TEST_CASE("optimize separates a linearly separable fixture") {
  const auto d = separable(2);
  const auto obj = linear_objective(d);
  OptimConfig c;
  c.epochs = 100;
  c.learning_rate = 0.05;
  const auto r = optimize(obj, LinearBtObjective::init(4), c);
  CHECK(train_accuracy(r.params, d) == 1.0);
  CHECK(r.trace.epochs.size() == 100);
  CHECK(r.trace.epochs.back().train_loss < r.trace.epochs.front().train_loss);
}

TEST_CASE("optimize is deterministic and honours patience") {
  const auto d = separable(3), v = separable(4);
  const auto obj = linear_objective(d), val = linear_objective(v);
  OptimConfig c;
  c.epochs = 50;
  c.seed = 7;
  const auto a = optimize(obj, LinearBtObjective::init(4), c, &val);
  const auto b = optimize(obj, LinearBtObjective::init(4), c, &val);
  CHECK(a.trace == b.trace);
  CHECK(a.params == b.params);
  CHECK(a.trace.epochs.back().validation_loss.has_value());
  // best params are those of the best validation epoch
  double best = 1e300;
  for (const auto& e : a.trace.epochs) best = std::min(best, *e.validation_loss);
  CHECK(val.full_loss(a.params, 0) == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("optimize reports non-finite loss as a numeric error") {
  const auto d = separable(5);
  const auto obj = linear_objective(d);
  auto init = LinearBtObjective::init(4);
  init.coord(0) = std::numeric_limits<double>::infinity();
  OptimConfig c;
  c.epochs = 1;
  CHECK_THROWS_AS(optimize(obj, init, c), NumericError);
}

TEST_CASE("optim config validation and json") {
  OptimConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(validate(c), UsageError);
  c.batch_size = 32;
  c.learning_rate = -1;
  CHECK_THROWS_AS(validate(c), UsageError);
  c.learning_rate = 0.5;
  c.optimizer = OptimizerKind::kSgd;
  CHECK(optim_config_from_json(to_json(c)) == c);
}

TEST_CASE("grad_check bounds") {
  const auto d = separable(6);
  const auto obj = linear_objective(d);
  Rng rng(2);
  auto p = LinearBtObjective::init(4);
  for (std::size_t i = 0; i < p.total_size(); ++i) p.coord(i) = rng.normal();
  std::vector<std::size_t> all(obj.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  CHECK(grad_check(as_loss_fn(obj, all, 0), p, 8, 1).max_error < 1e-6);

  // Two-layer tanh scorer: loss = log(1 + exp(s(in))).
  ParamSet q;
  const auto scorer = nn::TwoLayerScorer::create(q, "s", 5, 7, rng);
  const std::vector<double> in{0.3, -1.0, 0.5, 2.0, -0.2};
  const LossFn mlp = [&](const ParamSet& params, ParamSet* grad) {
    std::vector<double> act(7);
    const double s = scorer.forward(params, in, act);
    if (grad) scorer.backward(params, in, act, sigmoid(s), *grad, {});
    return -log_sigmoid(-s);
  };
  CHECK(grad_check(mlp, q, 50, 3).max_error < 1e-4);

  const LossFn constant = [](const ParamSet&, ParamSet*) { return 4.2; };
  CHECK(grad_check(constant, q, 20, 4).max_error < 1e-8);
}
