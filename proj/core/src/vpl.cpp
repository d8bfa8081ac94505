#include <algorithm>
#include <cmath>

#include "plbench/bt.hpp"
#include "plbench/error.hpp"
#include "plbench/models.hpp"
#include "plbench/nn.hpp"
#include "plbench/synthgen.hpp"
#include "model_internal.hpp"

namespace plbench {
namespace {

struct EncoderIndex {
  std::size_t w, b, mu_w, mu_b, lv_w, lv_b;

  static EncoderIndex bind(const ParamSet& p) {
    return {p.index_of("enc.w"),    p.index_of("enc.b"),    p.index_of("enc.mu_w"),
            p.index_of("enc.mu_b"), p.index_of("enc.lv_w"), p.index_of("enc.lv_b")};
  }
};

// Encoder input for one context pair: concat(gap, 2 * label - 1).
void context_token(const ContextPair& c, std::span<double> out) {
  std::copy(c.gap.begin(), c.gap.end(), out.begin());
  out[c.gap.size()] = c.label == 1 ? 1.0 : -1.0;
}

// Forward state of the encoder over one context set.
struct Encoding {
  std::size_t m = 0;
  std::vector<double> tokens;  // m x (f + 1)
  std::vector<double> act;     // m x hidden
  std::vector<double> pooled;  // hidden
  std::vector<double> mu;      // latent
  std::vector<double> logvar;  // latent
};

Encoding encode(const ParamSet& p, const EncoderIndex& e, std::span<const ContextPair* const> ctx) {
  Encoding out;
  const std::size_t hidden = p[e.w].rows;
  const std::size_t in = p[e.w].cols;
  const std::size_t latent = p[e.mu_w].rows;
  out.m = ctx.size();
  out.tokens.resize(out.m * in);
  out.act.resize(out.m * hidden);
  out.pooled.assign(hidden, 0.0);
  for (std::size_t j = 0; j < out.m; ++j) {
    std::span<double> tok(out.tokens.data() + j * in, in);
    std::span<double> a(out.act.data() + j * hidden, hidden);
    context_token(*ctx[j], tok);
    nn::affine(p.values(e.w), p.values(e.b), tok, a);
    for (std::size_t h = 0; h < hidden; ++h) {
      a[h] = std::tanh(a[h]);
      out.pooled[h] += a[h];
    }
  }
  const double inv_m = out.m > 0 ? 1.0 / static_cast<double>(out.m) : 0.0;
  for (auto& v : out.pooled) v *= inv_m;
  out.mu.resize(latent);
  out.logvar.resize(latent);
  nn::affine(p.values(e.mu_w), p.values(e.mu_b), out.pooled, out.mu);
  nn::affine(p.values(e.lv_w), p.values(e.lv_b), out.pooled, out.logvar);
  return out;
}

void encode_backward(const ParamSet& p, const EncoderIndex& e, const Encoding& enc,
                     std::span<const double> dmu, std::span<const double> dlogvar, ParamSet& g) {
  const std::size_t hidden = p[e.w].rows;
  const std::size_t in = p[e.w].cols;
  std::vector<double> dpool(hidden, 0.0);
  nn::affine_backward(p.values(e.mu_w), enc.pooled, dmu, g.values(e.mu_w), g.values(e.mu_b), dpool);
  nn::affine_backward(p.values(e.lv_w), enc.pooled, dlogvar, g.values(e.lv_w), g.values(e.lv_b),
                      dpool);
  const double inv_m = 1.0 / static_cast<double>(enc.m);
  std::vector<double> dpre(hidden);
  for (std::size_t j = 0; j < enc.m; ++j) {
    const double* a = enc.act.data() + j * hidden;
    for (std::size_t h = 0; h < hidden; ++h) dpre[h] = dpool[h] * inv_m * (1.0 - a[h] * a[h]);
    std::span<const double> tok(enc.tokens.data() + j * in, in);
    nn::affine_backward(p.values(e.w), tok, dpre, g.values(e.w), g.values(e.b), {});
  }
}

// Context indices for example `pos` of a user with `n` records: M distinct
// positions other than `pos`.
std::vector<std::size_t> draw_context(std::size_t n, std::size_t pos, std::size_t m, Rng& rng) {
  auto picks = rng.sample_without_replacement(n - 1, m);
  for (auto& k : picks) {
    if (k >= pos) ++k;
  }
  return picks;
}

}  // namespace

std::vector<ContextPair> to_context_pairs(const PreferenceDataset& data) {
  std::vector<ContextPair> out;
  out.reserve(data.size());
  for (const auto& r : data.records()) {
    ContextPair c;
    c.gap.resize(2 * data.dimension());
    feature_gap(r.x, r.y1, r.y2, c.gap);
    c.label = r.label;
    out.push_back(std::move(c));
  }
  return out;
}

VplObjective::VplObjective(const PreferenceDataset& data, const VplConfig& config)
    : config_(config) {
  const auto& users = data.users();
  f_ = make_pair_features(data, users);
  pairs_ = to_context_pairs(data);
  by_user_.resize(users.size());
  for (std::size_t i = 0; i < f_.size(); ++i) by_user_[f_.user_index[i]].push_back(i);
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (by_user_[u].size() < config.context + 1) {
      throw DataError("user '" + users[u] + "' has " + std::to_string(by_user_[u].size()) +
                      " records; the latent model needs at least " +
                      std::to_string(config.context + 1));
    }
  }
  pos_in_user_.resize(f_.size());
  for (const auto& list : by_user_) {
    for (std::size_t k = 0; k < list.size(); ++k) pos_in_user_[list[k]] = k;
  }
}

ParamSet VplObjective::init(const VplConfig& config, std::size_t feature_dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "vpl-init"));
  ParamSet p;
  const double hs = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  p.add_normal("enc.w", config.hidden, feature_dim + 1,
               1.0 / std::sqrt(static_cast<double>(feature_dim + 1)), rng);
  p.add("enc.b", config.hidden);
  p.add_normal("enc.mu_w", config.latent, config.hidden, hs, rng);
  p.add("enc.mu_b", config.latent);
  p.add_normal("enc.lv_w", config.latent, config.hidden, hs, rng);
  p.add("enc.lv_b", config.latent);
  nn::TwoLayerScorer::create(p, "dec", feature_dim + config.latent, config.hidden, rng);
  return p;
}

double VplObjective::evaluate(const ParamSet& params, std::span<const std::size_t> batch,
                              ParamSet* grad, std::uint64_t noise_seed) const {
  const auto enc_idx = EncoderIndex::bind(params);
  const auto dec = nn::TwoLayerScorer::bind(params, "dec");
  const std::size_t fd = f_.feature_dim;
  const std::size_t latent = params[enc_idx.mu_w].rows;
  const std::size_t hidden = dec.hidden();
  const std::size_t n = batch.size();
  const double beta = config_.beta;

  struct Example {
    Encoding enc;
    std::vector<double> eps, z;
    std::vector<double> in_plus, in_minus, act_plus, act_minus;
    double kl = 0.0;
  };
  std::vector<Example> ex(n);
  std::vector<ScorePair> scores(n);
  double kl_sum = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t i = batch[b];
    Example& e = ex[b];
    e.z.assign(latent, 0.0);
    if (latent > 0) {
      Rng rng(derive_seed(noise_seed, "vpl-example", i));
      const auto& list = by_user_[f_.user_index[i]];
      auto picks = draw_context(list.size(), pos_in_user_[i], config_.context, rng);
      std::vector<const ContextPair*> ctx;
      for (auto k : picks) ctx.push_back(&pairs_[list[k]]);
      e.enc = encode(params, enc_idx, ctx);
      e.eps = rng.normal_vector(latent);
      for (std::size_t l = 0; l < latent; ++l) {
        const double lv = e.enc.logvar[l];
        e.z[l] = e.enc.mu[l] + std::exp(0.5 * lv) * e.eps[l];
        e.kl += 0.5 * (e.enc.mu[l] * e.enc.mu[l] + std::exp(lv) - 1.0 - lv);
      }
    }
    kl_sum += e.kl;
    auto build = [&](std::span<const double> phi, std::vector<double>& in) {
      in.assign(phi.begin(), phi.end());
      in.insert(in.end(), e.z.begin(), e.z.end());
    };
    build(f_.plus_row(i), e.in_plus);
    build(f_.minus_row(i), e.in_minus);
    e.act_plus.resize(hidden);
    e.act_minus.resize(hidden);
    scores[b] = {dec.forward(params, e.in_plus, e.act_plus),
                 dec.forward(params, e.in_minus, e.act_minus)};
  }
  BtLoss l = bt_loss(scores);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double loss = l.loss + beta * kl_sum * inv_n;
  if (grad == nullptr) return loss;

  std::vector<double> din(fd + latent);
  std::vector<double> dmu(latent), dlv(latent);
  for (std::size_t b = 0; b < n; ++b) {
    Example& e = ex[b];
    std::fill(din.begin(), din.end(), 0.0);
    dec.backward(params, e.in_plus, e.act_plus, l.grad[b].r_plus, *grad, din);
    dec.backward(params, e.in_minus, e.act_minus, l.grad[b].r_minus, *grad, din);
    if (latent == 0) continue;
    for (std::size_t k = 0; k < latent; ++k) {
      const double dz = din[fd + k];
      const double lv = e.enc.logvar[k];
      const double sd = std::exp(0.5 * lv);
      dmu[k] = dz + beta * inv_n * e.enc.mu[k];
      dlv[k] = dz * e.eps[k] * 0.5 * sd + beta * inv_n * 0.5 * (std::exp(lv) - 1.0);
    }
    encode_backward(params, enc_idx, e.enc, dmu, dlv, *grad);
  }
  return loss;
}

Embedding vpl_encode_mean(const VplModel& model, std::span<const ContextPair> context) {
  if (model.config.latent == 0) return {};
  if (context.empty()) throw DataError("latent model needs at least one context pair");
  const auto idx = EncoderIndex::bind(model.params);
  std::vector<const ContextPair*> ctx;
  for (const auto& c : context) ctx.push_back(&c);
  Encoding enc = encode(model.params, idx, ctx);
  quantize_in_place(enc.mu);
  return enc.mu;
}

namespace {

// Seeded choice of M context pairs from a user's records (all of them when
// fewer are available).
std::vector<ContextPair> pick_context(const PreferenceDataset& pairs, std::size_t m,
                                      std::uint64_t seed) {
  auto all = to_context_pairs(pairs);
  if (all.size() <= m) return all;
  Rng rng(seed);
  auto picks = rng.sample_without_replacement(all.size(), m);
  std::vector<ContextPair> out;
  for (auto k : picks) out.push_back(all[k]);
  return out;
}

}  // namespace

void install_vpl_latent(PreferenceModel& model, const std::string& user_id,
                        const PreferenceDataset& pairs) {
  auto& vpl = std::get<VplModel>(model.model);
  auto ctx = pick_context(pairs, vpl.config.context,
                          derive_seed(model.seed, "vpl-context:" + user_id));
  vpl.user_latents[user_id] = vpl_encode_mean(vpl, ctx);
}

PreferenceModel train_vpl(const PreferenceDataset& train, const VplConfig& config,
                          const OptimConfig& optim, const PreferenceDataset* validation) {
  if (config.context == 0 || config.hidden == 0) {
    throw UsageError("latent model context size and width must be >= 1");
  }
  if (!(config.beta >= 0.0)) throw UsageError("kl weight must be >= 0");
  if (train.empty()) throw DataError("no training records");
  VplObjective objective(train, config);

  // Validation users need enough records to draw a context; others are left out.
  std::optional<VplObjective> val;
  if (validation != nullptr && !validation->empty()) {
    std::vector<std::size_t> keep;
    for (const auto& u : validation->users()) {
      auto idx = validation->indices_for_user(u);
      if (idx.size() >= config.context + 1) keep.insert(keep.end(), idx.begin(), idx.end());
    }
    std::sort(keep.begin(), keep.end());
    if (!keep.empty()) val.emplace(validation->subset(keep), config);
  }
  TrainResult r = optimize(objective, VplObjective::init(config, 2 * train.dimension(), optim.seed),
                           optim, val ? &*val : nullptr);
  r.params.quantize_values();

  PreferenceModel m;
  m.dimension = train.dimension();
  VplModel model;
  model.config = config;
  model.params = std::move(r.params);
  m.model = std::move(model);
  Json j;
  j["method"] = "vpl";
  j["latent"] = config.latent;
  j["beta"] = config.beta;
  j["context"] = config.context;
  j["hidden"] = config.hidden;
  j["optim"] = to_json(optim);
  m.config = std::move(j);
  m.seed = optim.seed;
  for (const auto& u : train.users()) install_vpl_latent(m, u, train.for_user(u));
  return m;
}

}  // namespace plbench
